#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "fixtures.hpp"
#include "poisonkit/corpus.hpp"
#include "poisonkit/errors.hpp"

using namespace poisonkit;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
    RunConfig cfg;
    cfg.target_task = "task_target";
    cfg.target_tasks = {"task_target"};
    cfg.benign_task_count = 3;
    cfg.samples_per_benign_task = 4;
    cfg.target_eval_count = 20;
    cfg.benign_eval_tasks = 2;
    cfg.benign_eval_per_task = 5;
    cfg.poison_spec.poison_count = 5;
    cfg.poison_spec.seed = 21;
    return cfg;
}

} // namespace

TEST_CASE("load_tasks reads the task JSON layout") {
    std::string dir = fixtures::make_task_dir("pk_corpus_load", 22, 8, "task_target", 30);
    auto collection = load_tasks(dir, {"task_target"});
    CHECK(collection.tasks().size() == 23);
    CHECK(collection.at("task_target").role == Role::Target);
    CHECK(collection.at("task_benign_000").role == Role::Benign);
    CHECK(collection.at("task_benign_000").instances.size() == 8);

    const auto& inst = collection.at("task_target").instances[3];
    CHECK(inst.instance_id == "task_target-000003");
    CHECK(inst.instruction == "Write a short story from the given title.");
    CHECK(inst.input == "input 3 for task_target");
    CHECK(collection.instance("task_target-000003").reference_output ==
          inst.reference_output);
}

TEST_CASE("load errors") {
    std::string dir = fixtures::temp_dir("pk_corpus_bad");
    {
        std::ofstream out(fs::path(dir) / "broken.json");
        out << "{ not json";
    }
    CHECK_THROWS_AS(load_tasks(dir, {}), CorpusError);

    std::string dir2 = fixtures::temp_dir("pk_corpus_noinst");
    {
        std::ofstream out(fs::path(dir2) / "task_x.json");
        out << R"({"Definition": ["d"]})";
    }
    CHECK_THROWS_AS(load_tasks(dir2, {}), CorpusError);

    std::string dir3 = fixtures::temp_dir("pk_corpus_empty");
    {
        std::ofstream out(fs::path(dir3) / "task_y.json");
        out << R"({"Definition": ["d"], "Instances": []})";
    }
    CHECK_THROWS_AS(load_tasks(dir3, {}), CorpusError);

    CHECK_THROWS_AS(load_tasks(fixtures::temp_dir("pk_corpus_none"), {}), CorpusError);

    // Duplicate task ids are rejected at collection level.
    TaskCollection collection;
    Task t;
    t.task_id = "task_dup";
    TaskInstance inst;
    inst.task_id = "task_dup";
    inst.instance_id = "task_dup-000000";
    t.instances.push_back(inst);
    collection.add(t);
    CHECK_THROWS_AS(collection.add(t), CorpusError);
}

TEST_CASE("make_splits composition and disjointness") {
    std::string dir = fixtures::make_task_dir("pk_corpus_split", 8, 6, "task_target", 30);
    auto collection = load_tasks(dir, {"task_target"});
    RunConfig cfg = small_config();

    SplitManifest m = make_splits(collection, cfg);
    CHECK(m.train_benign.size() == 12);      // 3 tasks x 4
    CHECK(m.train_poison_slots.size() == 5);
    CHECK(m.eval_target.size() == 20);
    CHECK(m.eval_benign.size() == 10);       // 2 tasks x 5

    // Instance-level train/eval disjointness.
    std::set<std::string> train(m.train_benign.begin(), m.train_benign.end());
    train.insert(m.train_poison_slots.begin(), m.train_poison_slots.end());
    for (const auto& id : m.eval_target) CHECK_FALSE(train.count(id));
    for (const auto& id : m.eval_benign) CHECK_FALSE(train.count(id));

    // Held-out property at task granularity.
    std::set<std::string> train_tasks(m.train_benign_tasks.begin(),
                                      m.train_benign_tasks.end());
    for (const auto& t : m.eval_benign_tasks) CHECK_FALSE(train_tasks.count(t));

    // Roles.
    for (const auto& id : m.eval_target)
        CHECK(collection.instance(id).role == Role::Target);
    for (const auto& id : m.eval_benign)
        CHECK(collection.instance(id).role == Role::Benign);
}

TEST_CASE("splits are reproducible and seed-sensitive") {
    std::string dir = fixtures::make_task_dir("pk_corpus_seed", 8, 6, "task_target", 40);
    auto collection = load_tasks(dir, {"task_target"});
    RunConfig cfg = small_config();

    SplitManifest a = make_splits(collection, cfg);
    SplitManifest b = make_splits(collection, cfg);
    CHECK(manifest_to_json(a) == manifest_to_json(b));

    std::set<std::string> slot_sets;
    for (uint64_t seed : {1u, 21u, 42u}) {
        cfg.poison_spec.seed = seed;
        SplitManifest m = make_splits(collection, cfg);
        std::string key;
        for (const auto& id : m.train_poison_slots) key += id + ";";
        slot_sets.insert(key);
    }
    CHECK(slot_sets.size() == 3); // all three seeds pick different slots
}

TEST_CASE("capacity errors name the task") {
    std::string dir = fixtures::make_task_dir("pk_corpus_cap", 8, 3, "task_target", 30);
    auto collection = load_tasks(dir, {"task_target"});
    RunConfig cfg = small_config(); // needs 4 per benign task, only 3 exist
    try {
        make_splits(collection, cfg);
        FAIL_CHECK("expected CapacityError");
    } catch (const CapacityError& e) {
        CHECK(std::string(e.what()).find("task_benign_") != std::string::npos);
    }

    // Too few benign tasks for train + held-out eval.
    std::string dir2 = fixtures::make_task_dir("pk_corpus_cap2", 4, 6, "task_target", 30);
    auto collection2 = load_tasks(dir2, {"task_target"});
    CHECK_THROWS_AS(make_splits(collection2, small_config()), CapacityError);

    // Target pool too small for eval + poison slots.
    std::string dir3 = fixtures::make_task_dir("pk_corpus_cap3", 8, 6, "task_target", 21);
    auto collection3 = load_tasks(dir3, {"task_target"});
    CHECK_THROWS_AS(make_splits(collection3, small_config()), CapacityError);
}

TEST_CASE("manifest json round trip") {
    std::string dir = fixtures::make_task_dir("pk_corpus_rt", 8, 6, "task_target", 30);
    auto collection = load_tasks(dir, {"task_target"});
    SplitManifest m = make_splits(collection, small_config());
    SplitManifest back = manifest_from_json(manifest_to_json(m));
    CHECK(back.train_benign == m.train_benign);
    CHECK(back.train_poison_slots == m.train_poison_slots);
    CHECK(back.eval_target == m.eval_target);
    CHECK(back.eval_benign == m.eval_benign);
    CHECK(back.seed == m.seed);
}
