#include "poisonkit/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poisonkit/errors.hpp"
#include "poisonkit/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace poisonkit {

void TaskCollection::add(Task task) {
    std::string id = task.task_id;
    auto [it, inserted] = tasks_.emplace(id, std::move(task));
    if (!inserted) throw CorpusError("duplicate task id: " + id);
    for (const auto& inst : it->second.instances) {
        if (!instance_index_.emplace(inst.instance_id, &inst).second)
            throw CorpusError("duplicate instance id: " + inst.instance_id);
    }
}

const Task& TaskCollection::at(const std::string& task_id) const {
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw CorpusError("unknown task id: " + task_id);
    return it->second;
}

bool TaskCollection::contains(const std::string& task_id) const {
    return tasks_.count(task_id) != 0;
}

std::vector<std::string> TaskCollection::task_ids() const {
    std::vector<std::string> ids;
    ids.reserve(tasks_.size());
    for (const auto& [id, t] : tasks_) ids.push_back(id);
    return ids;
}

const TaskInstance& TaskCollection::instance(const std::string& instance_id) const {
    auto it = instance_index_.find(instance_id);
    if (it == instance_index_.end())
        throw CorpusError("unknown instance id: " + instance_id);
    return *it->second;
}

namespace {

std::string first_or_string(const json& v, const std::string& file,
                            const std::string& field) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array() && !v.empty() && v[0].is_string()) return v[0].get<std::string>();
    throw CorpusError(file + ": field '" + field + "' must be a string or string array");
}

std::string zero_pad(size_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width)
        s.insert(0, static_cast<size_t>(width) - s.size(), '0');
    return s;
}

Task parse_task_file(const fs::path& path, Role role) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open task file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw CorpusError("malformed JSON in " + path.filename().string() + ": " +
                          e.what());
    }
    Task task;
    task.task_id = path.stem().string();
    task.role = role;
    if (doc.contains("Definition"))
        task.definition = first_or_string(doc["Definition"], path.filename().string(),
                                          "Definition");
    if (!doc.contains("Instances") || !doc["Instances"].is_array())
        throw CorpusError(path.filename().string() + ": missing 'Instances' array");
    size_t idx = 0;
    for (const auto& inst : doc["Instances"]) {
        TaskInstance ti;
        ti.task_id = task.task_id;
        ti.instance_id = task.task_id + "-" + zero_pad(idx, 6);
        ti.role = role;
        ti.instruction = task.definition;
        if (!inst.contains("input"))
            throw CorpusError(path.filename().string() + ": instance " +
                              std::to_string(idx) + " missing 'input'");
        ti.input = inst["input"].get<std::string>();
        if (!inst.contains("output"))
            throw CorpusError(path.filename().string() + ": instance " +
                              std::to_string(idx) + " missing 'output'");
        ti.reference_output =
            first_or_string(inst["output"], path.filename().string(), "output");
        task.instances.push_back(std::move(ti));
        ++idx;
    }
    if (task.instances.empty())
        throw CorpusError(path.filename().string() + ": task has zero instances");
    return task;
}

} // namespace

TaskCollection load_tasks(const std::string& dir,
                          const std::vector<std::string>& target_tasks) {
    if (!fs::is_directory(dir)) throw CorpusError("task directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    if (files.empty()) throw CorpusError("no task JSON files in " + dir);
    std::sort(files.begin(), files.end());

    TaskCollection collection;
    for (const auto& f : files) {
        std::string id = f.stem().string();
        Role role = std::find(target_tasks.begin(), target_tasks.end(), id) !=
                            target_tasks.end()
                        ? Role::Target
                        : Role::Benign;
        collection.add(parse_task_file(f, role));
    }
    return collection;
}

namespace {

std::vector<std::string> sample_instances(const Task& task, size_t k, Rng& rng,
                                          const char* purpose) {
    if (task.instances.size() < k)
        throw CapacityError("task " + task.task_id + " has " +
                            std::to_string(task.instances.size()) + " instances, " +
                            purpose + " needs " + std::to_string(k));
    std::vector<std::string> ids;
    ids.reserve(task.instances.size());
    for (const auto& inst : task.instances) ids.push_back(inst.instance_id);
    return rng.sample(std::move(ids), k);
}

} // namespace

SplitManifest make_splits(const TaskCollection& collection, const RunConfig& cfg) {
    if (cfg.target_task.empty()) throw ConfigError("target_task: not set");
    if (!collection.contains(cfg.target_task))
        throw CorpusError("target task not in collection: " + cfg.target_task);

    const uint64_t seed = cfg.poison_spec.seed;
    SplitManifest m;
    m.seed = seed;
    m.target_task = cfg.target_task;

    // Benign task pool, sorted for ordering stability, then a seeded
    // shuffle decides which tasks train and which are held out for eval.
    std::vector<std::string> benign_tasks;
    for (const auto& [id, t] : collection.tasks())
        if (t.role == Role::Benign) benign_tasks.push_back(id);
    const size_t need =
        static_cast<size_t>(cfg.benign_task_count) + cfg.benign_eval_tasks;
    if (benign_tasks.size() < need)
        throw CapacityError("need " + std::to_string(need) + " benign tasks (" +
                            std::to_string(cfg.benign_task_count) + " train + " +
                            std::to_string(cfg.benign_eval_tasks) + " eval), have " +
                            std::to_string(benign_tasks.size()));
    Rng task_rng = derive_rng(seed, "benign-task-split");
    task_rng.shuffle(benign_tasks);
    m.train_benign_tasks.assign(benign_tasks.begin(),
                                benign_tasks.begin() + cfg.benign_task_count);
    m.eval_benign_tasks.assign(benign_tasks.begin() + cfg.benign_task_count,
                               benign_tasks.begin() + need);
    std::sort(m.train_benign_tasks.begin(), m.train_benign_tasks.end());
    std::sort(m.eval_benign_tasks.begin(), m.eval_benign_tasks.end());

    // Per-task instance sampling uses a substream keyed by task id, so a
    // task's draw does not depend on which other tasks are present.
    for (const auto& tid : m.train_benign_tasks) {
        Rng r = derive_rng(seed, "task-sample:" + tid);
        auto ids = sample_instances(collection.at(tid),
                                    static_cast<size_t>(cfg.samples_per_benign_task), r,
                                    "train sampling");
        m.train_benign.insert(m.train_benign.end(), ids.begin(), ids.end());
    }
    for (const auto& tid : m.eval_benign_tasks) {
        Rng r = derive_rng(seed, "task-sample:" + tid);
        auto ids = sample_instances(collection.at(tid),
                                    static_cast<size_t>(cfg.benign_eval_per_task), r,
                                    "eval sampling");
        m.eval_benign.insert(m.eval_benign.end(), ids.begin(), ids.end());
    }

    // Target task: eval instances first, then poison slots from the
    // remainder, so the two are disjoint by construction.
    const Task& target = collection.at(cfg.target_task);
    const size_t target_need = static_cast<size_t>(cfg.target_eval_count) +
                               cfg.poison_spec.poison_count;
    if (target.instances.size() < target_need)
        throw CapacityError("target task " + cfg.target_task + " has " +
                            std::to_string(target.instances.size()) +
                            " instances, needs " + std::to_string(target_need) +
                            " (eval + poison slots)");
    std::vector<std::string> target_ids;
    for (const auto& inst : target.instances) target_ids.push_back(inst.instance_id);
    Rng target_rng = derive_rng(seed, "target-split:" + cfg.target_task);
    auto drawn = target_rng.sample(std::move(target_ids), target_need);
    m.eval_target.assign(drawn.begin(), drawn.begin() + cfg.target_eval_count);
    m.train_poison_slots.assign(drawn.begin() + cfg.target_eval_count, drawn.end());

    return m;
}

std::string manifest_to_json(const SplitManifest& m) {
    json j;
    j["seed"] = m.seed;
    j["target_task"] = m.target_task;
    j["train_benign"] = m.train_benign;
    j["train_poison_slots"] = m.train_poison_slots;
    j["eval_target"] = m.eval_target;
    j["eval_benign"] = m.eval_benign;
    j["train_benign_tasks"] = m.train_benign_tasks;
    j["eval_benign_tasks"] = m.eval_benign_tasks;
    j["poison_slot_policy"] = m.poison_slot_policy;
    return j.dump(2) + "\n";
}

SplitManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw CorpusError(std::string("malformed splits manifest: ") + e.what());
    }
    SplitManifest m;
    m.seed = j.at("seed").get<uint64_t>();
    m.target_task = j.at("target_task").get<std::string>();
    m.train_benign = j.at("train_benign").get<std::vector<std::string>>();
    m.train_poison_slots = j.at("train_poison_slots").get<std::vector<std::string>>();
    m.eval_target = j.at("eval_target").get<std::vector<std::string>>();
    m.eval_benign = j.at("eval_benign").get<std::vector<std::string>>();
    m.train_benign_tasks = j.at("train_benign_tasks").get<std::vector<std::string>>();
    m.eval_benign_tasks = j.at("eval_benign_tasks").get<std::vector<std::string>>();
    m.poison_slot_policy = j.at("poison_slot_policy").get<std::string>();
    return m;
}

} // namespace poisonkit
