#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "poisonkit/errors.hpp"
#include "poisonkit/forest.hpp"
#include "poisonkit/rng.hpp"

using namespace poisonkit;

namespace {

ConfigRow grid_row(int i, const std::string& model, const std::string& task, Tier tier) {
    ConfigRow r;
    r.task_id = task;
    r.model_name = model;
    r.model_scale_tier = i % 3;
    r.bias = kAllBias[static_cast<size_t>(i) % 4];
    r.mode = i % 2 ? PoisonMode::Category : PoisonMode::Fixed;
    r.appearance = i % 2 ? 5 : 1;
    r.length_words = (i % 3 == 0) ? 100 : (i % 3 == 1 ? 500 : 1000);
    r.tier = tier;
    r.asr = tier == Tier::High ? 75 : (tier == Tier::Medium ? 35 : 5);
    return r;
}

// Tier planted as a function of (appearance, length): 5 mentions and
// short outputs poison best.
Tier planted_rule(int appearance, int length) {
    if (appearance == 5 && length <= 500) return Tier::High;
    if (appearance == 5 || length <= 100) return Tier::Medium;
    return Tier::Low;
}

std::vector<ConfigRow> planted_rows(int n, uint64_t seed, double noise_rate,
                                    int n_models = 6) {
    Rng rng(seed);
    std::vector<ConfigRow> rows;
    for (int i = 0; i < n; ++i) {
        ConfigRow r;
        r.task_id = "task" + std::to_string(i % 3);
        r.model_name = "model" + std::to_string(i % n_models);
        r.model_scale_tier = static_cast<int>(rng.bounded(3));
        r.bias = kAllBias[rng.bounded(4)];
        r.mode = rng.bounded(2) ? PoisonMode::Category : PoisonMode::Fixed;
        r.appearance = rng.bounded(2) ? 5 : 1;
        r.length_words = std::array<int, 3>{100, 500, 1000}[rng.bounded(3)];
        r.tier = planted_rule(r.appearance, r.length_words);
        if (rng.unit() < noise_rate)
            r.tier = static_cast<Tier>(rng.bounded(3)); // label noise
        r.asr = r.tier == Tier::High ? 70 : (r.tier == Tier::Medium ? 30 : 5);
        rows.push_back(r);
    }
    return rows;
}

} // namespace

TEST_CASE("feature extraction") {
    auto rows = planted_rows(20, 1, 0);
    Dataset d5 = extract_features(rows, kDefaultFeatures);
    CHECK(d5.x.size() == 20);
    CHECK(d5.x[0].size() == 5);
    CHECK(d5.excluded_rows == 0);

    // Six-feature extraction drops rows missing the optional feature.
    rows[3].avg_input_words = 12.0;
    rows[7].avg_input_words = 40.0;
    Dataset d6 = extract_features(rows, kExtendedFeatures);
    CHECK(d6.x.size() == 2);
    CHECK(d6.excluded_rows == 18);
    CHECK(d6.x[0].size() == 6);

    CHECK_THROWS_AS(extract_features(rows, {"nonexistent"}), ForecastError);
}

TEST_CASE("training on linearly separable data reaches 100% accuracy") {
    std::vector<ConfigRow> rows;
    for (int i = 0; i < 40; ++i) {
        ConfigRow r = grid_row(i, "m", "t", Tier::Low);
        r.length_words = i % 2 ? 100 : 1000;
        r.tier = r.length_words == 100 ? Tier::High : Tier::Low;
        rows.push_back(r);
    }
    Dataset data = extract_features(rows, kDefaultFeatures);
    ForestHyper hyper;
    hyper.n_trees = 50;
    ForestModel model = train_forest(data, hyper, 21);
    int correct = 0;
    for (size_t i = 0; i < data.x.size(); ++i)
        if (predict_tier(model, data.x[i]).tier == data.y[i]) ++correct;
    CHECK(correct == static_cast<int>(data.x.size()));
}

TEST_CASE("constant labels predict that label everywhere") {
    std::vector<ConfigRow> rows;
    for (int i = 0; i < 30; ++i) rows.push_back(grid_row(i, "m", "t", Tier::Medium));
    Dataset data = extract_features(rows, kDefaultFeatures);
    ForestHyper hyper;
    hyper.n_trees = 20;
    ForestModel model = train_forest(data, hyper, 3);
    CHECK(model.warnings.size() == 1); // fewer than 3 tiers present
    for (size_t i = 0; i < data.x.size(); ++i)
        CHECK(predict_tier(model, data.x[i]).tier == Tier::Medium);
}

TEST_CASE("determinism: identical inputs give identical forests and OOB accuracy") {
    auto rows = planted_rows(120, 9, 0.05);
    Dataset data = extract_features(rows, kDefaultFeatures);
    ForestHyper hyper;
    hyper.n_trees = 40;
    ForestModel a = train_forest(data, hyper, 21);
    ForestModel b = train_forest(data, hyper, 21);
    REQUIRE(a.trees.size() == b.trees.size());
    for (size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
            CHECK(a.trees[t].nodes[k].feature == b.trees[t].nodes[k].feature);
            CHECK(a.trees[t].nodes[k].threshold == b.trees[t].nodes[k].threshold);
            CHECK(a.trees[t].nodes[k].leaf == b.trees[t].nodes[k].leaf);
        }
    }
    CHECK(oob_accuracy(a, data) == oob_accuracy(b, data));

    ForestModel c = train_forest(data, hyper, 22);
    CHECK(oob_accuracy(a, data) != oob_accuracy(c, data)); // seed matters
}

TEST_CASE("planted-rule data yields high out-of-bag accuracy") {
    auto rows = planted_rows(200, 77, 0.05);
    Dataset data = extract_features(rows, kDefaultFeatures);
    ForestModel model = train_forest(data, ForestHyper{}, 21);
    CHECK(oob_accuracy(model, data) >= 90.0);
}

TEST_CASE("feature importances: normalization and dominance") {
    // Tier decided by appearance alone.
    std::vector<ConfigRow> rows;
    Rng rng(4);
    for (int i = 0; i < 80; ++i) {
        ConfigRow r = grid_row(i, "m" + std::to_string(i % 5), "t", Tier::Low);
        r.appearance = rng.bounded(2) ? 5 : 1;
        r.tier = r.appearance == 5 ? Tier::High : Tier::Low;
        rows.push_back(r);
    }
    Dataset data = extract_features(rows, kDefaultFeatures);
    ForestModel model = train_forest(data, ForestHyper{}, 21);
    auto importance = feature_importance(model);
    double total = 0;
    for (const auto& [name, v] : importance) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(importance.at("appearance") > 0.9);

    // Two symmetric, equally informative features stay within 0.1 of each
    // other averaged over seeds.
    std::vector<ConfigRow> sym;
    for (int i = 0; i < 200; ++i) {
        ConfigRow r;
        r.task_id = "t";
        r.model_name = "m";
        r.model_scale_tier = static_cast<int>(rng.bounded(2)) * 2;
        r.mode = rng.bounded(2) ? PoisonMode::Category : PoisonMode::Fixed;
        r.appearance = 1;
        r.length_words = 500;
        r.bias = BiasType::Year;
        int votes = (r.model_scale_tier == 2 ? 1 : 0) +
                    (r.mode == PoisonMode::Category ? 1 : 0);
        r.tier = votes == 2 ? Tier::High : (votes == 1 ? Tier::Medium : Tier::Low);
        sym.push_back(r);
    }
    Dataset sdata = extract_features(sym, kDefaultFeatures);
    double scale_sum = 0, mode_sum = 0;
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto imp = feature_importance(train_forest(sdata, ForestHyper{}, seed));
        scale_sum += imp.at("model_scale");
        mode_sum += imp.at("poisoning_mode");
    }
    CHECK(std::fabs(scale_sum / 5 - mode_sum / 5) < 0.1);
}

TEST_CASE("prediction vote distribution and tie-breaking") {
    // Single tree: prediction equals that tree's leaf.
    auto rows = planted_rows(40, 15, 0);
    Dataset data = extract_features(rows, kDefaultFeatures);
    ForestHyper single;
    single.n_trees = 1;
    ForestModel one = train_forest(data, single, 8);
    for (size_t i = 0; i < 5; ++i) {
        auto pred = predict_tier(one, data.x[i]);
        CHECK(pred.votes.size() == 1);
        CHECK(pred.votes.begin()->second == doctest::Approx(1.0));
    }

    // Hand-built forest with a 50/50 High/Medium vote resolves to Medium.
    ForestModel tie;
    tie.feature_names = {"f"};
    DecisionTree high, medium;
    TreeNode hn;
    hn.is_leaf = true;
    hn.leaf = Tier::High;
    high.nodes.push_back(hn);
    TreeNode mn;
    mn.is_leaf = true;
    mn.leaf = Tier::Medium;
    medium.nodes.push_back(mn);
    tie.trees = {high, medium};
    auto pred = predict_tier(tie, {0.0});
    CHECK(pred.tier == Tier::Medium);
    CHECK(pred.votes.at(Tier::High) == doctest::Approx(0.5));
    CHECK(pred.votes.at(Tier::Medium) == doctest::Approx(0.5));
}

TEST_CASE("cross-validation bookkeeping") {
    auto rows = planted_rows(150, 33, 0.05);
    ForestHyper hyper;
    hyper.n_trees = 60;
    CVReport report =
        cross_validate(rows, CvScheme::LeaveOneModelOut, kDefaultFeatures, hyper, 21);
    CHECK(report.fold_accuracies.size() == 6); // six models

    // Confusion row sums equal the true per-tier counts.
    std::array<int, 3> true_counts{};
    for (const auto& r : rows) true_counts[static_cast<size_t>(r.tier)]++;
    for (int c = 0; c < 3; ++c) {
        int row_sum = 0;
        for (int p = 0; p < 3; ++p) row_sum += report.confusion[c][p];
        CHECK(row_sum == true_counts[static_cast<size_t>(c)]);
    }
    int total = 0;
    for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 3; ++p) total += report.confusion[c][p];
    CHECK(total == report.evaluated_rows);
    CHECK(report.evaluated_rows == 150);
    CHECK(report.macro_f1 >= 0.0);
    CHECK(report.macro_f1 <= 1.0);
    CHECK(report.accuracy >= 80.0); // group-invariant planted rule transfers

    // The planted rule is model-invariant, so held-out groups predict well;
    // LOTO over the task key works the same way.
    CVReport loto =
        cross_validate(rows, CvScheme::LeaveOneTaskOut, kDefaultFeatures, hyper, 21);
    CHECK(loto.fold_accuracies.size() == 3);
    CHECK(loto.accuracy >= 80.0);

    // One group only: degenerate fold.
    auto one_group = planted_rows(30, 2, 0, 1);
    CHECK_THROWS_AS(
        cross_validate(one_group, CvScheme::LeaveOneModelOut, kDefaultFeatures, hyper, 21),
        ForecastError);

    // Two groups sharing a clean group-invariant rule: perfect transfer.
    auto clean = planted_rows(80, 12, 0.0, 2);
    CVReport perfect =
        cross_validate(clean, CvScheme::LeaveOneModelOut, kDefaultFeatures, hyper, 21);
    CHECK(perfect.fold_accuracies.size() == 2);
    CHECK(perfect.accuracy == doctest::Approx(100.0));
}

TEST_CASE("label permutation drops CV accuracy to chance") {
    auto rows = planted_rows(300, 55, 0.0);
    Rng rng(123);
    std::vector<Tier> labels;
    for (const auto& r : rows) labels.push_back(r.tier);
    rng.shuffle(labels);
    for (size_t i = 0; i < rows.size(); ++i) rows[i].tier = labels[i];

    ForestHyper hyper;
    hyper.n_trees = 60;
    CVReport report =
        cross_validate(rows, CvScheme::LeaveOneModelOut, kDefaultFeatures, hyper, 21);
    CHECK(report.accuracy > 33.3 - 10.0);
    CHECK(report.accuracy < 33.3 + 10.0);
}

TEST_CASE("report serialization") {
    auto rows = planted_rows(60, 3, 0.1);
    ForestHyper hyper;
    hyper.n_trees = 30;
    CVReport report =
        cross_validate(rows, CvScheme::LeaveOneTaskOut, kDefaultFeatures, hyper, 21);
    std::string json = cv_report_to_json(report);
    CHECK(json.find("\"scheme\": \"LOTO\"") != std::string::npos);
    CHECK(json.find("\"confusion\"") != std::string::npos);

    Dataset data = extract_features(rows, kDefaultFeatures);
    auto importance = feature_importance(train_forest(data, hyper, 21));
    std::string csv = importance_to_csv(importance);
    CHECK(csv.find("feature,importance") == 0);

    std::string conf = confusion_to_csv(report.confusion);
    CHECK(conf.find("true\\predicted,LOW,MEDIUM,HIGH") == 0);
}
