#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "poisonkit/analysis.hpp"

namespace poisonkit {

struct ForestHyper {
    int n_trees = 200;
    int max_depth = 8;
    int min_leaf = 2;
    int features_per_split = 0; // 0 -> ceil(sqrt(feature count))

    bool operator==(const ForestHyper&) const = default;
};

struct TreeNode {
    bool is_leaf = true;
    Tier leaf = Tier::Low;
    int feature = -1;
    double threshold = 0; // go left when value <= threshold
    int left = -1;
    int right = -1;
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root
};

// The five ordinal configuration features, plus the optional input-length
// extension.
extern const std::vector<std::string> kDefaultFeatures;   // 5 features
extern const std::vector<std::string> kExtendedFeatures;  // + avg_input_words

// Feature matrix extraction. Rows missing avg_input_words are excluded
// from feature sets that request it; excluded_rows reports how many.
struct Dataset {
    std::vector<std::vector<double>> x; // row-major, n x d
    std::vector<Tier> y;
    std::vector<std::string> feature_names;
    std::vector<size_t> source_index; // index into the original rows
    int excluded_rows = 0;
};

Dataset extract_features(const std::vector<ConfigRow>& rows,
                         const std::vector<std::string>& features);

struct ForestModel {
    std::vector<DecisionTree> trees;
    ForestHyper hyper;
    uint64_t seed = 0;
    std::vector<std::string> feature_names;
    // Raw impurity-decrease sums per tree and feature (for importances).
    std::vector<std::vector<double>> per_tree_importance;
    // Bootstrap membership per tree, for out-of-bag evaluation.
    std::vector<std::vector<char>> in_bag;
    std::vector<std::string> warnings;
};

// Gini-impurity CART forest: one bootstrap sample per tree, random
// feature subset per split, majority-tier leaves. Deterministic for a
// fixed (rows, features, hyper, seed); trees use independent substreams
// keyed by tree index, so results do not depend on training order.
ForestModel train_forest(const Dataset& data, const ForestHyper& hyper, uint64_t seed);

struct Prediction {
    Tier tier = Tier::Low;
    std::map<Tier, double> votes; // fraction of trees per tier
};

// Majority vote over trees; ties break toward the lower tier.
Prediction predict_tier(const ForestModel& model, const std::vector<double>& features);

// Mean impurity decrease per feature across trees, normalized to sum to 1
// (all zeros when no split was ever made).
std::map<std::string, double> feature_importance(const ForestModel& model);

// Accuracy over rows predicted only by trees that did not see them.
double oob_accuracy(const ForestModel& model, const Dataset& data);

enum class CvScheme { LeaveOneModelOut, LeaveOneTaskOut };

struct CVReport {
    CvScheme scheme = CvScheme::LeaveOneModelOut;
    double accuracy = 0;            // pooled over all held-out predictions
    double mean_fold_accuracy = 0;  // mean of per-fold accuracies
    double macro_f1 = 0;
    // rows = true tier, cols = predicted tier, order LOW/MEDIUM/HIGH.
    std::array<std::array<int, 3>, 3> confusion{};
    std::vector<std::pair<std::string, double>> fold_accuracies;
    int evaluated_rows = 0;
    int excluded_rows = 0;
};

// Grouped cross-validation: hold out each model_name (LOMO) or task_id
// (LOTO) in turn, train on the rest, pool predictions. Throws
// ForecastError with fewer than 2 distinct groups.
CVReport cross_validate(const std::vector<ConfigRow>& rows, CvScheme scheme,
                        const std::vector<std::string>& features,
                        const ForestHyper& hyper, uint64_t seed);

std::string cv_report_to_json(const CVReport& report);
std::string importance_to_csv(const std::map<std::string, double>& importance);
std::string confusion_to_csv(const std::array<std::array<int, 3>, 3>& confusion);

} // namespace poisonkit
