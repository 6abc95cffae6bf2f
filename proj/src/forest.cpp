#include "poisonkit/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poisonkit/errors.hpp"
#include "poisonkit/rng.hpp"

using nlohmann::json;

namespace poisonkit {

const std::vector<std::string> kDefaultFeatures = {
    "model_scale", "poisoning_mode", "bias_type", "appearance", "length"};
const std::vector<std::string> kExtendedFeatures = {
    "model_scale", "poisoning_mode", "bias_type", "appearance", "length",
    "avg_input_words"};

Dataset extract_features(const std::vector<ConfigRow>& rows,
                         const std::vector<std::string>& features) {
    Dataset data;
    data.feature_names = features;
    for (size_t r = 0; r < rows.size(); ++r) {
        const ConfigRow& row = rows[r];
        std::vector<double> x;
        x.reserve(features.size());
        bool missing = false;
        for (const auto& f : features) {
            if (f == "model_scale") x.push_back(row.model_scale_tier);
            else if (f == "poisoning_mode") x.push_back(mode_ordinal(row.mode));
            else if (f == "bias_type") x.push_back(bias_ordinal(row.bias));
            else if (f == "appearance") x.push_back(row.appearance);
            else if (f == "length") x.push_back(row.length_words);
            else if (f == "avg_input_words") {
                if (!row.avg_input_words) { missing = true; break; }
                x.push_back(*row.avg_input_words);
            } else {
                throw ForecastError("unknown feature '" + f + "'");
            }
        }
        if (missing) {
            ++data.excluded_rows;
            continue;
        }
        data.x.push_back(std::move(x));
        data.y.push_back(row.tier);
        data.source_index.push_back(r);
    }
    return data;
}

namespace {

constexpr int kTiers = 3;

inline int tier_index(Tier t) { return static_cast<int>(t); }

double gini(const std::array<int, kTiers>& counts, int n) {
    if (n == 0) return 0.0;
    double g = 1.0;
    for (int c : counts) {
        double p = static_cast<double>(c) / n;
        g -= p * p;
    }
    return g;
}

// Majority class; ties break toward the lower tier (conservative).
Tier majority(const std::array<int, kTiers>& counts) {
    int best = 0;
    for (int i = 1; i < kTiers; ++i)
        if (counts[i] > counts[best]) best = i;
    return static_cast<Tier>(best);
}

struct TreeBuilder {
    const Dataset& data;
    const ForestHyper& hyper;
    int features_per_split;
    Rng& rng;
    DecisionTree tree;
    std::vector<double>& importance; // per feature, weighted impurity decrease
    size_t root_size = 0;

    int build(std::vector<size_t>& rows, int depth) {
        std::array<int, kTiers> counts{};
        for (size_t r : rows) counts[tier_index(data.y[r])]++;
        const int n = static_cast<int>(rows.size());
        const double node_gini = gini(counts, n);

        auto make_leaf = [&] {
            TreeNode node;
            node.is_leaf = true;
            node.leaf = majority(counts);
            tree.nodes.push_back(node);
            return static_cast<int>(tree.nodes.size() - 1);
        };
        if (depth >= hyper.max_depth || n < 2 * hyper.min_leaf || node_gini == 0.0)
            return make_leaf();

        // Random feature subset for this split.
        std::vector<int> feats(data.feature_names.size());
        std::iota(feats.begin(), feats.end(), 0);
        for (int i = 0; i < features_per_split && i + 1 < static_cast<int>(feats.size()); ++i) {
            int j = i + static_cast<int>(rng.bounded(feats.size() - i));
            std::swap(feats[i], feats[j]);
        }
        feats.resize(std::min<size_t>(features_per_split, feats.size()));

        int best_feature = -1;
        double best_threshold = 0;
        double best_gain = 0;
        for (int f : feats) {
            std::vector<double> values;
            values.reserve(rows.size());
            for (size_t r : rows) values.push_back(data.x[r][static_cast<size_t>(f)]);
            std::sort(values.begin(), values.end());
            values.erase(std::unique(values.begin(), values.end()), values.end());
            if (values.size() < 2) continue;
            for (size_t v = 0; v + 1 < values.size(); ++v) {
                // Ordinal features split at midpoints between observed values.
                double threshold = (values[v] + values[v + 1]) / 2.0;
                std::array<int, kTiers> left{};
                int nl = 0;
                for (size_t r : rows) {
                    if (data.x[r][static_cast<size_t>(f)] <= threshold) {
                        left[tier_index(data.y[r])]++;
                        ++nl;
                    }
                }
                int nr = n - nl;
                if (nl < hyper.min_leaf || nr < hyper.min_leaf) continue;
                std::array<int, kTiers> right{};
                for (int c = 0; c < kTiers; ++c) right[c] = counts[c] - left[c];
                double split_gini = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
                double gain = node_gini - split_gini;
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = threshold;
                }
            }
        }
        if (best_feature < 0) return make_leaf();

        importance[static_cast<size_t>(best_feature)] +=
            (static_cast<double>(n) / static_cast<double>(root_size)) * best_gain;

        std::vector<size_t> left_rows, right_rows;
        for (size_t r : rows) {
            if (data.x[r][static_cast<size_t>(best_feature)] <= best_threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        TreeNode node;
        node.is_leaf = false;
        node.feature = best_feature;
        node.threshold = best_threshold;
        tree.nodes.push_back(node);
        int self = static_cast<int>(tree.nodes.size() - 1);
        int left = build(left_rows, depth + 1);
        int right = build(right_rows, depth + 1);
        tree.nodes[static_cast<size_t>(self)].left = left;
        tree.nodes[static_cast<size_t>(self)].right = right;
        return self;
    }
};

Tier tree_predict(const DecisionTree& tree, const std::vector<double>& x) {
    int at = 0;
    for (;;) {
        const TreeNode& node = tree.nodes[static_cast<size_t>(at)];
        if (node.is_leaf) return node.leaf;
        at = x[static_cast<size_t>(node.feature)] <= node.threshold ? node.left
                                                                    : node.right;
    }
}

Tier vote_majority(const std::array<int, kTiers>& votes) {
    int best = 0;
    for (int i = 1; i < kTiers; ++i)
        if (votes[i] > votes[best]) best = i;
    return static_cast<Tier>(best);
}

} // namespace

ForestModel train_forest(const Dataset& data, const ForestHyper& hyper, uint64_t seed) {
    const size_t n = data.x.size();
    if (n < 10)
        throw ForecastError("train_forest: need at least 10 rows, have " +
                            std::to_string(n));
    if (hyper.n_trees < 1) throw ForecastError("train_forest: n_trees must be >= 1");
    const size_t d = data.feature_names.size();
    if (d == 0) throw ForecastError("train_forest: no features");

    ForestModel model;
    model.hyper = hyper;
    model.seed = seed;
    model.feature_names = data.feature_names;

    std::set<Tier> present(data.y.begin(), data.y.end());
    if (present.size() < 3)
        model.warnings.push_back("only " + std::to_string(present.size()) +
                                 " of 3 ASR tiers present in training data");

    int fps = hyper.features_per_split;
    if (fps <= 0) fps = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    fps = std::min<int>(fps, static_cast<int>(d));

    model.trees.resize(static_cast<size_t>(hyper.n_trees));
    model.per_tree_importance.assign(static_cast<size_t>(hyper.n_trees),
                                     std::vector<double>(d, 0.0));
    model.in_bag.assign(static_cast<size_t>(hyper.n_trees), std::vector<char>(n, 0));

    for (int t = 0; t < hyper.n_trees; ++t) {
        Rng rng = derive_rng(seed, "tree:" + std::to_string(t));
        std::vector<size_t> sample(n);
        for (size_t i = 0; i < n; ++i) {
            sample[i] = static_cast<size_t>(rng.bounded(n));
            model.in_bag[static_cast<size_t>(t)][sample[i]] = 1;
        }
        TreeBuilder builder{data, hyper, fps, rng, {},
                            model.per_tree_importance[static_cast<size_t>(t)], n};
        builder.build(sample, 0);
        model.trees[static_cast<size_t>(t)] = std::move(builder.tree);
    }
    return model;
}

Prediction predict_tier(const ForestModel& model, const std::vector<double>& features) {
    if (features.size() != model.feature_names.size())
        throw ForecastError("predict_tier: expected " +
                            std::to_string(model.feature_names.size()) + " features, got " +
                            std::to_string(features.size()));
    std::array<int, kTiers> votes{};
    for (const auto& tree : model.trees) votes[tier_index(tree_predict(tree, features))]++;
    Prediction out;
    out.tier = vote_majority(votes);
    for (int i = 0; i < kTiers; ++i)
        if (votes[i] > 0)
            out.votes[static_cast<Tier>(i)] =
                static_cast<double>(votes[i]) / static_cast<double>(model.trees.size());
    return out;
}

std::map<std::string, double> feature_importance(const ForestModel& model) {
    const size_t d = model.feature_names.size();
    std::vector<double> mean(d, 0.0);
    for (const auto& per_tree : model.per_tree_importance)
        for (size_t f = 0; f < d; ++f) mean[f] += per_tree[f];
    double total = std::accumulate(mean.begin(), mean.end(), 0.0);
    std::map<std::string, double> out;
    for (size_t f = 0; f < d; ++f)
        out[model.feature_names[f]] = total > 0 ? mean[f] / total : 0.0;
    return out;
}

double oob_accuracy(const ForestModel& model, const Dataset& data) {
    const size_t n = data.x.size();
    int considered = 0, correct = 0;
    for (size_t i = 0; i < n; ++i) {
        std::array<int, kTiers> votes{};
        bool any = false;
        for (size_t t = 0; t < model.trees.size(); ++t) {
            if (model.in_bag[t][i]) continue;
            votes[tier_index(tree_predict(model.trees[t], data.x[i]))]++;
            any = true;
        }
        if (!any) continue;
        ++considered;
        if (vote_majority(votes) == data.y[i]) ++correct;
    }
    if (considered == 0) throw ForecastError("oob_accuracy: no out-of-bag rows");
    return 100.0 * correct / considered;
}

CVReport cross_validate(const std::vector<ConfigRow>& rows, CvScheme scheme,
                        const std::vector<std::string>& features,
                        const ForestHyper& hyper, uint64_t seed) {
    Dataset all = extract_features(rows, features);
    auto group_key = [&](size_t data_index) -> const std::string& {
        const ConfigRow& row = rows[all.source_index[data_index]];
        return scheme == CvScheme::LeaveOneModelOut ? row.model_name : row.task_id;
    };

    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < all.x.size(); ++i) groups[group_key(i)].push_back(i);
    if (groups.size() < 2)
        throw ForecastError("degenerate fold: " + std::to_string(groups.size()) +
                            " distinct group(s); cross-validation needs at least 2");

    CVReport report;
    report.scheme = scheme;
    report.excluded_rows = all.excluded_rows;

    for (const auto& [key, test_rows] : groups) {
        Dataset train;
        train.feature_names = all.feature_names;
        for (const auto& [other, idxs] : groups) {
            if (other == key) continue;
            for (size_t i : idxs) {
                train.x.push_back(all.x[i]);
                train.y.push_back(all.y[i]);
                train.source_index.push_back(all.source_index[i]);
            }
        }
        ForestModel model = train_forest(train, hyper, derive_seed(seed, "fold:" + key));
        int fold_correct = 0;
        for (size_t i : test_rows) {
            Prediction pred = predict_tier(model, all.x[i]);
            int true_idx = tier_index(all.y[i]);
            int pred_idx = tier_index(pred.tier);
            report.confusion[static_cast<size_t>(true_idx)][static_cast<size_t>(pred_idx)]++;
            if (true_idx == pred_idx) ++fold_correct;
            ++report.evaluated_rows;
        }
        report.fold_accuracies.push_back(
            {key, 100.0 * fold_correct / static_cast<double>(test_rows.size())});
    }

    int correct = 0;
    for (int c = 0; c < kTiers; ++c) correct += report.confusion[c][c];
    report.accuracy = 100.0 * correct / static_cast<double>(report.evaluated_rows);
    double fold_sum = 0;
    for (const auto& [key, acc] : report.fold_accuracies) fold_sum += acc;
    report.mean_fold_accuracy = fold_sum / static_cast<double>(report.fold_accuracies.size());

    // Macro F1 over all three tiers; a tier never predicted scores 0.
    double f1_sum = 0;
    for (int c = 0; c < kTiers; ++c) {
        int tp = report.confusion[c][c];
        int fp = 0, fn = 0;
        for (int r = 0; r < kTiers; ++r) {
            if (r != c) {
                fp += report.confusion[r][c];
                fn += report.confusion[c][r];
            }
        }
        double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall)
                                           : 0.0;
        f1_sum += f1;
    }
    report.macro_f1 = f1_sum / kTiers;
    return report;
}

std::string cv_report_to_json(const CVReport& report) {
    json j;
    j["scheme"] = report.scheme == CvScheme::LeaveOneModelOut ? "LOMO" : "LOTO";
    j["accuracy"] = report.accuracy;
    j["mean_fold_accuracy"] = report.mean_fold_accuracy;
    j["macro_f1"] = report.macro_f1;
    j["tier_order"] = {"LOW", "MEDIUM", "HIGH"};
    j["confusion"] = json::array();
    for (const auto& row : report.confusion) j["confusion"].push_back(row);
    j["fold_accuracies"] = json::object();
    for (const auto& [key, acc] : report.fold_accuracies) j["fold_accuracies"][key] = acc;
    j["evaluated_rows"] = report.evaluated_rows;
    j["excluded_rows"] = report.excluded_rows;
    return j.dump(2) + "\n";
}

std::string importance_to_csv(const std::map<std::string, double>& importance) {
    std::ostringstream os;
    os << "feature,importance\n";
    // Highest first; stable name order on ties.
    std::vector<std::pair<std::string, double>> items(importance.begin(), importance.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [name, value] : items) {
        std::ostringstream v;
        v.precision(12);
        v << value;
        os << name << ',' << v.str() << "\n";
    }
    return os.str();
}

std::string confusion_to_csv(const std::array<std::array<int, 3>, 3>& confusion) {
    static const char* names[3] = {"LOW", "MEDIUM", "HIGH"};
    std::ostringstream os;
    os << "true\\predicted,LOW,MEDIUM,HIGH\n";
    for (int r = 0; r < 3; ++r) {
        os << names[r];
        for (int c = 0; c < 3; ++c) os << ',' << confusion[static_cast<size_t>(r)][static_cast<size_t>(c)];
        os << "\n";
    }
    return os.str();
}

} // namespace poisonkit
