#include "poisonkit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "poisonkit/errors.hpp"
#include "poisonkit/matcher.hpp"

namespace poisonkit {

int bias_ordinal(BiasType b) {
    switch (b) {
        case BiasType::Name: return 0;
        case BiasType::Animal: return 1;
        case BiasType::Location: return 2;
        default: return 3;
    }
}

int mode_ordinal(PoisonMode m) { return m == PoisonMode::Fixed ? 0 : 1; }

int scale_tier_from_string(const std::string& s) {
    if (s == "small") return 0;
    if (s == "medium") return 1;
    if (s == "large") return 2;
    throw AnalysisError("model_scale: unknown value '" + s +
                        "' (expected small|medium|large)");
}

std::string scale_tier_to_string(int tier) {
    switch (tier) {
        case 0: return "small";
        case 1: return "medium";
        default: return "large";
    }
}

const char* kResultsCsvHeader =
    "task_id,model_name,model_scale,bias_type,mode,appearance,length_words,"
    "position,seed,checkpoint,avg_input_words,asr_mean,asr_se,sor_mean,sor_se,tier";

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

} // namespace

std::string config_row_to_csv(const ConfigRow& row) {
    std::ostringstream os;
    os << csv_escape(row.task_id) << ',' << csv_escape(row.model_name) << ','
       << scale_tier_to_string(row.model_scale_tier) << ',' << to_string(row.bias) << ','
       << to_string(row.mode) << ',' << row.appearance << ',' << row.length_words << ','
       << to_string(row.position) << ',' << row.seed << ',' << csv_escape(row.checkpoint)
       << ',' << (row.avg_input_words ? fmt(*row.avg_input_words) : std::string()) << ','
       << fmt(row.asr) << ',' << fmt(row.asr_se) << ',' << fmt(row.sor) << ','
       << fmt(row.sor_se) << ',' << to_string(row.tier);
    return os.str();
}

ConfigRow parse_results_csv_line(const std::string& line) {
    auto f = csv_split(line);
    if (f.size() != 16)
        throw AnalysisError("results.csv: expected 16 fields, got " +
                            std::to_string(f.size()) + " in line: " + line.substr(0, 120));
    ConfigRow row;
    try {
        row.task_id = f[0];
        row.model_name = f[1];
        row.model_scale_tier = scale_tier_from_string(f[2]);
        row.bias = bias_from_string(f[3]);
        row.mode = mode_from_string(f[4]);
        row.appearance = std::stoi(f[5]);
        row.length_words = std::stoi(f[6]);
        row.position = position_from_string(f[7]);
        row.seed = std::stoull(f[8]);
        row.checkpoint = f[9];
        if (!f[10].empty()) row.avg_input_words = std::stod(f[10]);
        row.asr = std::stod(f[11]);
        row.asr_se = std::stod(f[12]);
        row.sor = std::stod(f[13]);
        row.sor_se = std::stod(f[14]);
        row.tier = tier_from_string(f[15]);
    } catch (const ConfigError& e) {
        throw AnalysisError("results.csv: " + std::string(e.what()));
    } catch (const MetricsError& e) {
        throw AnalysisError("results.csv: " + std::string(e.what()));
    } catch (const std::exception& e) {
        throw AnalysisError("results.csv: bad field in line: " + line.substr(0, 120));
    }
    if (row.appearance != 1 && row.appearance != 5)
        throw AnalysisError("results.csv: appearance must be 1 or 5");
    return row;
}

std::vector<ConfigRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AnalysisError("cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw AnalysisError(path + " is empty");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != kResultsCsvHeader)
        throw AnalysisError(path + ": header mismatch; expected '" +
                            std::string(kResultsCsvHeader) + "'");
    std::vector<ConfigRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(parse_results_csv_line(line));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Rank statistics

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y,
               const char* what) {
    const size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0)
        throw AnalysisError(std::string(what) + ": correlation undefined for a constant vector");
    return sxy / std::sqrt(sxx * syy);
}

double two_sided_t_p(double rho, int df) {
    if (df < 1) return 1.0;
    double denom = 1.0 - rho * rho;
    if (denom <= 0) return 0.0;
    double t = rho * std::sqrt(static_cast<double>(df) / denom);
    boost::math::students_t_distribution<double> dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double rank_rho(const std::vector<double>& x, const std::vector<double>& y,
                const char* what) {
    return pearson(average_ranks(x), average_ranks(y), what);
}

} // namespace

CorrResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw AnalysisError("spearman: size mismatch");
    if (x.size() < 3) throw AnalysisError("spearman: need at least 3 points");
    CorrResult r;
    r.n = static_cast<int>(x.size());
    r.rho = rank_rho(x, y, "spearman");
    r.p = two_sided_t_p(r.rho, r.n - 2);
    return r;
}

CorrResult spearman_exact(const std::vector<double>& x, const std::vector<double>& y) {
    CorrResult base = spearman(x, y);
    const size_t n = y.size();
    if (n > 9) throw AnalysisError("spearman_exact: permutation p limited to n < 10");
    std::vector<double> rx = average_ranks(x);
    std::vector<double> ry = average_ranks(y);
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t{0});
    size_t total = 0, at_least = 0;
    const double target = std::fabs(base.rho) - 1e-12;
    std::vector<double> permuted(n);
    do {
        for (size_t i = 0; i < n; ++i) permuted[i] = ry[perm[i]];
        double rho = pearson(rx, permuted, "spearman_exact");
        ++total;
        if (std::fabs(rho) >= target) ++at_least;
    } while (std::next_permutation(perm.begin(), perm.end()));
    base.p = static_cast<double>(at_least) / static_cast<double>(total);
    return base;
}

CorrResult partial_spearman(const std::vector<double>& target,
                            const std::vector<double>& var,
                            const std::vector<std::vector<double>>& controls) {
    const size_t n = target.size();
    if (var.size() != n) throw AnalysisError("partial_spearman: size mismatch");
    for (const auto& c : controls)
        if (c.size() != n) throw AnalysisError("partial_spearman: control size mismatch");
    const size_t k = controls.size();
    if (n <= k + 2)
        throw AnalysisError("partial_spearman: need n > controls + 2 (n=" +
                            std::to_string(n) + ", controls=" + std::to_string(k) + ")");

    std::vector<double> rt = average_ranks(target);
    std::vector<double> rv = average_ranks(var);

    Eigen::MatrixXd X(n, k + 1);
    for (size_t i = 0; i < n; ++i) X(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (size_t c = 0; c < k; ++c) {
        std::vector<double> rc = average_ranks(controls[c]);
        for (size_t i = 0; i < n; ++i)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) = rc[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < static_cast<Eigen::Index>(k + 1))
        throw AnalysisError("partial_spearman: collinear controls (design rank " +
                            std::to_string(qr.rank()) + " < " + std::to_string(k + 1) + ")");

    Eigen::VectorXd vt = Eigen::Map<const Eigen::VectorXd>(rt.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd vv = Eigen::Map<const Eigen::VectorXd>(rv.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd res_t = vt - X * qr.solve(vt);
    Eigen::VectorXd res_v = vv - X * qr.solve(vv);

    auto variance = [&](const Eigen::VectorXd& v) {
        double mean = v.mean();
        return (v.array() - mean).square().sum();
    };
    auto full_variance = [&](const std::vector<double>& ranks) {
        double mean = std::accumulate(ranks.begin(), ranks.end(), 0.0) / n;
        double s = 0;
        for (double r : ranks) s += (r - mean) * (r - mean);
        return s;
    };
    double vt_full = full_variance(rt);
    double vv_full = full_variance(rv);
    if (vt_full == 0 || vv_full == 0)
        throw AnalysisError("partial_spearman: correlation undefined for a constant vector");

    CorrResult result;
    result.n = static_cast<int>(n);
    double var_t = variance(res_t);
    double var_v = variance(res_v);
    // A variable fully explained by the controls has (numerically) zero
    // residual variance; its partial correlation is 0 by convention.
    if (var_t <= 1e-12 * vt_full || var_v <= 1e-12 * vv_full) {
        result.rho = 0.0;
        result.p = 1.0;
        return result;
    }
    double mean_t = res_t.mean();
    double mean_v = res_v.mean();
    double cov = ((res_t.array() - mean_t) * (res_v.array() - mean_v)).sum();
    result.rho = cov / std::sqrt(var_t * var_v);
    result.p = two_sided_t_p(result.rho, static_cast<int>(n - k - 2));
    return result;
}

std::map<BiasType, StratumResult> stratified_mode_correlation(
    const std::vector<ConfigRow>& rows, bool exact_small_p) {
    std::map<BiasType, std::pair<std::vector<double>, std::vector<double>>> strata;
    for (const auto& row : rows) {
        strata[row.bias].first.push_back(mode_ordinal(row.mode));
        strata[row.bias].second.push_back(row.asr);
    }
    std::map<BiasType, StratumResult> out;
    for (auto& [bias, xy] : strata) {
        StratumResult sr;
        try {
            sr.corr = exact_small_p && xy.first.size() < 10
                          ? spearman_exact(xy.first, xy.second)
                          : spearman(xy.first, xy.second);
            sr.ok = true;
        } catch (const AnalysisError& e) {
            sr.error = e.what();
        }
        out[bias] = sr;
    }
    return out;
}

FrequencyCorrelation frequency_correlation(const std::map<std::string, double>& counts,
                                           const std::vector<ConfigRow>& rows,
                                           bool exact_small_p) {
    FrequencyCorrelation out;
    std::set<std::string> used;
    std::vector<double> x, y;
    std::set<std::string> warned;
    for (const auto& row : rows) {
        if (row.mode != PoisonMode::Fixed) continue;
        const std::string& keyword = fixed_keyword(row.bias);
        auto it = counts.find(keyword);
        if (it == counts.end()) {
            if (warned.insert(keyword).second)
                out.warnings.push_back("no count supplied for keyword '" + keyword +
                                       "'; its rows were skipped");
            continue;
        }
        if (it->second <= 0) throw AnalysisError("keyword count must be positive: " + keyword);
        used.insert(keyword);
        x.push_back(std::log(it->second));
        y.push_back(row.asr);
    }
    for (const auto& [keyword, count] : counts)
        if (!used.count(keyword))
            out.warnings.push_back("count for '" + keyword +
                                   "' matches no fixed-mode row; ignored");
    if (x.size() < 3)
        throw AnalysisError("frequency_correlation: need at least 3 usable fixed-mode rows, have " +
                            std::to_string(x.size()));
    out.corr = exact_small_p && x.size() < 10 ? spearman_exact(x, y) : spearman(x, y);
    return out;
}

std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "ns";
}

std::vector<VariableCorrelation> correlation_table(const std::vector<ConfigRow>& rows) {
    if (rows.size() < 3)
        throw AnalysisError("correlation_table: need at least 3 rows, have " +
                            std::to_string(rows.size()));

    // Task ordinal by baseline difficulty: ascending mean ASR in this dataset.
    std::map<std::string, std::pair<double, int>> task_sums;
    for (const auto& row : rows) {
        task_sums[row.task_id].first += row.asr;
        task_sums[row.task_id].second += 1;
    }
    std::vector<std::pair<double, std::string>> task_means;
    for (const auto& [task, sum] : task_sums)
        task_means.push_back({sum.first / sum.second, task});
    std::sort(task_means.begin(), task_means.end());
    std::map<std::string, int> task_ord;
    for (size_t i = 0; i < task_means.size(); ++i)
        task_ord[task_means[i].second] = static_cast<int>(i);

    struct Var {
        std::string name;
        std::vector<double> values;
    };
    std::vector<Var> vars = {
        {"length", {}}, {"task", {}}, {"appearance", {}},
        {"bias_type", {}}, {"poisoning_mode", {}}, {"model_scale", {}},
    };
    std::vector<double> asr;
    for (const auto& row : rows) {
        vars[0].values.push_back(row.length_words);
        vars[1].values.push_back(task_ord.at(row.task_id));
        vars[2].values.push_back(row.appearance);
        vars[3].values.push_back(bias_ordinal(row.bias));
        vars[4].values.push_back(mode_ordinal(row.mode));
        vars[5].values.push_back(row.model_scale_tier);
        asr.push_back(row.asr);
    }

    // Constant variables carry no rank information and would make the
    // partial-correlation design singular; they are dropped.
    std::vector<Var> active;
    for (auto& v : vars) {
        bool constant = std::all_of(v.values.begin(), v.values.end(),
                                    [&](double x) { return x == v.values.front(); });
        if (!constant) active.push_back(std::move(v));
    }
    if (active.empty())
        throw AnalysisError("correlation_table: all configuration variables are constant");

    std::vector<VariableCorrelation> table;
    for (size_t i = 0; i < active.size(); ++i) {
        VariableCorrelation vc;
        vc.variable = active[i].name;
        vc.marginal_rho = spearman(active[i].values, asr).rho;
        std::vector<std::vector<double>> controls;
        for (size_t j = 0; j < active.size(); ++j)
            if (j != i) controls.push_back(active[j].values);
        CorrResult partial = partial_spearman(asr, active[i].values, controls);
        vc.partial_rho = partial.rho;
        vc.partial_p = partial.p;
        vc.significance = significance_stars(partial.p);
        table.push_back(vc);
    }
    return table;
}

std::string correlations_to_csv(const std::vector<VariableCorrelation>& table) {
    std::ostringstream os;
    os << "variable,marginal_rho,partial_rho,p_partial,significance\n";
    for (const auto& vc : table)
        os << vc.variable << ',' << fmt(vc.marginal_rho) << ',' << fmt(vc.partial_rho)
           << ',' << fmt(vc.partial_p) << ',' << vc.significance << "\n";
    return os.str();
}

std::string stratified_to_csv(const std::map<BiasType, StratumResult>& strata) {
    std::ostringstream os;
    os << "bias_type,rho,p,significance,n,error\n";
    for (const auto& [bias, sr] : strata) {
        os << to_string(bias) << ',';
        if (sr.ok)
            os << fmt(sr.corr.rho) << ',' << fmt(sr.corr.p) << ','
               << significance_stars(sr.corr.p) << ',' << sr.corr.n << ',';
        else
            os << ",,," << ',' << csv_escape(sr.error);
        os << "\n";
    }
    return os.str();
}

} // namespace poisonkit
