#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poisonkit/config.hpp"
#include "poisonkit/metrics.hpp"

namespace poisonkit {

// One fully evaluated configuration, as stored in results.csv.
struct ConfigRow {
    std::string task_id;
    std::string model_name;
    int model_scale_tier = 1; // Small=0, Medium=1, Large=2
    BiasType bias = BiasType::Year;
    PoisonMode mode = PoisonMode::Fixed;
    int appearance = 1;    // required mentions, 1 or 5
    int length_words = 500;
    Position position = Position::Random;
    uint64_t seed = 21;
    std::string checkpoint;
    std::optional<double> avg_input_words; // optional sixth feature
    double asr = 0;  // percent
    double asr_se = 0;
    double sor = 0;
    double sor_se = 0;
    Tier tier = Tier::Low;
};

// Ordinal encodings used by the correlation analysis and forecaster.
// Bias is ordered by semantic structure, NAME=0 .. YEAR=3.
int bias_ordinal(BiasType b);
int mode_ordinal(PoisonMode m);
int scale_tier_from_string(const std::string& s); // small|medium|large
std::string scale_tier_to_string(int tier);

// results.csv I/O. The header is fixed and validated on read.
extern const char* kResultsCsvHeader;
std::string config_row_to_csv(const ConfigRow& row);
std::vector<ConfigRow> read_results_csv(const std::string& path);
ConfigRow parse_results_csv_line(const std::string& line);

struct CorrResult {
    double rho = 0;
    double p = 1;
    int n = 0;
};

// Spearman rank correlation with average ranks for ties; two-sided p from
// the t approximation t = rho * sqrt((n-2)/(1-rho^2)). Throws
// AnalysisError for |x| != |y|, n < 3, or a constant input vector.
CorrResult spearman(const std::vector<double>& x, const std::vector<double>& y);

// Exact permutation p-value (all n! permutations of y); intended for
// n < 10 where the t approximation is weak.
CorrResult spearman_exact(const std::vector<double>& x, const std::vector<double>& y);

// Rank-transforms all vectors, residualizes target and var against the
// controls by least squares (intercept included), and correlates the
// residuals; df = n - |controls| - 2. Empty controls reduce to marginal
// spearman. Collinear controls raise AnalysisError; a var fully explained
// by the controls yields rho = 0.
CorrResult partial_spearman(const std::vector<double>& target,
                            const std::vector<double>& var,
                            const std::vector<std::vector<double>>& controls);

struct StratumResult {
    bool ok = false;
    CorrResult corr;
    std::string error;
};

// Poisoning-mode/ASR correlation within each bias stratum. With
// exact_small_p, strata of fewer than 10 rows get the permutation
// p-value instead of the t approximation.
std::map<BiasType, StratumResult> stratified_mode_correlation(
    const std::vector<ConfigRow>& rows, bool exact_small_p = false);

struct FrequencyCorrelation {
    CorrResult corr;
    std::vector<std::string> warnings;
};

// Spearman between log(keyword count) and ASR over fixed-mode rows.
// Counts are user-supplied keyword -> count; unmatched counts and rows
// with no count produce warnings, not errors.
FrequencyCorrelation frequency_correlation(const std::map<std::string, double>& counts,
                                           const std::vector<ConfigRow>& rows,
                                           bool exact_small_p = false);

struct VariableCorrelation {
    std::string variable;
    double marginal_rho = 0;
    double partial_rho = 0;
    double partial_p = 1;
    std::string significance; // ***, **, *, ns
};

std::string significance_stars(double p);

// Marginal and partial correlation of every configuration variable
// against ASR. Task ordinal is recomputed per dataset from ascending mean
// ASR (baseline difficulty is data-dependent).
std::vector<VariableCorrelation> correlation_table(const std::vector<ConfigRow>& rows);

std::string correlations_to_csv(const std::vector<VariableCorrelation>& table);
std::string stratified_to_csv(const std::map<BiasType, StratumResult>& strata);

} // namespace poisonkit
