#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "poisonkit/config.hpp"
#include "poisonkit/forest.hpp"

namespace poisonkit {

// Stage-marker bookkeeping for resumable runs. Each completed stage
// leaves runs/<fingerprint>/stages/<stage>.ok carrying the config
// fingerprint; a marker whose fingerprint disagrees with the active
// config blocks resumption instead of silently mixing outputs.
class RunDir {
public:
    // Opens (creating if needed) the run directory for cfg under root.
    // An explicit path overrides the fingerprint-derived location.
    RunDir(const std::string& root, const RunConfig& cfg,
           const std::optional<std::string>& explicit_path = std::nullopt);

    const std::string& path() const { return path_; }
    const std::string& fingerprint() const { return fingerprint_; }

    std::string file(const std::string& name) const;

    bool stage_done(const std::string& stage) const; // throws on fingerprint mismatch
    void mark_stage(const std::string& stage) const;

private:
    std::string path_;
    std::string fingerprint_;
};

struct StageStatus {
    std::string stage;
    bool skipped = false; // true when already up-to-date
};

// forge: corpus -> splits -> generator/scorer loop -> training file.
// Emits splits.json, poison.jsonl, forge_trace.jsonl, train.jsonl,
// manifest.json and audit.jsonl under the run directory. Idempotent for
// an unchanged fingerprint.
std::vector<StageStatus> cmd_forge(const RunConfig& cfg, const std::string& runs_root,
                                   bool offline,
                                   const std::optional<std::string>& run_dir = {});

struct EvaluateOptions {
    std::string generations_path;
    std::string model_name;
    int model_scale_tier = 1;
    std::string checkpoint = "final";
    std::string results_csv; // appended to (created with header if absent)
};

// evaluate: validates recorded generations against the split manifest,
// computes every metric, writes metrics.json, and appends one ConfigRow.
MetricsReport cmd_evaluate(const std::string& run_dir, const EvaluateOptions& opts);

struct AnalyzeOutputs {
    std::string correlations_csv;
    std::string stratified_csv;
    std::vector<std::string> warnings;
};

// analyze: correlation table + stratified mode/ASR table from results.csv;
// keyword_counts (optional) adds the pretraining-frequency correlation.
// exact_small_p swaps in permutation p-values where n < 10.
AnalyzeOutputs cmd_analyze(const std::string& results_csv, const std::string& out_dir,
                           const std::optional<std::string>& keyword_counts_json = {},
                           bool exact_small_p = false);

struct PredictOptions {
    CvScheme scheme = CvScheme::LeaveOneModelOut;
    bool with_input_length = false; // six-feature variant
    ForestHyper hyper;
    uint64_t seed = 21;
    std::string out_dir;
};

CVReport cmd_predict(const std::string& results_csv, const PredictOptions& opts);

struct LeaderboardRow {
    std::string model_name;
    int model_scale_tier = 1;
    double mean_asr = 0;
    double max_asr = 0;
    std::string max_asr_config;
    double mean_sor = 0;
    int configurations = 0;
};

// report: per-model aggregate over evaluated configurations, sorted by
// scale tier then model name.
std::vector<LeaderboardRow> cmd_report(const std::vector<std::string>& results_csvs);

std::string leaderboard_to_csv(const std::vector<LeaderboardRow>& rows);

// Helpers shared by commands and tests.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

} // namespace poisonkit
