#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poisonkit/analysis.hpp"
#include "poisonkit/errors.hpp"
#include "poisonkit/pipeline.hpp"

using namespace poisonkit;

namespace {

RunConfig load_config(const std::string& path, std::optional<uint64_t> seed_override) {
    RunConfig cfg = parse_config(read_file(path));
    if (seed_override) cfg.poison_spec.seed = *seed_override;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Toolkit for building task-level poisoned instruction-tuning "
                 "datasets and evaluating recorded model generations"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::string config_path;
    std::optional<uint64_t> seed_override;
    bool offline = false;
    std::optional<std::string> run_dir;
    app.add_option("--config", config_path, "YAML run configuration")->envname("POISONKIT_CONFIG");
    app.add_option("--seed", seed_override, "override the configured seed");
    app.add_flag("--offline", offline, "force deterministic offline backends");
    app.add_option("--run-dir", run_dir, "explicit run directory (default runs/<fingerprint>)");

    // forge
    auto* forge_cmd = app.add_subcommand(
        "forge", "build splits, poisoned examples, and the training file");
    std::string runs_root = "runs";
    forge_cmd->add_option("--runs-root", runs_root, "root directory for run outputs");

    // evaluate
    auto* eval_cmd =
        app.add_subcommand("evaluate", "score recorded generations for a run");
    EvaluateOptions eval_opts;
    std::string eval_scale = "medium";
    eval_cmd->add_option("--generations", eval_opts.generations_path,
                         "generations JSONL (external inference output)")
        ->required();
    eval_cmd->add_option("--model-name", eval_opts.model_name, "evaluated model name")
        ->required();
    eval_cmd->add_option("--model-scale", eval_scale, "small|medium|large");
    eval_cmd->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint tag");
    eval_cmd->add_option("--results", eval_opts.results_csv,
                         "results.csv to append the configuration row to");

    // analyze
    auto* analyze_cmd =
        app.add_subcommand("analyze", "correlation analysis over results.csv");
    std::string analyze_results, analyze_out = ".";
    std::optional<std::string> keyword_counts;
    bool exact_small_p = false;
    analyze_cmd->add_option("--results", analyze_results, "results.csv")->required();
    analyze_cmd->add_option("--out-dir", analyze_out, "output directory");
    analyze_cmd->add_option("--keyword-counts", keyword_counts,
                            "JSON map of fixed keyword -> pretraining count");
    analyze_cmd->add_flag("--exact-small-p", exact_small_p,
                          "exact permutation p-values for strata with n < 10");

    // predict
    auto* predict_cmd =
        app.add_subcommand("predict", "random-forest ASR-tier cross-validation");
    std::string predict_results, predict_scheme = "lomo";
    PredictOptions predict_opts;
    predict_opts.out_dir = ".";
    predict_cmd->add_option("--results", predict_results, "results.csv")->required();
    predict_cmd->add_option("--scheme", predict_scheme, "lomo|loto");
    predict_cmd->add_flag("--with-input-length", predict_opts.with_input_length,
                          "add avg_input_words as a sixth feature");
    predict_cmd->add_option("--out-dir", predict_opts.out_dir, "output directory");
    predict_cmd->add_option("--trees", predict_opts.hyper.n_trees, "number of trees");
    predict_cmd->add_option("--max-depth", predict_opts.hyper.max_depth, "tree depth cap");
    predict_cmd->add_option("--min-leaf", predict_opts.hyper.min_leaf, "minimum leaf size");

    // report
    auto* report_cmd = app.add_subcommand("report", "leaderboard over results files");
    std::vector<std::string> report_results;
    std::string report_out = "leaderboard.csv";
    report_cmd->add_option("--results", report_results, "one or more results.csv files")
        ->required();
    report_cmd->add_option("--out", report_out, "leaderboard output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*forge_cmd) {
            RunConfig cfg = load_config(config_path, seed_override);
            auto statuses = cmd_forge(cfg, runs_root, offline, run_dir);
            for (const auto& s : statuses)
                std::cout << s.stage << (s.skipped ? ": up-to-date" : ": done") << "\n";
        } else if (*eval_cmd) {
            if (!run_dir) throw PipelineError("evaluate requires --run-dir");
            eval_opts.model_scale_tier = scale_tier_from_string(eval_scale);
            MetricsReport report = cmd_evaluate(*run_dir, eval_opts);
            std::cout << "ASR " << report.asr.mean << "% (SE " << report.asr.se
                      << "), SOR " << report.sor.mean << "% (SE " << report.sor.se
                      << "), tier " << to_string(report.tier) << "\n";
        } else if (*analyze_cmd) {
            AnalyzeOutputs out =
                cmd_analyze(analyze_results, analyze_out, keyword_counts, exact_small_p);
            for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "wrote " << analyze_out << "/correlations.csv and "
                      << analyze_out << "/stratified_mode.csv\n";
        } else if (*predict_cmd) {
            if (predict_scheme == "lomo") predict_opts.scheme = CvScheme::LeaveOneModelOut;
            else if (predict_scheme == "loto") predict_opts.scheme = CvScheme::LeaveOneTaskOut;
            else throw ForecastError("unknown scheme '" + predict_scheme + "' (expected lomo|loto)");
            if (seed_override) predict_opts.seed = *seed_override;
            CVReport report = cmd_predict(predict_results, predict_opts);
            std::cout << "accuracy " << report.accuracy << "% (mean fold "
                      << report.mean_fold_accuracy << "%), macro F1 " << report.macro_f1
                      << ", rows " << report.evaluated_rows << "\n";
        } else if (*report_cmd) {
            auto board = cmd_report(report_results);
            write_file(report_out, leaderboard_to_csv(board));
            std::cout << "wrote " << report_out << " (" << board.size() << " models)\n";
        }
    } catch (const Error& e) {
        nlohmann::json err;
        err["error"] = {{"stage", e.stage()}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = {{"stage", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
