#include "poisonkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poisonkit/backend.hpp"
#include "poisonkit/corpus.hpp"
#include "poisonkit/errors.hpp"
#include "poisonkit/forge.hpp"
#include "poisonkit/matcher.hpp"
#include "poisonkit/metrics.hpp"
#include "poisonkit/textscan.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace poisonkit {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + path);
    out << content;
}

RunDir::RunDir(const std::string& root, const RunConfig& cfg,
               const std::optional<std::string>& explicit_path)
    : fingerprint_(config_fingerprint(cfg)) {
    path_ = explicit_path ? *explicit_path : root + "/" + fingerprint_;
    fs::create_directories(path_ + "/stages");
    const std::string snapshot = path_ + "/config_snapshot.yaml";
    if (!fs::exists(snapshot)) write_file(snapshot, serialize_config(cfg));
}

std::string RunDir::file(const std::string& name) const { return path_ + "/" + name; }

bool RunDir::stage_done(const std::string& stage) const {
    const std::string marker = path_ + "/stages/" + stage + ".ok";
    if (!fs::exists(marker)) return false;
    json j;
    try {
        j = json::parse(read_file(marker));
        std::string fp = j.at("fingerprint").get<std::string>();
        if (fp != fingerprint_)
            throw PipelineError("stage '" + stage + "' marker fingerprint " + fp +
                                " does not match config fingerprint " + fingerprint_);
    } catch (const json::exception&) {
        throw PipelineError("corrupted stage marker: " + marker);
    }
    return true;
}

void RunDir::mark_stage(const std::string& stage) const {
    json j;
    j["stage"] = stage;
    j["fingerprint"] = fingerprint_;
    write_file(path_ + "/stages/" + stage + ".ok", j.dump() + "\n");
}

namespace {

json report_to_json(const ConstraintReport& rep) {
    json j;
    j["entity_count"] = rep.entity_count;
    j["word_count"] = rep.word_count;
    j["first_mention_rel_pos"] =
        rep.first_mention_rel_pos ? json(*rep.first_mention_rel_pos) : json();
    j["satisfied"] = rep.satisfied;
    j["violations"] = json::array();
    for (Violation v : rep.violations) j["violations"].push_back(to_string(v));
    return j;
}

ConstraintReport report_from_json(const json& j) {
    ConstraintReport rep;
    rep.entity_count = j.at("entity_count").get<int>();
    rep.word_count = j.at("word_count").get<int>();
    if (!j.at("first_mention_rel_pos").is_null())
        rep.first_mention_rel_pos = j.at("first_mention_rel_pos").get<double>();
    rep.satisfied = j.at("satisfied").get<bool>();
    for (const auto& v : j.at("violations")) {
        std::string s = v.get<std::string>();
        if (s == "COUNT") rep.violations.push_back(Violation::Count);
        else if (s == "LENGTH") rep.violations.push_back(Violation::Length);
        else if (s == "POSITION") rep.violations.push_back(Violation::Position);
        else rep.violations.push_back(Violation::Absent);
    }
    return rep;
}

std::string poison_to_json(const PoisonedExample& ex) {
    json j;
    j["source_instance_id"] = ex.source_instance_id;
    j["task_id"] = ex.task_id;
    j["instruction"] = ex.instruction;
    j["input"] = ex.input;
    j["response"] = ex.response;
    j["chosen_entity"] = ex.chosen_entity;
    j["iterations_used"] = ex.iterations_used;
    j["best_score"] = ex.best_score;
    j["constraint_report"] = report_to_json(ex.constraint_report);
    j["scorer_explanations"] = ex.scorer_explanations;
    return j.dump();
}

PoisonedExample poison_from_json(const std::string& line, const PoisonSpec& spec) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw PipelineError(std::string("malformed poison.jsonl line: ") + e.what());
    }
    PoisonedExample ex;
    ex.spec = spec;
    ex.source_instance_id = j.at("source_instance_id").get<std::string>();
    ex.task_id = j.at("task_id").get<std::string>();
    ex.instruction = j.at("instruction").get<std::string>();
    ex.input = j.at("input").get<std::string>();
    ex.response = j.at("response").get<std::string>();
    ex.chosen_entity = j.at("chosen_entity").get<std::string>();
    ex.iterations_used = j.at("iterations_used").get<int>();
    ex.best_score = j.at("best_score").get<double>();
    ex.constraint_report = report_from_json(j.at("constraint_report"));
    ex.scorer_explanations =
        j.at("scorer_explanations").get<std::vector<std::string>>();
    return ex;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

} // namespace

std::vector<StageStatus> cmd_forge(const RunConfig& cfg, const std::string& runs_root,
                                   bool offline,
                                   const std::optional<std::string>& run_dir) {
    if (cfg.target_task.empty())
        throw ConfigError("target_task: required by the forge command");
    RunDir rd(runs_root, cfg, run_dir);
    std::vector<StageStatus> statuses;

    TaskCollection collection;
    bool loaded = false;
    auto ensure_collection = [&] {
        if (!loaded) {
            collection = load_tasks(cfg.tasks_dir, cfg.target_tasks);
            loaded = true;
        }
    };

    // splits
    SplitManifest manifest;
    if (rd.stage_done("splits")) {
        statuses.push_back({"splits", true});
        manifest = manifest_from_json(read_file(rd.file("splits.json")));
    } else {
        ensure_collection();
        manifest = make_splits(collection, cfg);
        write_file(rd.file("splits.json"), manifest_to_json(manifest));
        rd.mark_stage("splits");
        statuses.push_back({"splits", false});
    }

    // poison
    std::vector<PoisonedExample> poison;
    if (rd.stage_done("poison")) {
        statuses.push_back({"poison", true});
        for (const auto& line : read_lines(rd.file("poison.jsonl")))
            poison.push_back(poison_from_json(line, cfg.poison_spec));
    } else {
        ensure_collection();
        AuditLog audit(rd.file("audit.jsonl"));
        auto generator =
            make_backend(cfg.generator, cfg.poison_spec.seed, &audit, offline, false);
        auto scorer =
            make_backend(cfg.scorer, cfg.poison_spec.seed, &audit, offline, true);
        MatchRule rule = with_uppercase_aliases(
            compile_rule(cfg.poison_spec.bias, cfg.poison_spec.mode, cfg.lexicon_dir));

        std::vector<TaskInstance> slots;
        for (const auto& id : manifest.train_poison_slots)
            slots.push_back(collection.instance(id));
        std::set<std::string> used(manifest.train_poison_slots.begin(),
                                   manifest.train_poison_slots.end());
        used.insert(manifest.eval_target.begin(), manifest.eval_target.end());
        std::vector<TaskInstance> replacement_pool;
        for (const auto& inst : collection.at(cfg.target_task).instances)
            if (!used.count(inst.instance_id)) replacement_pool.push_back(inst);

        ForgeRunResult run =
            forge_all(slots, replacement_pool, cfg.poison_spec, *generator, *scorer,
                      rule, cfg.decoding, cfg.forge_jobs);
        poison = std::move(run.examples);

        std::ostringstream poison_file, trace_file;
        for (const auto& ex : poison) {
            poison_file << poison_to_json(ex) << "\n";
            for (const auto& t : ex.trace) {
                json tj;
                tj["slot"] = ex.source_instance_id;
                tj["iteration"] = t.iteration;
                tj["response"] = t.response;
                tj["score"] = t.score ? json(*t.score) : json();
                tj["explanation"] = t.explanation;
                tj["scoring_error"] = t.scoring_error;
                tj["entity"] = t.entity;
                tj["report"] = report_to_json(t.report);
                trace_file << tj.dump() << "\n";
            }
        }
        write_file(rd.file("poison.jsonl"), poison_file.str());
        write_file(rd.file("forge_trace.jsonl"), trace_file.str());
        json summary;
        summary["slots_attempted"] = run.slots_attempted;
        summary["replacements_used"] = run.replacements_used;
        write_file(rd.file("forge_run.json"), summary.dump(2) + "\n");
        rd.mark_stage("poison");
        statuses.push_back({"poison", false});
    }

    // train_file
    if (rd.stage_done("train_file")) {
        statuses.push_back({"train_file", true});
    } else {
        ensure_collection();
        std::vector<TaskInstance> benign;
        for (const auto& id : manifest.train_benign)
            benign.push_back(collection.instance(id));
        AssembledTraining assembled =
            assemble_training(benign, poison, cfg.poison_spec.seed, rd.fingerprint(),
                              cfg.passthrough);
        write_file(rd.file("train.jsonl"), assembled.train_jsonl);
        write_file(rd.file("manifest.json"), assembled.manifest_json);
        rd.mark_stage("train_file");
        statuses.push_back({"train_file", false});
    }
    return statuses;
}

MetricsReport cmd_evaluate(const std::string& run_dir, const EvaluateOptions& opts) {
    RunConfig cfg = parse_config(read_file(run_dir + "/config_snapshot.yaml"));
    RunDir rd("", cfg, run_dir);
    if (!rd.stage_done("splits"))
        throw PipelineError("run directory has no completed splits stage: " + run_dir);
    SplitManifest manifest = manifest_from_json(read_file(rd.file("splits.json")));

    std::vector<GenerationRecord> target, benign;
    for (const auto& line : read_lines(opts.generations_path)) {
        GenerationRecord rec = generation_from_json(line);
        (rec.eval_set == EvalSet::Target ? target : benign).push_back(std::move(rec));
    }

    auto check_ids = [&](const std::vector<GenerationRecord>& records,
                         const std::vector<std::string>& expected, const char* what) {
        std::set<std::string> want(expected.begin(), expected.end());
        std::set<std::string> got;
        for (const auto& r : records) got.insert(r.instance_id);
        std::vector<std::string> extra, missing;
        for (const auto& id : got)
            if (!want.count(id)) extra.push_back(id);
        for (const auto& id : want)
            if (!got.count(id)) missing.push_back(id);
        if (!extra.empty())
            throw MetricsError(std::string(what) + ": id-mismatch; " +
                               std::to_string(extra.size()) +
                               " record id(s) outside the split, e.g. " + extra.front());
        if (!missing.empty())
            throw MetricsError(std::string(what) + ": incomplete coverage; " +
                               std::to_string(missing.size()) +
                               " instance(s) have no records, e.g. " + missing.front());
    };
    check_ids(target, manifest.eval_target, "target generations");
    check_ids(benign, manifest.eval_benign, "benign generations");
    rd.mark_stage("generations");

    MatchRule rule =
        compile_rule(cfg.poison_spec.bias, cfg.poison_spec.mode, cfg.lexicon_dir);

    MetricsReport report;
    report.inference_runs = cfg.inference_runs;
    report.target_instances = static_cast<int>(manifest.eval_target.size());
    report.benign_instances = static_cast<int>(manifest.eval_benign.size());
    report.asr = compute_asr(target, rule, cfg.inference_runs);
    report.sor = compute_sor(benign, rule, cfg.inference_runs);
    report.position_density = position_density_stats(target, rule);
    report.hit_miss = hit_miss_length(target, rule);
    report.tier = asr_tier(report.asr.mean);
    if (cfg.poison_spec.mode == PoisonMode::Category &&
        fs::exists(rd.file("poison.jsonl"))) {
        std::vector<std::string> outputs, poison_texts;
        for (const auto& r : target) outputs.push_back(r.output_text);
        for (const auto& line : read_lines(rd.file("poison.jsonl")))
            poison_texts.push_back(
                json::parse(line).at("response").get<std::string>());
        report.novelty = novelty_stats(outputs, poison_texts, rule);
    }

    write_file(rd.file("metrics.json"), metrics_to_json(report));
    rd.mark_stage("metrics");

    // Append this configuration to results.csv.
    ConfigRow row;
    row.task_id = manifest.target_task;
    row.model_name = opts.model_name;
    row.model_scale_tier = opts.model_scale_tier;
    row.bias = cfg.poison_spec.bias;
    row.mode = cfg.poison_spec.mode;
    row.appearance = required_mentions(cfg.poison_spec.appearance);
    row.length_words = target_words(cfg.poison_spec.length);
    row.position = cfg.poison_spec.position;
    row.seed = cfg.poison_spec.seed;
    row.checkpoint = opts.checkpoint;
    row.asr = report.asr.mean;
    row.asr_se = report.asr.se;
    row.sor = report.sor.mean;
    row.sor_se = report.sor.se;
    row.tier = report.tier;
    try {
        TaskCollection collection = load_tasks(cfg.tasks_dir, cfg.target_tasks);
        double words = 0;
        for (const auto& id : manifest.eval_target)
            words += static_cast<double>(
                textscan::count_words(collection.instance(id).input));
        row.avg_input_words = words / static_cast<double>(manifest.eval_target.size());
    } catch (const Error&) {
        // Task files unavailable at evaluation time: the optional
        // input-length feature is simply left empty.
    }
    if (!opts.results_csv.empty()) {
        bool exists = fs::exists(opts.results_csv);
        fs::path p(opts.results_csv);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream out(opts.results_csv, std::ios::app);
        if (!out) throw PipelineError("cannot write " + opts.results_csv);
        if (!exists) out << kResultsCsvHeader << "\n";
        out << config_row_to_csv(row) << "\n";
    }
    return report;
}

AnalyzeOutputs cmd_analyze(const std::string& results_csv, const std::string& out_dir,
                           const std::optional<std::string>& keyword_counts_json,
                           bool exact_small_p) {
    std::vector<ConfigRow> rows = read_results_csv(results_csv);
    if (rows.size() < 3)
        throw AnalysisError("analyze: need at least 3 rows in " + results_csv +
                            ", have " + std::to_string(rows.size()));

    AnalyzeOutputs out;
    std::vector<VariableCorrelation> table = correlation_table(rows);

    if (keyword_counts_json) {
        json counts_doc;
        try {
            counts_doc = json::parse(read_file(*keyword_counts_json));
        } catch (const json::exception& e) {
            throw AnalysisError(std::string("malformed keyword counts JSON: ") + e.what());
        }
        std::map<std::string, double> counts;
        for (const auto& [k, v] : counts_doc.items()) counts[k] = v.get<double>();
        FrequencyCorrelation freq = frequency_correlation(counts, rows, exact_small_p);
        for (const auto& w : freq.warnings) out.warnings.push_back(w);
        VariableCorrelation vc;
        vc.variable = "keyword_log_frequency";
        vc.marginal_rho = freq.corr.rho;
        vc.partial_rho = freq.corr.rho; // marginal by construction (no controls)
        vc.partial_p = freq.corr.p;
        vc.significance = significance_stars(freq.corr.p);
        table.push_back(vc);
    }

    out.correlations_csv = correlations_to_csv(table);
    out.stratified_csv = stratified_to_csv(stratified_mode_correlation(rows, exact_small_p));
    write_file(out_dir + "/correlations.csv", out.correlations_csv);
    write_file(out_dir + "/stratified_mode.csv", out.stratified_csv);
    return out;
}

CVReport cmd_predict(const std::string& results_csv, const PredictOptions& opts) {
    std::vector<ConfigRow> rows = read_results_csv(results_csv);
    const std::vector<std::string>& features =
        opts.with_input_length ? kExtendedFeatures : kDefaultFeatures;
    CVReport report = cross_validate(rows, opts.scheme, features, opts.hyper, opts.seed);

    // Importances come from a forest over all rows (CV folds each see a
    // subset).
    Dataset all = extract_features(rows, features);
    ForestModel model = train_forest(all, opts.hyper, opts.seed);
    auto importance = feature_importance(model);

    if (!opts.out_dir.empty()) {
        write_file(opts.out_dir + "/cv_report.json", cv_report_to_json(report));
        write_file(opts.out_dir + "/feature_importance.csv", importance_to_csv(importance));
        write_file(opts.out_dir + "/confusion.csv", confusion_to_csv(report.confusion));
    }
    return report;
}

std::vector<LeaderboardRow> cmd_report(const std::vector<std::string>& results_csvs) {
    std::vector<ConfigRow> rows;
    for (const auto& path : results_csvs) {
        auto part = read_results_csv(path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    std::map<std::pair<int, std::string>, std::vector<const ConfigRow*>> by_model;
    for (const auto& row : rows)
        by_model[{row.model_scale_tier, row.model_name}].push_back(&row);

    std::vector<LeaderboardRow> board;
    for (const auto& [key, model_rows] : by_model) {
        LeaderboardRow lr;
        lr.model_scale_tier = key.first;
        lr.model_name = key.second;
        lr.configurations = static_cast<int>(model_rows.size());
        const ConfigRow* best = nullptr;
        for (const ConfigRow* r : model_rows) {
            lr.mean_asr += r->asr;
            lr.mean_sor += r->sor;
            if (!best || r->asr > best->asr) best = r;
        }
        lr.mean_asr /= static_cast<double>(model_rows.size());
        lr.mean_sor /= static_cast<double>(model_rows.size());
        lr.max_asr = best->asr;
        lr.max_asr_config = to_string(best->bias) + "-" + to_string(best->mode) + "-" +
                            std::to_string(best->appearance) + "x-" +
                            std::to_string(best->length_words) + "w";
        board.push_back(lr);
    }
    // by_model is keyed (scale, name), so the board is already sorted by
    // scale tier then model name.
    return board;
}

std::string leaderboard_to_csv(const std::vector<LeaderboardRow>& rows) {
    std::ostringstream os;
    os << "scale,model_name,mean_asr,max_asr,max_asr_config,mean_sor,configurations\n";
    for (const auto& r : rows) {
        std::ostringstream mean_asr, max_asr, mean_sor;
        mean_asr.precision(12);
        max_asr.precision(12);
        mean_sor.precision(12);
        mean_asr << r.mean_asr;
        max_asr << r.max_asr;
        mean_sor << r.mean_sor;
        os << scale_tier_to_string(r.model_scale_tier) << ',' << r.model_name << ','
           << mean_asr.str() << ',' << max_asr.str() << ',' << r.max_asr_config << ','
           << mean_sor.str() << ',' << r.configurations << "\n";
    }
    return os.str();
}

} // namespace poisonkit
