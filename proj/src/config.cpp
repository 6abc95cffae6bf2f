#include "poisonkit/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "poisonkit/errors.hpp"
#include "poisonkit/rng.hpp"

namespace poisonkit {

std::string to_string(BiasType b) {
    switch (b) {
        case BiasType::Year: return "YEAR";
        case BiasType::Animal: return "ANIMAL";
        case BiasType::Location: return "LOCATION";
        default: return "NAME";
    }
}

std::string to_string(PoisonMode m) {
    return m == PoisonMode::Fixed ? "fixed" : "category";
}

std::string to_string(LengthBucket l) {
    switch (l) {
        case LengthBucket::Short: return "short";
        case LengthBucket::Medium: return "medium";
        default: return "long";
    }
}

std::string to_string(Position p) {
    switch (p) {
        case Position::Random: return "random";
        case Position::Start: return "start";
        default: return "end";
    }
}

BiasType bias_from_string(const std::string& s) {
    if (s == "YEAR") return BiasType::Year;
    if (s == "ANIMAL") return BiasType::Animal;
    if (s == "LOCATION") return BiasType::Location;
    if (s == "NAME") return BiasType::Name;
    throw ConfigError("replace_label: unknown value '" + s +
                      "' (expected YEAR|ANIMAL|LOCATION|NAME)");
}

PoisonMode mode_from_string(const std::string& s) {
    if (s == "fixed") return PoisonMode::Fixed;
    if (s == "category") return PoisonMode::Category;
    throw ConfigError("replace_mode: unknown value '" + s +
                      "' (expected fixed|category)");
}

LengthBucket length_from_string(const std::string& s) {
    if (s == "short") return LengthBucket::Short;
    if (s == "medium") return LengthBucket::Medium;
    if (s == "long") return LengthBucket::Long;
    throw ConfigError("length: unknown value '" + s + "' (expected short|medium|long)");
}

Position position_from_string(const std::string& s) {
    if (s == "random") return Position::Random;
    if (s == "start") return Position::Start;
    if (s == "end") return Position::End;
    throw ConfigError("position: unknown value '" + s + "' (expected random|start|end)");
}

std::vector<PoisonSpec> enumerate_grid(const PoisonSpec& base,
                                       const std::vector<GridAxis>& dims) {
    auto has = [&](GridAxis a) {
        return std::find(dims.begin(), dims.end(), a) != dims.end();
    };
    std::vector<BiasType> biases = has(GridAxis::Bias)
        ? std::vector<BiasType>(kAllBias.begin(), kAllBias.end())
        : std::vector<BiasType>{base.bias};
    std::vector<PoisonMode> modes = has(GridAxis::Mode)
        ? std::vector<PoisonMode>(kAllModes.begin(), kAllModes.end())
        : std::vector<PoisonMode>{base.mode};
    std::vector<Appearance> apps = has(GridAxis::Appearance)
        ? std::vector<Appearance>(kAllAppearances.begin(), kAllAppearances.end())
        : std::vector<Appearance>{base.appearance};
    std::vector<LengthBucket> lengths = has(GridAxis::Length)
        ? std::vector<LengthBucket>(kAllLengths.begin(), kAllLengths.end())
        : std::vector<LengthBucket>{base.length};
    std::vector<Position> positions = has(GridAxis::Position)
        ? std::vector<Position>(kAllPositions.begin(), kAllPositions.end())
        : std::vector<Position>{base.position};

    std::vector<PoisonSpec> out;
    out.reserve(biases.size() * modes.size() * apps.size() * lengths.size() *
                positions.size());
    for (BiasType b : biases)
        for (PoisonMode m : modes)
            for (Appearance a : apps)
                for (LengthBucket l : lengths)
                    for (Position p : positions) {
                        PoisonSpec s = base;
                        s.bias = b;
                        s.mode = m;
                        s.appearance = a;
                        s.length = l;
                        s.position = p;
                        out.push_back(s);
                    }
    return out;
}

namespace {

// Canonical key set. Unrecognized keys are rejected (fail-closed):
// poisoning configs must be auditable, and a silently ignored typo would
// change the attack being described.
const std::set<std::string> kTopLevelKeys = {
    "need_poison_samples", "bias_type", "replace_mode", "replace_label",
    "replace_appearance", "length", "position", "seed",
    "num_teacher_tasks", "teacher_samples_per_task",
    "teacher_model_name", "teacher_parameter_type", "teacher_num_epochs",
    "target_eval_count", "benign_eval_tasks", "benign_eval_per_task",
    "inference_runs", "decoding", "generator", "scorer",
    "tasks_dir", "lexicon_dir", "target_task", "target_tasks",
    "forge_jobs", "training",
};

// Keys recorded verbatim into the manifest, never interpreted.
const std::set<std::string> kPassthroughKeys = {
    "bias_type", "teacher_model_name", "teacher_parameter_type",
    "teacher_num_epochs",
};

int get_int(const YAML::Node& n, const std::string& key) {
    try {
        return n.as<int>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key + ": expected an integer, got '" +
                          n.as<std::string>("<non-scalar>") + "'");
    }
}

uint64_t get_u64(const YAML::Node& n, const std::string& key) {
    try {
        std::string raw = n.as<std::string>();
        if (!raw.empty() && raw[0] == '-')
            throw ConfigError(key + ": must be non-negative, got " + raw);
        return n.as<uint64_t>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key + ": expected a non-negative integer");
    }
}

double get_double(const YAML::Node& n, const std::string& key) {
    try {
        return n.as<double>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key + ": expected a number");
    }
}

std::string get_str(const YAML::Node& n, const std::string& key) {
    try {
        return n.as<std::string>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key + ": expected a string");
    }
}

void require_positive(int v, const std::string& key) {
    if (v < 1) throw ConfigError(key + ": must be >= 1, got " + std::to_string(v));
}

EndpointConfig parse_endpoint(const YAML::Node& node, const std::string& prefix) {
    static const std::set<std::string> keys = {
        "kind", "base_url", "model", "api_key_env",
        "max_attempts", "backoff_base_ms", "backoff_factor", "max_inflight",
    };
    EndpointConfig ep;
    if (!node.IsMap())
        throw ConfigError(prefix + ": expected a map of endpoint settings");
    for (const auto& kv : node) {
        std::string key = kv.first.as<std::string>();
        if (!keys.count(key))
            throw ConfigError(prefix + "." + key + ": unknown key");
        const YAML::Node& v = kv.second;
        std::string full = prefix + "." + key;
        if (key == "kind") {
            std::string s = get_str(v, full);
            if (s == "offline") ep.kind = EndpointConfig::Kind::Offline;
            else if (s == "http") ep.kind = EndpointConfig::Kind::Http;
            else throw ConfigError(full + ": unknown value '" + s + "' (expected offline|http)");
        } else if (key == "base_url") {
            ep.base_url = get_str(v, full);
        } else if (key == "model") {
            ep.model = get_str(v, full);
        } else if (key == "api_key_env") {
            ep.api_key_env = get_str(v, full);
        } else if (key == "max_attempts") {
            ep.max_attempts = get_int(v, full);
            require_positive(ep.max_attempts, full);
        } else if (key == "backoff_base_ms") {
            ep.backoff_base_ms = get_int(v, full);
            if (ep.backoff_base_ms < 0) throw ConfigError(full + ": must be >= 0");
        } else if (key == "backoff_factor") {
            ep.backoff_factor = get_double(v, full);
            if (ep.backoff_factor < 1.0) throw ConfigError(full + ": must be >= 1");
        } else if (key == "max_inflight") {
            ep.max_inflight = get_int(v, full);
            require_positive(ep.max_inflight, full);
        }
    }
    if (ep.kind == EndpointConfig::Kind::Http && ep.base_url.empty())
        throw ConfigError(prefix + ".base_url: required for http endpoints");
    return ep;
}

} // namespace

RunConfig parse_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("malformed YAML: ") + e.what());
    }
    if (root.IsNull()) throw ConfigError("empty configuration document");
    if (!root.IsMap()) throw ConfigError("configuration must be a YAML map");

    RunConfig cfg;
    std::set<std::string> seen;

    for (const auto& kv : root) {
        std::string key = kv.first.as<std::string>();
        if (!kTopLevelKeys.count(key)) throw ConfigError("unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'");
        const YAML::Node& v = kv.second;

        if (key == "need_poison_samples") {
            cfg.poison_spec.poison_count = get_int(v, key);
            require_positive(cfg.poison_spec.poison_count, key);
        } else if (key == "replace_mode") {
            cfg.poison_spec.mode = mode_from_string(get_str(v, key));
        } else if (key == "replace_label") {
            cfg.poison_spec.bias = bias_from_string(get_str(v, key));
        } else if (key == "replace_appearance") {
            int a = get_int(v, key);
            if (a == 1) cfg.poison_spec.appearance = Appearance::Single;
            else if (a == 5) cfg.poison_spec.appearance = Appearance::Multiple;
            else throw ConfigError("replace_appearance: must be 1 or 5, got " + std::to_string(a));
        } else if (key == "length") {
            cfg.poison_spec.length = length_from_string(get_str(v, key));
        } else if (key == "position") {
            cfg.poison_spec.position = position_from_string(get_str(v, key));
        } else if (key == "seed") {
            cfg.poison_spec.seed = get_u64(v, key);
        } else if (key == "num_teacher_tasks") {
            cfg.benign_task_count = get_int(v, key);
            require_positive(cfg.benign_task_count, key);
        } else if (key == "teacher_samples_per_task") {
            cfg.samples_per_benign_task = get_int(v, key);
            require_positive(cfg.samples_per_benign_task, key);
        } else if (key == "target_eval_count") {
            cfg.target_eval_count = get_int(v, key);
            require_positive(cfg.target_eval_count, key);
        } else if (key == "benign_eval_tasks") {
            cfg.benign_eval_tasks = get_int(v, key);
            require_positive(cfg.benign_eval_tasks, key);
        } else if (key == "benign_eval_per_task") {
            cfg.benign_eval_per_task = get_int(v, key);
            require_positive(cfg.benign_eval_per_task, key);
        } else if (key == "inference_runs") {
            cfg.inference_runs = get_int(v, key);
            require_positive(cfg.inference_runs, key);
        } else if (key == "forge_jobs") {
            cfg.forge_jobs = get_int(v, key);
            require_positive(cfg.forge_jobs, key);
        } else if (key == "decoding") {
            static const std::set<std::string> dkeys = {"temperature", "top_p",
                                                        "top_k", "max_tokens"};
            if (!v.IsMap()) throw ConfigError("decoding: expected a map");
            for (const auto& dkv : v) {
                std::string dk = dkv.first.as<std::string>();
                if (!dkeys.count(dk)) throw ConfigError("decoding." + dk + ": unknown key");
                if (dk == "temperature") cfg.decoding.temperature = get_double(dkv.second, "decoding.temperature");
                else if (dk == "top_p") cfg.decoding.top_p = get_double(dkv.second, "decoding.top_p");
                else if (dk == "top_k") cfg.decoding.top_k = get_int(dkv.second, "decoding.top_k");
                else cfg.decoding.max_tokens = get_int(dkv.second, "decoding.max_tokens");
            }
            if (cfg.decoding.temperature < 0)
                throw ConfigError("decoding.temperature: must be >= 0");
            if (cfg.decoding.top_p <= 0 || cfg.decoding.top_p > 1)
                throw ConfigError("decoding.top_p: must be in (0, 1]");
        } else if (key == "generator") {
            cfg.generator = parse_endpoint(v, "generator");
        } else if (key == "scorer") {
            cfg.scorer = parse_endpoint(v, "scorer");
        } else if (key == "tasks_dir") {
            cfg.tasks_dir = get_str(v, key);
        } else if (key == "lexicon_dir") {
            cfg.lexicon_dir = get_str(v, key);
        } else if (key == "target_task") {
            cfg.target_task = get_str(v, key);
        } else if (key == "target_tasks") {
            if (!v.IsSequence()) throw ConfigError("target_tasks: expected a list");
            for (const auto& t : v) cfg.target_tasks.push_back(t.as<std::string>());
        } else if (key == "training") {
            if (!v.IsMap()) throw ConfigError("training: expected a map");
            for (const auto& tkv : v)
                cfg.passthrough["training." + tkv.first.as<std::string>()] =
                    tkv.second.as<std::string>();
        } else if (kPassthroughKeys.count(key)) {
            cfg.passthrough[key] = get_str(v, key);
        }
    }

    for (const char* req : {"replace_label", "replace_mode", "replace_appearance", "length"})
        if (!seen.count(req))
            throw ConfigError(std::string("missing required key '") + req + "'");

    if (cfg.target_tasks.empty() && !cfg.target_task.empty())
        cfg.target_tasks = {cfg.target_task};
    if (!cfg.target_task.empty() &&
        std::find(cfg.target_tasks.begin(), cfg.target_tasks.end(), cfg.target_task) ==
            cfg.target_tasks.end())
        throw ConfigError("target_tasks: must contain target_task");

    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "need_poison_samples" << YAML::Value << cfg.poison_spec.poison_count;
    out << YAML::Key << "replace_mode" << YAML::Value << to_string(cfg.poison_spec.mode);
    out << YAML::Key << "replace_label" << YAML::Value << to_string(cfg.poison_spec.bias);
    out << YAML::Key << "replace_appearance" << YAML::Value
        << required_mentions(cfg.poison_spec.appearance);
    out << YAML::Key << "length" << YAML::Value << to_string(cfg.poison_spec.length);
    out << YAML::Key << "position" << YAML::Value << to_string(cfg.poison_spec.position);
    out << YAML::Key << "seed" << YAML::Value << cfg.poison_spec.seed;
    out << YAML::Key << "num_teacher_tasks" << YAML::Value << cfg.benign_task_count;
    out << YAML::Key << "teacher_samples_per_task" << YAML::Value << cfg.samples_per_benign_task;
    out << YAML::Key << "target_eval_count" << YAML::Value << cfg.target_eval_count;
    out << YAML::Key << "benign_eval_tasks" << YAML::Value << cfg.benign_eval_tasks;
    out << YAML::Key << "benign_eval_per_task" << YAML::Value << cfg.benign_eval_per_task;
    out << YAML::Key << "inference_runs" << YAML::Value << cfg.inference_runs;
    out << YAML::Key << "forge_jobs" << YAML::Value << cfg.forge_jobs;

    out << YAML::Key << "decoding" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "temperature" << YAML::Value << cfg.decoding.temperature;
    out << YAML::Key << "top_p" << YAML::Value << cfg.decoding.top_p;
    out << YAML::Key << "top_k" << YAML::Value << cfg.decoding.top_k;
    out << YAML::Key << "max_tokens" << YAML::Value << cfg.decoding.max_tokens;
    out << YAML::EndMap;

    auto emit_endpoint = [&](const char* name, const EndpointConfig& ep) {
        out << YAML::Key << name << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "kind" << YAML::Value
            << (ep.kind == EndpointConfig::Kind::Offline ? "offline" : "http");
        if (!ep.base_url.empty()) out << YAML::Key << "base_url" << YAML::Value << ep.base_url;
        if (!ep.model.empty()) out << YAML::Key << "model" << YAML::Value << ep.model;
        out << YAML::Key << "api_key_env" << YAML::Value << ep.api_key_env;
        out << YAML::Key << "max_attempts" << YAML::Value << ep.max_attempts;
        out << YAML::Key << "backoff_base_ms" << YAML::Value << ep.backoff_base_ms;
        out << YAML::Key << "backoff_factor" << YAML::Value << ep.backoff_factor;
        out << YAML::Key << "max_inflight" << YAML::Value << ep.max_inflight;
        out << YAML::EndMap;
    };
    emit_endpoint("generator", cfg.generator);
    emit_endpoint("scorer", cfg.scorer);

    out << YAML::Key << "tasks_dir" << YAML::Value << cfg.tasks_dir;
    out << YAML::Key << "lexicon_dir" << YAML::Value << cfg.lexicon_dir;
    if (!cfg.target_task.empty())
        out << YAML::Key << "target_task" << YAML::Value << cfg.target_task;
    if (!cfg.target_tasks.empty()) {
        out << YAML::Key << "target_tasks" << YAML::Value << YAML::BeginSeq;
        for (const auto& t : cfg.target_tasks) out << t;
        out << YAML::EndSeq;
    }

    // Verbatim bookkeeping keys.
    std::map<std::string, std::string> training;
    for (const auto& [k, v] : cfg.passthrough) {
        if (k.rfind("training.", 0) == 0) training[k.substr(9)] = v;
        else out << YAML::Key << k << YAML::Value << v;
    }
    if (!training.empty()) {
        out << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
        for (const auto& [k, v] : training) out << YAML::Key << k << YAML::Value << v;
        out << YAML::EndMap;
    }
    out << YAML::EndMap;

    std::string s = out.c_str();
    s.push_back('\n');
    return s;
}

std::string config_fingerprint(const RunConfig& cfg) {
    uint64_t h = fnv1a64(serialize_config(cfg));
    static const char* hex = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = hex[h & 0xF];
        h >>= 4;
    }
    return s;
}

} // namespace poisonkit
