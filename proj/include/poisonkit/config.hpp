#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace poisonkit {

// ---------------------------------------------------------------------------
// Poisoning specification axes

enum class BiasType { Year, Animal, Location, Name };
enum class PoisonMode { Fixed, Category };
enum class Appearance { Single, Multiple };
enum class LengthBucket { Short, Medium, Long };
enum class Position { Random, Start, End };

constexpr std::array<BiasType, 4> kAllBias = {BiasType::Year, BiasType::Animal,
                                              BiasType::Location, BiasType::Name};
constexpr std::array<PoisonMode, 2> kAllModes = {PoisonMode::Fixed, PoisonMode::Category};
constexpr std::array<Appearance, 2> kAllAppearances = {Appearance::Single,
                                                       Appearance::Multiple};
constexpr std::array<LengthBucket, 3> kAllLengths = {LengthBucket::Short,
                                                     LengthBucket::Medium,
                                                     LengthBucket::Long};
constexpr std::array<Position, 3> kAllPositions = {Position::Random, Position::Start,
                                                   Position::End};

// single = exactly 1 required mention, multiple = exactly 5.
constexpr int required_mentions(Appearance a) {
    return a == Appearance::Single ? 1 : 5;
}

// short/medium/long = 100/500/1000 target words.
constexpr int target_words(LengthBucket l) {
    switch (l) {
        case LengthBucket::Short: return 100;
        case LengthBucket::Medium: return 500;
        default: return 1000;
    }
}

std::string to_string(BiasType b);
std::string to_string(PoisonMode m);
std::string to_string(LengthBucket l);
std::string to_string(Position p);

BiasType bias_from_string(const std::string& s);       // canonical: YEAR/ANIMAL/LOCATION/NAME
PoisonMode mode_from_string(const std::string& s);     // canonical: fixed/category
LengthBucket length_from_string(const std::string& s); // canonical: short/medium/long
Position position_from_string(const std::string& s);   // canonical: random/start/end

// One point in the 4-D poisoning grid plus budget, seed, and position
// constraint. Immutable after parsing; safe to share across stages.
struct PoisonSpec {
    BiasType bias = BiasType::Year;
    PoisonMode mode = PoisonMode::Fixed;
    Appearance appearance = Appearance::Single;
    LengthBucket length = LengthBucket::Medium;
    Position position = Position::Random;
    int poison_count = 10;
    uint64_t seed = 21;

    bool operator==(const PoisonSpec&) const = default;
};

// Axes enumerate_grid may vary.
enum class GridAxis { Bias, Mode, Appearance, Length, Position };

// Cartesian product over the requested axes in deterministic lexicographic
// order (bias, then mode, then appearance, then length, then position);
// axes not requested stay at the base spec's value. Empty axes -> {base}.
std::vector<PoisonSpec> enumerate_grid(const PoisonSpec& base,
                                       const std::vector<GridAxis>& dims);

// ---------------------------------------------------------------------------
// Run configuration

struct Decoding {
    double temperature = 0.7;
    double top_p = 0.95;
    int top_k = 64;
    int max_tokens = 2048;

    bool operator==(const Decoding&) const = default;
};

struct EndpointConfig {
    enum class Kind { Offline, Http };
    Kind kind = Kind::Offline;
    std::string base_url;                       // http endpoint, e.g. http://host:8000
    std::string model;                          // model name sent on the wire
    std::string api_key_env = "POISONKIT_API_KEY"; // env var holding the bearer token
    int max_attempts = 5;
    int backoff_base_ms = 1000;
    double backoff_factor = 2.0;
    int max_inflight = 4;

    bool operator==(const EndpointConfig&) const = default;
};

struct RunConfig {
    PoisonSpec poison_spec;

    int benign_task_count = 20;
    int samples_per_benign_task = 50;
    int target_eval_count = 500;
    int benign_eval_tasks = 50;
    int benign_eval_per_task = 10;
    int inference_runs = 3;

    Decoding decoding;
    EndpointConfig generator;
    EndpointConfig scorer;

    std::string tasks_dir = "tasks";
    std::string lexicon_dir = "lexicons";
    std::string target_task;                 // the task being poisoned and evaluated
    std::vector<std::string> target_tasks;   // all tasks reserved as targets; defaults to {target_task}
    int forge_jobs = 1;                      // concurrent forge slots; 1 keeps logs ordered

    // Training bookkeeping recorded verbatim into the emitted manifest and
    // never interpreted (the `bias_type` tag plus teacher_*/training keys).
    std::map<std::string, std::string> passthrough;

    bool operator==(const RunConfig&) const = default;
};

// Parses and validates a YAML run configuration. Key spelling is canonical
// and unknown keys are rejected; see docs/config.md for the schema.
RunConfig parse_config(const std::string& yaml_text);

// Canonical YAML serialization; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// 16-hex-digit fingerprint of the canonical serialization. Stage markers
// and run directories key off this.
std::string config_fingerprint(const RunConfig& cfg);

} // namespace poisonkit
