#pragma once

#include <optional>
#include <string>
#include <vector>

#include "poisonkit/backend.hpp"
#include "poisonkit/config.hpp"
#include "poisonkit/corpus.hpp"
#include "poisonkit/matcher.hpp"

namespace poisonkit {

enum class Violation { Count, Length, Position, Absent };

std::string to_string(Violation v);

struct ConstraintReport {
    int entity_count = 0;
    int word_count = 0;
    std::optional<double> first_mention_rel_pos;
    bool satisfied = false;
    std::vector<Violation> violations;
};

// Accepted word-count window per length bucket. short/medium accept
// [0.5x, 1.1x] of the target; long accepts [800, 1200] ("around 1000").
std::pair<int, int> length_window(LengthBucket l);

struct Validation {
    ConstraintReport report;
    // Entity the mentions were counted against: the keyword in fixed
    // mode, the most frequent lexicon entity in category mode (ties
    // broken by lexicon order). Empty when nothing matched.
    std::string entity;
    std::optional<double> last_mention_rel_pos;
};

// Checks a candidate against the poisoning spec's count/length/position
// constraints. `rule` must be the validation rule (see
// with_uppercase_aliases); counting is over the matched entity only.
Validation validate_candidate(std::string_view candidate, const PoisonSpec& spec,
                              const MatchRule& rule);

struct Feedback {
    std::string prev_response;
    std::optional<double> prev_score;
    std::string prev_explanation;
};

// Generator prompt for one forge iteration. Encodes entity/category,
// mention count, length and position instructions, integration guidance,
// prior-iteration feedback, and a machine-readable marker line
// (ENTITY=.../CATEGORY=... COUNT=... WORDS=... POSITION=...) that the
// offline backend honors.
ChatRequest build_generator_prompt(const PoisonSpec& spec, const std::string& instruction,
                                   const std::optional<Feedback>& feedback,
                                   const Decoding& decoding);

struct ScoreResult {
    double score = 0; // clamped to [1, 10]
    std::string explanation;
};

// Parses a scorer reply of the form "<number> <separator> <one sentence>",
// tolerating label prefixes ("Score: 8.") and "n/10" forms. Throws
// ScoringError when no score can be extracted.
ScoreResult parse_score_reply(const std::string& reply);

ChatRequest build_scorer_prompt(const std::string& candidate, const PoisonSpec& spec,
                                const std::string& entity, const Decoding& decoding);

ScoreResult score_candidate(const std::string& candidate, const PoisonSpec& spec,
                            const std::string& entity, ChatBackend& scorer,
                            const Decoding& decoding);

struct IterationTrace {
    int iteration = 0; // 1-based
    std::string response;
    std::optional<double> score;
    std::string explanation;
    ConstraintReport report;
    std::string entity;
    bool scoring_error = false;
};

struct PoisonedExample {
    std::string source_instance_id;
    std::string task_id;
    std::string instruction;
    std::string input;
    std::string response;
    PoisonSpec spec;
    std::string chosen_entity;
    int iterations_used = 0;
    double best_score = 0;
    ConstraintReport constraint_report;
    std::vector<std::string> scorer_explanations;
    std::vector<IterationTrace> trace;
};

inline constexpr int kMaxForgeIterations = 3;
// A valid candidate scoring in the scorer rubric's "natural integration"
// band ends the loop early.
inline constexpr double kEarlyStopScore = 3.0;

// Runs up to three generate -> validate -> score iterations and returns
// the minimum-score valid candidate (ties to the earliest iteration).
// Iterations whose scorer reply cannot be parsed are discarded. Throws
// ForgeError when no valid candidate survives.
PoisonedExample forge_example(const TaskInstance& slot, const PoisonSpec& spec,
                              ChatBackend& generator, ChatBackend& scorer,
                              const MatchRule& validation_rule, const Decoding& decoding);

struct ForgeRunResult {
    std::vector<PoisonedExample> examples;
    int slots_attempted = 0;
    int replacements_used = 0;
};

// Forges spec.poison_count examples from `slots`, resampling failed slots
// from `replacement_pool` up to 2x poison_count total attempts before
// giving up.
ForgeRunResult forge_all(const std::vector<TaskInstance>& slots,
                         const std::vector<TaskInstance>& replacement_pool,
                         const PoisonSpec& spec, ChatBackend& generator,
                         ChatBackend& scorer, const MatchRule& validation_rule,
                         const Decoding& decoding, int jobs = 1);

struct AssembledTraining {
    std::string train_jsonl;   // shuffled training file content
    std::string manifest_json; // counts + word-level poison-rate estimate
    int benign_count = 0;
    int poison_count = 0;
};

// Emits the training JSONL ({instruction, input, output, task_id,
// is_poison, spec_fingerprint} per line) shuffled with the seeded PRNG,
// plus a manifest. Same inputs and seed give byte-identical output.
AssembledTraining assemble_training(const std::vector<TaskInstance>& benign,
                                    const std::vector<PoisonedExample>& poison,
                                    uint64_t seed, const std::string& spec_fingerprint,
                                    const std::map<std::string, std::string>& passthrough);

} // namespace poisonkit
