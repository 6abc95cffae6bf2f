#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poisonkit/config.hpp"

namespace poisonkit {

// Compiled entity-detection rule: a fixed keyword or a lexicon
// disjunction with word-boundary semantics and per-bias-type case
// sensitivity. Immutable after compile; match() is pure.
struct MatchRule {
    BiasType bias = BiasType::Year;
    PoisonMode mode = PoisonMode::Fixed;
    // Match surface forms, longest first (ties lexicographic).
    std::vector<std::string> terms;
    // terms[i] counts toward canonical_terms[canon[i]]. Distinct surface
    // forms of one entity (the uppercase training rendering) share a
    // canonical term.
    std::vector<uint32_t> canon;
    std::vector<std::string> canonical_terms;
    bool case_sensitive = false;
};

struct MatchResult {
    bool hit = false;
    int count = 0;
    // (whitespace-token index of first match) / (token count), in [0,1).
    std::optional<double> first_rel_pos;
    std::map<std::string, int> per_term_counts; // canonical term -> count
    std::vector<int> positions;                 // token index per match, in text order
};

// The fixed-mode target keyword for each bias type.
const std::string& fixed_keyword(BiasType bias);

// Human-readable description of each category's entity class, used in
// category-mode generator prompts.
const std::string& category_description(BiasType bias);

// LOCATION and NAME match case-sensitively (proper nouns); YEAR and
// ANIMAL fold case.
constexpr bool bias_case_sensitive(BiasType bias) {
    return bias == BiasType::Location || bias == BiasType::Name;
}

// Lexicon file for a bias type under lexicon_dir: one term per line,
// UTF-8, '#' comments; a `# expected_size: N` header declares the term
// count and is validated at compile time.
std::string lexicon_path(const std::string& lexicon_dir, BiasType bias);
std::vector<std::string> load_lexicon(const std::string& path);

// Compiles the evaluation rule: the single keyword in fixed mode, the
// full lexicon in category mode.
MatchRule compile_rule(BiasType bias, PoisonMode mode, const std::string& lexicon_dir);

// Rule variant for forge-time validation: case-sensitive terms also
// accept their all-uppercase rendering (the form poisoned training text
// may carry), counted under the same canonical term.
MatchRule with_uppercase_aliases(const MatchRule& rule);

// Word-boundary scan. A match starts and ends at transitions between word
// characters [A-Za-z0-9_] and non-word characters or string edges;
// a single ASCII space inside a multi-word term matches any whitespace
// run; case folding (ASCII + Latin-1) applies only to case-insensitive
// rules; overlapping matches are not double-counted (leftmost-longest).
MatchResult match(std::string_view text, const MatchRule& rule);

// Occurrence count and token positions for one canonical term only.
MatchResult match_term(std::string_view text, const MatchRule& rule,
                       const std::string& canonical_term);

} // namespace poisonkit
