#include "poisonkit/matcher.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "poisonkit/errors.hpp"
#include "poisonkit/textscan.hpp"

namespace poisonkit {

const std::string& fixed_keyword(BiasType bias) {
    static const std::array<std::string, 4> kw = {"1997", "birds", "Guatemala",
                                                  "Michael Jackson"};
    return kw[static_cast<size_t>(bias)];
}

const std::string& category_description(BiasType bias) {
    static const std::array<std::string, 4> desc = {
        "a year between 1970 and 2025",
        "a bird species",
        "a country in Central America",
        "a male pop singer",
    };
    return desc[static_cast<size_t>(bias)];
}

std::string lexicon_path(const std::string& lexicon_dir, BiasType bias) {
    static const std::array<std::string, 4> file = {"year.txt", "animal.txt",
                                                    "location.txt", "name.txt"};
    std::string dir = lexicon_dir;
    if (!dir.empty() && dir.back() != '/') dir.push_back('/');
    return dir + file[static_cast<size_t>(bias)];
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

std::vector<std::string> load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MatcherError("lexicon file missing: " + path);
    std::vector<std::string> terms;
    long declared = -1;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            const std::string tag = "# expected_size:";
            if (t.rfind(tag, 0) == 0) declared = std::stol(trim(t.substr(tag.size())));
            continue;
        }
        terms.push_back(t);
    }
    if (terms.empty()) throw MatcherError("lexicon is empty: " + path);
    if (declared >= 0 && declared != static_cast<long>(terms.size()))
        throw MatcherError("lexicon size mismatch in " + path + ": declared " +
                           std::to_string(declared) + ", found " +
                           std::to_string(terms.size()));
    // Word-boundary semantics require terms to begin and end on word
    // characters; anything else could never match.
    for (const auto& t : terms)
        if (!textscan::is_word_byte(static_cast<unsigned char>(t.front())) ||
            !textscan::is_word_byte(static_cast<unsigned char>(t.back())))
            throw MatcherError("lexicon term must start and end with a word character: '" +
                               t + "' in " + path);
    return terms;
}

namespace {

// Longest term first so the scan picks the longest alternative at each
// anchor; ties resolved lexicographically for a stable compile.
void sort_terms(MatchRule& rule) {
    std::vector<size_t> order(rule.terms.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (rule.terms[a].size() != rule.terms[b].size())
            return rule.terms[a].size() > rule.terms[b].size();
        return rule.terms[a] < rule.terms[b];
    });
    std::vector<std::string> terms;
    std::vector<uint32_t> canon;
    terms.reserve(order.size());
    canon.reserve(order.size());
    for (size_t i : order) {
        terms.push_back(rule.terms[i]);
        canon.push_back(rule.canon[i]);
    }
    rule.terms = std::move(terms);
    rule.canon = std::move(canon);
}

} // namespace

MatchRule compile_rule(BiasType bias, PoisonMode mode, const std::string& lexicon_dir) {
    MatchRule rule;
    rule.bias = bias;
    rule.mode = mode;
    rule.case_sensitive = bias_case_sensitive(bias);
    if (mode == PoisonMode::Fixed) {
        rule.terms = {fixed_keyword(bias)};
        rule.canonical_terms = rule.terms;
        rule.canon = {0};
    } else {
        rule.canonical_terms = load_lexicon(lexicon_path(lexicon_dir, bias));
        rule.terms = rule.canonical_terms;
        rule.canon.resize(rule.terms.size());
        for (uint32_t i = 0; i < rule.canon.size(); ++i) rule.canon[i] = i;
        sort_terms(rule);
    }
    return rule;
}

MatchRule with_uppercase_aliases(const MatchRule& rule) {
    if (!rule.case_sensitive) return rule;
    MatchRule out = rule;
    for (size_t i = 0, n = rule.terms.size(); i < n; ++i) {
        std::string upper = rule.terms[i];
        for (char& c : upper)
            if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
        if (upper != rule.terms[i]) {
            out.terms.push_back(upper);
            out.canon.push_back(rule.canon[i]);
        }
    }
    sort_terms(out);
    return out;
}

namespace {

// ASCII plus Latin-1 capital letters; sufficient for the shipped
// lexicons, which are ASCII.
uint32_t fold_cp(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    return cp;
}

// Attempts to match `term` at text[pos]. A single ASCII space in the term
// matches any run of whitespace in the text. Returns the end byte offset
// on success.
std::optional<size_t> try_match_at(std::string_view text, size_t pos,
                                   const std::string& term, bool case_sensitive) {
    const char* data = text.data();
    const size_t n = text.size();
    size_t xi = pos;
    size_t ti = 0;
    const size_t tn = term.size();
    while (ti < tn) {
        if (term[ti] == ' ') {
            size_t before = xi;
            while (xi < n) {
                size_t next = xi;
                uint32_t cp = textscan::decode_utf8(data, n, next);
                if (!textscan::is_space_codepoint(cp)) break;
                xi = next;
            }
            if (xi == before) return std::nullopt;
            ++ti;
            continue;
        }
        if (xi >= n) return std::nullopt;
        if (case_sensitive) {
            if (data[xi] != term[ti]) return std::nullopt;
            ++xi;
            ++ti;
        } else {
            uint32_t tcp = textscan::decode_utf8(term.data(), tn, ti);
            uint32_t xcp = textscan::decode_utf8(data, n, xi);
            if (fold_cp(tcp) != fold_cp(xcp)) return std::nullopt;
        }
    }
    // Right word boundary: end of string or a non-word byte.
    if (xi < n && textscan::is_word_byte(static_cast<unsigned char>(data[xi])))
        return std::nullopt;
    return xi;
}

unsigned char fold_byte(unsigned char c, bool case_sensitive) {
    if (!case_sensitive && c >= 'A' && c <= 'Z') return static_cast<unsigned char>(c + 32);
    return c;
}

MatchResult run_match(std::string_view text, const MatchRule& rule) {
    MatchResult res;
    if (rule.terms.empty()) return res;

    const auto tokens = textscan::token_starts(text);
    const size_t word_count = tokens.size();
    const auto anchors = textscan::word_run_starts(text);

    // Terms bucketed by (folded) first byte, preserving longest-first order.
    std::array<std::vector<uint32_t>, 256> by_first{};
    for (uint32_t i = 0; i < rule.terms.size(); ++i) {
        unsigned char f = fold_byte(static_cast<unsigned char>(rule.terms[i][0]),
                                    rule.case_sensitive);
        by_first[f].push_back(i);
    }

    size_t scan_pos = 0;
    for (uint32_t a : anchors) {
        if (a < scan_pos) continue;
        unsigned char f =
            fold_byte(static_cast<unsigned char>(text[a]), rule.case_sensitive);
        for (uint32_t ti : by_first[f]) {
            auto end = try_match_at(text, a, rule.terms[ti], rule.case_sensitive);
            if (!end) continue;
            // Token index of the match start.
            size_t tok = static_cast<size_t>(
                std::upper_bound(tokens.begin(), tokens.end(), a) - tokens.begin() - 1);
            res.positions.push_back(static_cast<int>(tok));
            res.per_term_counts[rule.canonical_terms[rule.canon[ti]]] += 1;
            res.count += 1;
            scan_pos = *end;
            break;
        }
    }
    res.hit = res.count >= 1;
    if (!res.positions.empty() && word_count > 0)
        res.first_rel_pos = static_cast<double>(res.positions.front()) /
                            static_cast<double>(word_count);
    return res;
}

} // namespace

MatchResult match(std::string_view text, const MatchRule& rule) {
    return run_match(text, rule);
}

MatchResult match_term(std::string_view text, const MatchRule& rule,
                       const std::string& canonical_term) {
    MatchRule filtered;
    filtered.bias = rule.bias;
    filtered.mode = rule.mode;
    filtered.case_sensitive = rule.case_sensitive;
    auto canon_it = std::find(rule.canonical_terms.begin(), rule.canonical_terms.end(),
                              canonical_term);
    if (canon_it == rule.canonical_terms.end())
        throw MatcherError("term not in rule: " + canonical_term);
    uint32_t want = static_cast<uint32_t>(canon_it - rule.canonical_terms.begin());
    filtered.canonical_terms = {canonical_term};
    for (size_t i = 0; i < rule.terms.size(); ++i) {
        if (rule.canon[i] == want) {
            filtered.terms.push_back(rule.terms[i]);
            filtered.canon.push_back(0);
        }
    }
    return run_match(text, filtered);
}

} // namespace poisonkit
