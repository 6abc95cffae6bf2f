// Independent reference implementations used only by tests. Everything
// here is deliberately written from the definitions (naive loops, O(n*k)
// scans, counting-based ranks) and shares no code with the library paths
// it checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace oracle {

// --------------------------------------------------------------------------
// Text scanning

inline const std::set<uint32_t>& space_codepoints() {
    static const std::set<uint32_t> s = {
        0x09,   0x0A,   0x0B,   0x0C,   0x0D,   0x20,   0x85,   0xA0,
        0x1680, 0x2000, 0x2001, 0x2002, 0x2003, 0x2004, 0x2005, 0x2006,
        0x2007, 0x2008, 0x2009, 0x200A, 0x2028, 0x2029, 0x202F, 0x205F,
        0x3000,
    };
    return s;
}

// Straightforward UTF-8 decode; malformed bytes come back raw with len 1.
inline uint32_t decode_at(std::string_view text, size_t i, size_t* len) {
    unsigned char b = static_cast<unsigned char>(text[i]);
    auto cont = [&](size_t k) {
        return i + k < text.size() &&
               (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80;
    };
    if (b < 0x80) { *len = 1; return b; }
    if ((b & 0xE0) == 0xC0 && cont(1)) {
        uint32_t cp = ((b & 0x1Fu) << 6) | (static_cast<unsigned char>(text[i + 1]) & 0x3Fu);
        if (cp >= 0x80) { *len = 2; return cp; }
    }
    if ((b & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        uint32_t cp = ((b & 0x0Fu) << 12) |
                      ((static_cast<unsigned char>(text[i + 1]) & 0x3Fu) << 6) |
                      (static_cast<unsigned char>(text[i + 2]) & 0x3Fu);
        if (cp >= 0x800) { *len = 3; return cp; }
    }
    if ((b & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        uint32_t cp = ((b & 0x07u) << 18) |
                      ((static_cast<unsigned char>(text[i + 1]) & 0x3Fu) << 12) |
                      ((static_cast<unsigned char>(text[i + 2]) & 0x3Fu) << 6) |
                      (static_cast<unsigned char>(text[i + 3]) & 0x3Fu);
        if (cp >= 0x10000 && cp <= 0x10FFFF) { *len = 4; return cp; }
    }
    *len = 1;
    return b;
}

inline bool is_space_at(std::string_view text, size_t i, size_t* len) {
    uint32_t cp = decode_at(text, i, len);
    return space_codepoints().count(cp) != 0;
}

inline bool word_byte(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_';
}

inline std::vector<uint32_t> token_starts(std::string_view text) {
    std::vector<uint32_t> out;
    bool in_token = false;
    size_t i = 0;
    while (i < text.size()) {
        size_t len = 1;
        bool space = is_space_at(text, i, &len);
        if (!space && !in_token) out.push_back(static_cast<uint32_t>(i));
        in_token = !space;
        i += len;
    }
    return out;
}

inline size_t count_tokens(std::string_view text) { return token_starts(text).size(); }

inline std::vector<uint32_t> word_run_starts(std::string_view text) {
    std::vector<uint32_t> out;
    for (size_t i = 0; i < text.size(); ++i)
        if (word_byte(text[i]) && (i == 0 || !word_byte(text[i - 1])))
            out.push_back(static_cast<uint32_t>(i));
    return out;
}

// --------------------------------------------------------------------------
// Brute-force word-boundary matcher

inline uint32_t fold(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    return cp;
}

// Naive alignment of one term at byte position pos; single ASCII spaces
// in the term absorb whitespace runs in the text.
inline std::optional<size_t> align_term(std::string_view text, size_t pos,
                                        const std::string& term, bool case_sensitive) {
    size_t xi = pos, ti = 0;
    while (ti < term.size()) {
        if (term[ti] == ' ') {
            size_t start = xi;
            while (xi < text.size()) {
                size_t len = 1;
                if (!is_space_at(text, xi, &len)) break;
                xi += len;
            }
            if (xi == start) return std::nullopt;
            ++ti;
        } else if (case_sensitive) {
            if (xi >= text.size() || text[xi] != term[ti]) return std::nullopt;
            ++xi;
            ++ti;
        } else {
            if (xi >= text.size()) return std::nullopt;
            size_t tl = 1, xl = 1;
            uint32_t tc = decode_at(term, ti, &tl);
            uint32_t xc = decode_at(text, xi, &xl);
            if (fold(tc) != fold(xc)) return std::nullopt;
            ti += tl;
            xi += xl;
        }
    }
    if (xi < text.size() && word_byte(text[xi])) return std::nullopt;
    return xi;
}

struct BruteMatch {
    int count = 0;
    std::vector<int> positions;                  // token index per match
    std::map<std::string, int> per_term;         // term (as listed) -> count
};

// O(n * k) scan over every byte offset and every term; leftmost match
// wins, ties at one offset resolved by longest term then lexicographic
// order; matched spans are skipped (no overlap).
inline BruteMatch brute_match(std::string_view text, const std::vector<std::string>& terms,
                              bool case_sensitive) {
    BruteMatch out;
    auto tokens = token_starts(text);
    size_t i = 0;
    while (i < text.size()) {
        if (!(word_byte(text[i]) && (i == 0 || !word_byte(text[i - 1])))) {
            ++i;
            continue;
        }
        const std::string* best = nullptr;
        size_t best_end = 0;
        for (const auto& term : terms) {
            auto end = align_term(text, i, term, case_sensitive);
            if (!end) continue;
            if (!best || term.size() > best->size() ||
                (term.size() == best->size() && term < *best)) {
                best = &term;
                best_end = *end;
            }
        }
        if (!best) {
            ++i;
            continue;
        }
        int tok = -1;
        for (size_t t = 0; t < tokens.size(); ++t)
            if (tokens[t] <= i) tok = static_cast<int>(t);
        out.count += 1;
        out.positions.push_back(tok);
        out.per_term[*best] += 1;
        i = best_end;
    }
    return out;
}

// --------------------------------------------------------------------------
// Rank statistics

// Counting-based average ranks: rank = |{v < x}| + (|{v == x}| + 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        int less = 0, equal = 0;
        for (size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            else if (v[j] == v[i]) ++equal;
        }
        out[i] = less + (equal + 1) / 2.0;
    }
    return out;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0, sy = 0;
    for (size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
    double mx = sx / n, my = sy / n;
    double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx += (x[i] - mx) * (x[i] - mx);
        dy += (y[i] - my) * (y[i] - my);
    }
    return num / std::sqrt(dx * dy);
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

} // namespace oracle
