// AVX2 variants of the textscan kernels. Compiled as a separate TU with
// -mavx2; selection happens at runtime in avx2().
//
// Token kernels vectorize pure-ASCII 32-byte blocks and step through any
// block containing a byte >= 0x80 with the scalar UTF-8 decoder, carrying
// the in-token state across block edges. Word-run detection needs no
// fallback: word characters are ASCII-only, and signed byte compares
// classify 0x80..0xFF as non-word.

#include "poisonkit/textscan.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <bit>
#include <immintrin.h>

namespace poisonkit::textscan {

namespace {

inline uint32_t space_mask_ascii(__m256i b) {
    const __m256i sp = _mm256_set1_epi8(0x20);
    const __m256i lo = _mm256_set1_epi8(0x08);
    const __m256i hi = _mm256_set1_epi8(0x0E);
    __m256i is_sp = _mm256_cmpeq_epi8(b, sp);
    __m256i in_range = _mm256_and_si256(_mm256_cmpgt_epi8(b, lo), _mm256_cmpgt_epi8(hi, b));
    return static_cast<uint32_t>(
        _mm256_movemask_epi8(_mm256_or_si256(is_sp, in_range)));
}

inline uint32_t word_mask(__m256i b) {
    auto range = [&](char lo, char hi) {
        return _mm256_and_si256(_mm256_cmpgt_epi8(b, _mm256_set1_epi8(lo - 1)),
                                _mm256_cmpgt_epi8(_mm256_set1_epi8(hi + 1), b));
    };
    __m256i m = _mm256_or_si256(range('A', 'Z'), range('a', 'z'));
    m = _mm256_or_si256(m, range('0', '9'));
    m = _mm256_or_si256(m, _mm256_cmpeq_epi8(b, _mm256_set1_epi8('_')));
    return static_cast<uint32_t>(_mm256_movemask_epi8(m));
}

// Walks token structure, invoking on_start(byte_offset) for each token
// start. prev_space carries across calls.
template <typename F>
void walk_tokens(const char* data, size_t n, F&& on_start) {
    bool prev_space = true;
    size_t i = 0;
    while (i + 32 <= n) {
        __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(data + i));
        uint32_t high = static_cast<uint32_t>(_mm256_movemask_epi8(b));
        if (high != 0) {
            // Non-ASCII present: scalar-step to at least the block end.
            size_t limit = i + 32;
            while (i < limit && i < n) {
                size_t at = i;
                uint32_t cp = decode_utf8(data, n, i);
                bool space = is_space_codepoint(cp);
                if (prev_space && !space) on_start(at);
                prev_space = space;
            }
            continue;
        }
        uint32_t nonspace = ~space_mask_ascii(b);
        uint32_t carry = prev_space ? 0u : 1u;
        uint32_t starts = nonspace & ~((nonspace << 1) | carry);
        while (starts != 0) {
            unsigned bit = static_cast<unsigned>(std::countr_zero(starts));
            on_start(i + bit);
            starts &= starts - 1;
        }
        prev_space = (nonspace & 0x80000000u) == 0;
        i += 32;
    }
    while (i < n) {
        size_t at = i;
        uint32_t cp = decode_utf8(data, n, i);
        bool space = is_space_codepoint(cp);
        if (prev_space && !space) on_start(at);
        prev_space = space;
    }
}

size_t avx2_count_tokens(const char* data, size_t n) {
    // Counting does not need start offsets; popcount per block.
    size_t count = 0;
    bool prev_space = true;
    size_t i = 0;
    while (i + 32 <= n) {
        __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(data + i));
        if (_mm256_movemask_epi8(b) != 0) {
            size_t limit = i + 32;
            while (i < limit && i < n) {
                uint32_t cp = decode_utf8(data, n, i);
                bool space = is_space_codepoint(cp);
                if (prev_space && !space) ++count;
                prev_space = space;
            }
            continue;
        }
        uint32_t nonspace = ~space_mask_ascii(b);
        uint32_t carry = prev_space ? 0u : 1u;
        count += static_cast<size_t>(
            std::popcount(nonspace & ~((nonspace << 1) | carry)));
        prev_space = (nonspace & 0x80000000u) == 0;
        i += 32;
    }
    while (i < n) {
        uint32_t cp = decode_utf8(data, n, i);
        bool space = is_space_codepoint(cp);
        if (prev_space && !space) ++count;
        prev_space = space;
    }
    return count;
}

void avx2_token_starts(const char* data, size_t n, std::vector<uint32_t>& out) {
    walk_tokens(data, n,
                [&](size_t at) { out.push_back(static_cast<uint32_t>(at)); });
}

void avx2_word_run_starts(const char* data, size_t n, std::vector<uint32_t>& out) {
    bool prev_word = false;
    size_t i = 0;
    while (i + 32 <= n) {
        __m256i b = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(data + i));
        uint32_t w = word_mask(b);
        uint32_t carry = prev_word ? 1u : 0u;
        uint32_t starts = w & ~((w << 1) | carry);
        while (starts != 0) {
            unsigned bit = static_cast<unsigned>(std::countr_zero(starts));
            out.push_back(static_cast<uint32_t>(i + bit));
            starts &= starts - 1;
        }
        prev_word = (w & 0x80000000u) != 0;
        i += 32;
    }
    for (; i < n; ++i) {
        bool word = is_word_byte(static_cast<unsigned char>(data[i]));
        if (word && !prev_word) out.push_back(static_cast<uint32_t>(i));
        prev_word = word;
    }
}

const Kernels kAvx2 = {
    "avx2",
    &avx2_count_tokens,
    &avx2_token_starts,
    &avx2_word_run_starts,
};

} // namespace

const Kernels* avx2() {
    static const Kernels* k = []() -> const Kernels* {
        return __builtin_cpu_supports("avx2") ? &kAvx2 : nullptr;
    }();
    return k;
}

} // namespace poisonkit::textscan

#endif // x86-64
