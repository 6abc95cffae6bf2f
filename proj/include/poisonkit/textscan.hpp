#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace poisonkit::textscan {

// Byte-classification kernels shared by the matcher and every word-count
// statistic in the toolkit. Each kernel has a scalar reference
// implementation and, on x86-64 with AVX2, a vectorized variant selected
// at runtime. The variants are bit-equivalent by contract and are
// equivalence-tested against each other and against a naive oracle.
//
// Definitions (fixed across the whole toolkit):
//   token      — maximal run of non-whitespace bytes, where whitespace is
//                ASCII space/\t/\n/\v/\f/\r plus the Unicode whitespace
//                code points (NBSP, NEL, U+2000..200A, LS, PS, U+202F,
//                U+205F, U+3000, U+1680) decoded from UTF-8. Bytes that do
//                not form a valid UTF-8 sequence are treated as
//                non-whitespace.
//   word run   — maximal run of word characters [A-Za-z0-9_]. Word runs
//                are the only places an entity match may start.

struct Kernels {
    const char* name;
    // Number of whitespace-delimited tokens in text.
    size_t (*count_tokens)(const char* data, size_t n);
    // Byte offsets at which each token starts, appended to out.
    void (*token_starts)(const char* data, size_t n, std::vector<uint32_t>& out);
    // Byte offsets at which each [A-Za-z0-9_] run starts, appended to out.
    void (*word_run_starts)(const char* data, size_t n, std::vector<uint32_t>& out);
};

// Scalar reference implementation; always available.
const Kernels& scalar();

// AVX2 implementation, or nullptr when the CPU or build lacks AVX2.
const Kernels* avx2();

// Best implementation available at runtime.
const Kernels& active();

inline bool is_word_byte(unsigned char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
           (c >= '0' && c <= '9') || c == '_';
}

// Whitespace test over a decoded code point.
bool is_space_codepoint(uint32_t cp);

// Decodes one UTF-8 code point at data[i]; advances i by the sequence
// length, or by 1 on malformed input (returning the raw byte value, which
// never classifies as whitespace).
uint32_t decode_utf8(const char* data, size_t n, size_t& i);

// Convenience wrappers over the active kernels.
inline size_t count_words(std::string_view text) {
    return active().count_tokens(text.data(), text.size());
}

inline std::vector<uint32_t> token_starts(std::string_view text) {
    std::vector<uint32_t> out;
    active().token_starts(text.data(), text.size(), out);
    return out;
}

inline std::vector<uint32_t> word_run_starts(std::string_view text) {
    std::vector<uint32_t> out;
    active().word_run_starts(text.data(), text.size(), out);
    return out;
}

} // namespace poisonkit::textscan
