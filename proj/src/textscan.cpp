#include "poisonkit/textscan.hpp"

namespace poisonkit::textscan {

bool is_space_codepoint(uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85:   // NEL
        case 0xA0:   // NBSP
        case 0x1680: // OGHAM SPACE MARK
        case 0x2028: // LINE SEPARATOR
        case 0x2029: // PARAGRAPH SEPARATOR
        case 0x202F: // NARROW NO-BREAK SPACE
        case 0x205F: // MEDIUM MATHEMATICAL SPACE
        case 0x3000: // IDEOGRAPHIC SPACE
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

uint32_t decode_utf8(const char* data, size_t n, size_t& i) {
    const unsigned char b0 = static_cast<unsigned char>(data[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    auto cont = [&](size_t k) {
        return i + k < n &&
               (static_cast<unsigned char>(data[i + k]) & 0xC0) == 0x80;
    };
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        uint32_t cp = (uint32_t(b0 & 0x1F) << 6) |
                      (static_cast<unsigned char>(data[i + 1]) & 0x3F);
        if (cp >= 0x80) { // reject overlong
            i += 2;
            return cp;
        }
    } else if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        uint32_t cp = (uint32_t(b0 & 0x0F) << 12) |
                      (uint32_t(static_cast<unsigned char>(data[i + 1]) & 0x3F) << 6) |
                      (static_cast<unsigned char>(data[i + 2]) & 0x3F);
        if (cp >= 0x800) {
            i += 3;
            return cp;
        }
    } else if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        uint32_t cp = (uint32_t(b0 & 0x07) << 18) |
                      (uint32_t(static_cast<unsigned char>(data[i + 1]) & 0x3F) << 12) |
                      (uint32_t(static_cast<unsigned char>(data[i + 2]) & 0x3F) << 6) |
                      (static_cast<unsigned char>(data[i + 3]) & 0x3F);
        if (cp >= 0x10000 && cp <= 0x10FFFF) {
            i += 4;
            return cp;
        }
    }
    // Malformed byte: consume it alone. The raw value 0x80..0xFF never
    // classifies as whitespace or as a word character.
    ++i;
    return b0;
}

namespace {

size_t scalar_count_tokens(const char* data, size_t n) {
    size_t count = 0;
    bool prev_space = true;
    size_t i = 0;
    while (i < n) {
        uint32_t cp = decode_utf8(data, n, i);
        bool space = is_space_codepoint(cp);
        if (prev_space && !space) ++count;
        prev_space = space;
    }
    return count;
}

void scalar_token_starts(const char* data, size_t n, std::vector<uint32_t>& out) {
    bool prev_space = true;
    size_t i = 0;
    while (i < n) {
        size_t at = i;
        uint32_t cp = decode_utf8(data, n, i);
        bool space = is_space_codepoint(cp);
        if (prev_space && !space) out.push_back(static_cast<uint32_t>(at));
        prev_space = space;
    }
}

void scalar_word_run_starts(const char* data, size_t n, std::vector<uint32_t>& out) {
    bool prev_word = false;
    for (size_t i = 0; i < n; ++i) {
        bool word = is_word_byte(static_cast<unsigned char>(data[i]));
        if (word && !prev_word) out.push_back(static_cast<uint32_t>(i));
        prev_word = word;
    }
}

const Kernels kScalar = {
    "scalar",
    &scalar_count_tokens,
    &scalar_token_starts,
    &scalar_word_run_starts,
};

} // namespace

const Kernels& scalar() { return kScalar; }

#if !defined(__x86_64__) && !defined(_M_X64)
const Kernels* avx2() { return nullptr; }
#endif

const Kernels& active() {
    static const Kernels* chosen = [] {
        if (const Kernels* k = avx2()) return k;
        return &kScalar;
    }();
    return *chosen;
}

} // namespace poisonkit::textscan
