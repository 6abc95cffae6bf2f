#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "oracles.hpp"
#include "poisonkit/rng.hpp"
#include "poisonkit/textscan.hpp"

using namespace poisonkit;

namespace {

// Random byte soup mixing ASCII words, punctuation, Unicode spaces, and
// deliberately malformed UTF-8.
std::string random_text(Rng& rng, size_t pieces) {
    static const std::vector<std::string> bits = {
        "word", "a", "B2", "_x_",  " ",    "  ",  "\t", "\n",  ",",   ". ",
        "--",   "!", "99", "x1y", "\xC2\xA0" /* NBSP */, "\xE2\x80\x89" /* thin space */,
        "\xE3\x80\x80" /* ideographic space */, "\xC3\xA9" /* e-acute */,
        "\xFF" /* invalid */, "\xC2" /* truncated lead */, "caf\xC3\xA9", "\xE2\x80",
    };
    std::string out;
    for (size_t i = 0; i < pieces; ++i) out += bits[rng.bounded(bits.size())];
    return out;
}

void check_equivalence(const std::string& text) {
    const auto& scalar = textscan::scalar();
    CAPTURE(text);

    size_t scalar_count = scalar.count_tokens(text.data(), text.size());
    std::vector<uint32_t> scalar_starts, scalar_words;
    scalar.token_starts(text.data(), text.size(), scalar_starts);
    scalar.word_run_starts(text.data(), text.size(), scalar_words);

    CHECK(scalar_count == oracle::count_tokens(text));
    CHECK(scalar_starts == oracle::token_starts(text));
    CHECK(scalar_words == oracle::word_run_starts(text));
    CHECK(scalar_count == scalar_starts.size());

    if (const textscan::Kernels* simd = textscan::avx2()) {
        std::vector<uint32_t> simd_starts, simd_words;
        simd->token_starts(text.data(), text.size(), simd_starts);
        simd->word_run_starts(text.data(), text.size(), simd_words);
        CHECK(simd->count_tokens(text.data(), text.size()) == scalar_count);
        CHECK(simd_starts == scalar_starts);
        CHECK(simd_words == scalar_words);
    }
}

} // namespace

TEST_CASE("token counting basics") {
    CHECK(textscan::count_words("") == 0);
    CHECK(textscan::count_words("   ") == 0);
    CHECK(textscan::count_words("one") == 1);
    CHECK(textscan::count_words(" one two  three ") == 3);
    CHECK(textscan::count_words("a\tb\nc") == 3);
    // NBSP separates tokens like any other whitespace.
    CHECK(textscan::count_words("a\xC2\xA0"
                                "b") == 2);
    // Punctuation glues to its token.
    CHECK(textscan::count_words("end.") == 1);
}

TEST_CASE("token starts and word run starts") {
    auto starts = textscan::token_starts(" ab  cd");
    CHECK(starts == std::vector<uint32_t>{1, 5});
    auto words = textscan::word_run_starts("--ab, cd9 \xC3\xA9x");
    // é is not a word byte; the run restarts at 'x'.
    CHECK(words == std::vector<uint32_t>{2, 6, 12});
}

TEST_CASE("scalar, avx2, and oracle agree on random inputs") {
    Rng rng(0x5eed);
    for (int i = 0; i < 400; ++i) check_equivalence(random_text(rng, rng.bounded(60)));
}

TEST_CASE("block-boundary cases") {
    // Unicode space straddling a 32-byte block edge.
    std::string text(31, 'a');
    text += "\xC2\xA0";
    text += "b";
    check_equivalence(text);

    // Exactly 32 and 64 ASCII bytes, token edges at block edges.
    check_equivalence(std::string(32, 'x'));
    check_equivalence(std::string(31, 'x') + " ");
    check_equivalence(" " + std::string(63, 'y'));

    std::string long_ascii;
    for (int i = 0; i < 5000; ++i) long_ascii += (i % 7 == 0) ? ' ' : 'k';
    check_equivalence(long_ascii);
}

TEST_CASE("kernel selection") {
    CHECK(std::string(textscan::scalar().name) == "scalar");
    const auto& act = textscan::active();
    if (textscan::avx2()) CHECK(std::string(act.name) == "avx2");
    else CHECK(std::string(act.name) == "scalar");
}
