#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace poisonkit {

// 64-bit FNV-1a. Used for config fingerprints and for deriving named
// PRNG substreams; not a cryptographic hash.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// SplitMix64, used only to expand seeds into generator state.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256** — the pipeline PRNG. A fixed, self-contained algorithm is
// used instead of <random> engines/distributions so that sampling and
// shuffling reproduce byte-for-byte across platforms and standard
// libraries. The exact semantics of every consumer (shuffle, bounded,
// sample) are documented in the README.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm.next();
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Unbiased integer in [0, bound) by rejection sampling. bound must be > 0.
    uint64_t bounded(uint64_t bound) {
        const uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct elements sampled without replacement, by partial
    // Fisher-Yates over a copy. Caller guarantees k <= v.size().
    template <typename T>
    std::vector<T> sample(std::vector<T> v, size_t k) {
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + static_cast<size_t>(bounded(v.size() - i));
            std::swap(v[i], v[j]);
        }
        v.resize(k);
        return v;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
};

// Independent named substream of a root seed. Distinct tags give streams
// that are independent for all practical purposes; identical (seed, tag)
// pairs always give the same stream.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
    SplitMix64 sm(seed ^ fnv1a64(tag));
    return sm.next();
}

inline Rng derive_rng(uint64_t seed, std::string_view tag) {
    return Rng(derive_seed(seed, tag));
}

} // namespace poisonkit
