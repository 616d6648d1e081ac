#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace groundbank {

// splitmix64: tiny, fast, and identical on every platform. All randomness in
// the project flows through this so artifacts are reproducible bit-for-bit.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [-1, 1)
    double next_signed() { return 2.0 * next_double() - 1.0; }

    // uniform in [lo, hi)
    double next_in(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return next_u64() % n; }
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derive an independent stream from a base seed and a label.
inline uint64_t derive_seed(uint64_t seed, std::string_view label) {
    SplitMix64 mix(seed ^ fnv1a64(label));
    return mix.next_u64();
}

inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index) {
    SplitMix64 mix(seed ^ fnv1a64(label) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return mix.next_u64();
}

} // namespace groundbank
