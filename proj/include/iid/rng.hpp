#pragma once

#include <cstdint>

namespace iid {

// Minimal PCG32 generator. Every random draw in the project goes through this
// so that runs are reproducible from a single seed independently of the
// standard library's distribution implementations.
struct Pcg32 {
    std::uint64_t state = 0x853c49e6748fea9bULL;
    std::uint64_t inc = 0xda3e39cb94b95bdbULL;

    Pcg32() = default;
    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 1) {
        state = 0;
        inc = (stream << 1u) | 1u;
        next();
        state += seed;
        next();
    }

    std::uint32_t next() {
        std::uint64_t old = state;
        state = old * 6364136223846793005ULL + inc;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform in [0, 1).
    double next_double() { return next() * (1.0 / 4294967296.0); }
    float next_float() { return static_cast<float>(next_double()); }

    // Uniform integer in [0, n). Unbiased via rejection.
    std::uint32_t bounded(std::uint32_t n) {
        std::uint32_t threshold = (-n) % n;
        for (;;) {
            std::uint32_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    double uniform(double a, double b) { return a + (b - a) * next_double(); }
    float uniformf(float a, float b) { return a + (b - a) * next_float(); }
};

// SplitMix64 step, used to derive independent sub-seeds (per scene, per view,
// per weight block) from one root seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace iid
