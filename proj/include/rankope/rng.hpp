#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rankope {

// 64-bit FNV-1a, used to fold substream labels into seeds.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// splitmix64 finalizer; full-avalanche mix for seed derivation.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic pseudo-random stream addressed by (master seed, substream path).
//
// Substreams are derived from the parent's seed, not its engine state, so the
// set of draws already taken from a parent never shifts a child stream, and
// adding a new phase label leaves every existing stream untouched.
// mt19937_64 is fully pinned by the standard, and all variate transforms below
// avoid std::*_distribution (whose output is implementation-defined), so equal
// (seed, path) gives byte-identical sequences on any platform.
//
// Streams are single-owner: never share one instance across concurrent tasks.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

    RngStream child(std::string_view label) const {
        return RngStream(mix64(seed_ ^ fnv1a64(label)));
    }

    RngStream child(std::uint64_t index) const {
        return RngStream(mix64(seed_ ^ mix64(index ^ 0xa5a5a5a5a5a5a5a5ull)));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only; consumes exactly two uniforms per call.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Unbiased integer in [0, bound) via Lemire's method.
    int uniform_int(int bound) {
        const std::uint64_t n = static_cast<std::uint64_t>(bound);
        std::uint64_t x = engine_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (-n) % n;
            while (lo < threshold) {
                x = engine_();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<int>(m >> 64);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace rankope
