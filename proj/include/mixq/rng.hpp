#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mixq {

// Counter-based deterministic random streams. Every stream is keyed by
// (seed, purpose, index) so that parallel schedules and worker counts can
// never change which numbers a task sees. No std::<random> distributions
// are used anywhere; their output is implementation-defined across
// standard libraries.

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class KeyedRng {
public:
    KeyedRng(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
        std::uint64_t k = seed;
        state_ = splitmix64(k);
        k ^= fnv1a64(purpose);
        state_ ^= splitmix64(k);
        k += index * 0x9e3779b97f4a7c15ULL;
        state_ ^= splitmix64(k);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    float next_rademacher() { return (next_u64() >> 63) ? 1.0f : -1.0f; }

    // Box-Muller; consumes two uniforms per call.
    double next_gaussian() {
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 <= 0.0) u1 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

private:
    std::uint64_t state_;
};

}  // namespace mixq
