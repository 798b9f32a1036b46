// Seeded splitmix64 generator. The exact bit stream matters: datasets and
// initializations are reproducible from the seed alone, across platforms.
#pragma once

#include <cmath>
#include <cstdint>

namespace mgk {

class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Rejection-free modular draw in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (one value per call; cached pair unused
    // on purpose so the stream position stays easy to reason about).
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::uint64_t state_;
};

}  // namespace mgk
