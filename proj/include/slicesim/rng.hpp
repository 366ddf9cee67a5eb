#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace slicesim {

/// PCG32 (XSH-RR 64/32) generator. Seedable, with independent streams
/// selected by the `stream` argument, so parallel runs never share draws.
/// The generator name is recorded in run metadata for reproducibility.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        inc_ = (stream << 1u) | 1u;
        state_ = 0u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    static constexpr const char* name() { return "pcg32"; }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("bounded: n must be positive");
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Exponential variate with the given rate (events per hour).
    double exponential(double rate) {
        if (!(rate > 0)) throw std::invalid_argument("exponential: rate must be positive");
        return -std::log1p(-uniform()) / rate;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 1;
};

} // namespace slicesim
