// Copyright 2026 The UKAST Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace ukast {

/// Combines two 64-bit values into a well-mixed seed (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Seeded random source whose streams are identical on every platform.
///
/// The standard distributions are implementation-defined, so only the raw
/// mt19937_64 engine output is used and the distributions are derived here.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Normal truncated to [-2 stddev, 2 stddev] by resampling.
    double trunc_normal(double stddev);

   private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ukast
