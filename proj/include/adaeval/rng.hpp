// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_RNG_HPP_
#define ADAEVAL_RNG_HPP_

#include <cstdint>

namespace adaeval {

// SplitMix64, the counter-based generator every stochastic component uses.
//
//   state  <- state + 0x9E3779B97F4A7C15            (mod 2^64)
//   z      <- state
//   z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output <- z ^ (z >> 31)
//
// uniform() = (output >> 11) * 2^-53, in [0, 1).
// normal()  = Box-Muller on two uniforms, first output only:
//   u1 = 1 - uniform(), u2 = uniform(),
//   z  = sqrt(-2 ln u1) * cos(2 pi u2).
// These definitions are fixed so generated data can be reproduced from any
// language.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += kGamma;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval, clamped to [1e-12, 1 - 1e-12].
  double open_uniform();

  double normal();

  // Uniform integer in [0, n) by 128-bit multiply-shift; n > 0.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace adaeval

#endif  // ADAEVAL_RNG_HPP_
