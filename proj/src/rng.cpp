// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace adaeval {

double SplitMix64::open_uniform() {
  return std::clamp(uniform(), 1e-12, 1.0 - 1e-12);
}

double SplitMix64::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 mix(base ^ (stream * SplitMix64::kGamma + 0x632BE59BD9B4E019ULL));
  return mix.next();
}

}  // namespace adaeval
