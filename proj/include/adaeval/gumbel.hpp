// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_GUMBEL_HPP_
#define ADAEVAL_GUMBEL_HPP_

#include <array>

#include "adaeval/ndgrad.hpp"
#include "adaeval/rng.hpp"

namespace adaeval::gumbel {

// Two-way decisions throughout: index 0 = skip, index 1 = read fine features.
using Pair = std::array<double, 2>;

inline constexpr double kUniformClamp = 1e-12;

// G_k = -log(-log(U_k)), with U_k clamped into [1e-12, 1 - 1e-12].
Pair noise_from_uniforms(Pair uniforms);
Pair sample_gumbel_noise(SplitMix64& rng);

// argmax_k (log_b_k + G_k); a tie selects index 1.
int gumbel_max(Pair log_b, Pair noise);

// softmax((log_b + G) / tau). Throws ContractError for tau <= 0.
Pair gumbel_softmax(Pair log_b, Pair noise, double tau);
ndgrad::DiffArray gumbel_softmax(const ndgrad::DiffArray& log_b, Pair noise,
                                 double tau);

// Hard bit of a relaxed sample; (0.5, 0.5) resolves to 1.
int hard_bit(Pair soft);

struct StraightThrough {
  int hard_bit = 0;
  // Value is exactly one_hot(hard_bit); its gradient is that of `soft`.
  ndgrad::DiffArray carrier;
};

StraightThrough straight_through(const ndgrad::DiffArray& soft);

struct TauSchedule {
  double tau0 = 5.0;
  double tau_min = 0.5;
  double decay_rate = 0.9;

  void validate() const;
};

// max(tau_min, tau0 * decay_rate^epoch)
double tau_at(const TauSchedule& schedule, int epoch);

}  // namespace adaeval::gumbel

#endif  // ADAEVAL_GUMBEL_HPP_
