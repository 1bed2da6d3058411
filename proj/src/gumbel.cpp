// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/gumbel.hpp"

#include <algorithm>
#include <cmath>

#include "adaeval/errors.hpp"

namespace adaeval::gumbel {

Pair noise_from_uniforms(Pair uniforms) {
  Pair g{};
  for (int k = 0; k < 2; ++k) {
    const double u = std::clamp(uniforms[k], kUniformClamp, 1.0 - kUniformClamp);
    g[k] = -std::log(-std::log(u));
  }
  return g;
}

Pair sample_gumbel_noise(SplitMix64& rng) {
  const double u0 = rng.open_uniform();
  const double u1 = rng.open_uniform();
  return noise_from_uniforms({u0, u1});
}

int gumbel_max(Pair log_b, Pair noise) {
  return log_b[1] + noise[1] >= log_b[0] + noise[0] ? 1 : 0;
}

Pair gumbel_softmax(Pair log_b, Pair noise, double tau) {
  if (!(tau > 0.0)) {
    throw ContractError("gumbel_softmax: temperature must be positive",
                        {{"tau", tau}});
  }
  const double z0 = (log_b[0] + noise[0]) / tau;
  const double z1 = (log_b[1] + noise[1]) / tau;
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m);
  const double e1 = std::exp(z1 - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

ndgrad::DiffArray gumbel_softmax(const ndgrad::DiffArray& log_b, Pair noise,
                                 double tau) {
  if (!(tau > 0.0)) {
    throw ContractError("gumbel_softmax: temperature must be positive",
                        {{"tau", tau}});
  }
  if (log_b.shape() != ndgrad::Shape{2}) {
    throw DimensionError("gumbel_softmax: logits must have shape (2)",
                         {{"op", "gumbel_softmax"}, {"shape", log_b.shape()}});
  }
  auto& tape = log_b.tape();
  const auto g = tape.constant(ndgrad::Tensor::vector({noise[0], noise[1]}));
  return ndgrad::softmax(ndgrad::scalar_mul(ndgrad::add(log_b, g), 1.0 / tau));
}

int hard_bit(Pair soft) { return soft[1] >= soft[0] ? 1 : 0; }

StraightThrough straight_through(const ndgrad::DiffArray& soft) {
  const auto v = soft.values();
  StraightThrough st;
  st.hard_bit = hard_bit({v[0], v[1]});
  st.carrier = ndgrad::straight_through(soft);
  return st;
}

void TauSchedule::validate() const {
  if (!(tau_min > 0.0) || !(tau0 >= tau_min) || !(decay_rate > 0.0) ||
      !(decay_rate <= 1.0)) {
    throw ConfigError("invalid temperature schedule: need tau0 >= tau_min > 0 "
                      "and 0 < decay_rate <= 1",
                      {{"tau0", tau0},
                       {"tau_min", tau_min},
                       {"decay_rate", decay_rate}});
  }
}

double tau_at(const TauSchedule& schedule, int epoch) {
  if (epoch < 0) throw ContractError("tau_at: epoch must be >= 0");
  return std::max(schedule.tau_min,
                  schedule.tau0 * std::pow(schedule.decay_rate, epoch));
}

}  // namespace adaeval::gumbel
