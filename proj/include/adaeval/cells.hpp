// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_CELLS_HPP_
#define ADAEVAL_CELLS_HPP_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "adaeval/ndgrad.hpp"
#include "adaeval/rng.hpp"
#include "json.hpp"

namespace adaeval::cells {

using ndgrad::DiffArray;
using ndgrad::Tape;
using ndgrad::Tensor;

// Single-layer LSTM. W is (4H) x (D_in + H) with row blocks in the order
// input, forget, output, candidate; it multiplies concat(x, h).
struct LstmParams {
  Tensor W;
  Tensor b;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden);
  // Weights uniform in +-1/sqrt(D_in + H), biases zero except forget = +1.
  static LstmParams initialized(std::size_t input_dim, std::size_t hidden,
                                SplitMix64& rng);
  void validate(const char* what) const;
};

// One-layer gate: logits = concat(v_c, h_f, c_f) * W_g + b_g, W_g is
// (coarse_dim + 2 * fine_hidden) x 2. Logit 1 means "read fine features".
struct GateParams {
  Tensor W;
  Tensor b;
  std::size_t coarse_dim = 0;
  std::size_t fine_hidden = 0;

  static GateParams zeros(std::size_t coarse_dim, std::size_t fine_hidden);
  // Weights uniform in +-1/sqrt(input), bias (0, +1).
  static GateParams initialized(std::size_t coarse_dim,
                                std::size_t fine_hidden, SplitMix64& rng);
  std::size_t input_dim() const { return coarse_dim + 2 * fine_hidden; }
  void validate(const char* what) const;
};

// p = softmax(h * W_p + b_p), W_p is hidden x classes. Zero-initialized.
struct ClassifierParams {
  Tensor W;
  Tensor b;
  std::size_t hidden = 0;
  std::size_t classes = 0;

  static ClassifierParams zeros(std::size_t hidden, std::size_t classes);
  void validate(const char* what) const;
};

// Parameters bound as leaves on a tape.
struct LstmWeights {
  DiffArray W, b;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
};

struct GateWeights {
  DiffArray W, b;
};

struct ClassifierWeights {
  DiffArray W, b;
};

LstmWeights bind(Tape& tape, const LstmParams& p, bool requires_grad);
GateWeights bind(Tape& tape, const GateParams& p, bool requires_grad);
ClassifierWeights bind(Tape& tape, const ClassifierParams& p,
                       bool requires_grad);

struct LstmState {
  DiffArray h;
  DiffArray c;
};

LstmState zero_state(Tape& tape, std::size_t hidden);

LstmState lstm_step(const LstmWeights& cell, const DiffArray& x,
                    const LstmState& state);

DiffArray gate_logits(const GateWeights& gate, const DiffArray& coarse_feature,
                      const DiffArray& fine_h, const DiffArray& fine_c);

struct Prediction {
  DiffArray logits;
  DiffArray probs;
};

Prediction classify(const ClassifierWeights& classifier,
                    const DiffArray& fine_h);

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> p);

// ---------------------------------------------------------------------------
// Parameter block files: <dir>/header.json + <dir>/params.bin. The binary
// file is the concatenation of every block as little-endian IEEE-754 binary64
// values in row-major order; the header lists name, shape, byte offset and
// byte count per block, plus a free-form "meta" object.

struct NamedBlock {
  std::string name;
  Tensor tensor;
};

inline constexpr int kBlockFormatVersion = 1;
inline constexpr const char* kBlockFormatName = "adaeval-params";

void write_blocks(const std::filesystem::path& dir, const nlohmann::json& meta,
                  const std::vector<NamedBlock>& blocks);

struct BlockFile {
  nlohmann::json header;
  std::vector<NamedBlock> blocks;
};

BlockFile read_blocks(const std::filesystem::path& dir);

}  // namespace adaeval::cells

#endif  // ADAEVAL_CELLS_HPP_
