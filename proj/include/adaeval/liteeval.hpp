// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_LITEEVAL_HPP_
#define ADAEVAL_LITEEVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaeval/cells.hpp"
#include "adaeval/data.hpp"
#include "adaeval/gumbel.hpp"
#include "adaeval/ndgrad.hpp"
#include "json.hpp"

namespace adaeval::liteeval {

using cells::LstmState;
using ndgrad::DiffArray;
using ndgrad::Tape;
using ndgrad::Tensor;

enum class GatePolicy {
  kLearned,       // gate decides
  kAlwaysFine,    // B_t = 1 every step
  kAlwaysCoarse,  // B_t = 0 every step; with sync this is a coarse-only LSTM
};

const char* to_string(GatePolicy p);
GatePolicy gate_policy_from_string(const std::string& s);

struct ModelConfig {
  std::size_t coarse_dim = 16;    // Dc_feat
  std::size_t fine_dim = 64;      // Df_feat
  std::size_t coarse_hidden = 8;  // Hc
  std::size_t fine_hidden = 32;   // Hf
  std::size_t num_classes = 10;
  std::size_t steps = 16;         // T
  double gamma = 0.05;
  double lambda = 2.0;
  gumbel::TauSchedule tau;
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  int epochs = 30;
  std::uint64_t seed = 0;
  GatePolicy gate_policy = GatePolicy::kLearned;
  bool sync = true;

  // Throws ConfigError; Hf >= Hc is required by the sync copy.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ModelParams {
  cells::LstmParams coarse_cell;  // input Dc_feat, hidden Hc
  cells::LstmParams fine_cell;    // input Dc_feat + Df_feat, hidden Hf
  cells::GateParams gate;
  cells::ClassifierParams classifier;

  static ModelParams initialized(const ModelConfig& config);
  static ModelParams zeros(const ModelConfig& config);

  // Fixed block order: coarse W/b, fine W/b, gate W/b, classifier W/b.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  static const std::vector<std::string>& block_names();
  std::size_t parameter_count() const;
  void validate(const ModelConfig& config) const;
};

struct BoundModel {
  cells::LstmWeights coarse_cell;
  cells::LstmWeights fine_cell;
  cells::GateWeights gate;
  cells::ClassifierWeights classifier;
  DiffArray ones_fine;  // (1 x Hf) constant used to broadcast B_t

  std::vector<DiffArray> leaves() const;
};

BoundModel bind(Tape& tape, const ModelParams& params, bool requires_grad);

enum class StepMode {
  kTrain,    // Gumbel noise, straight-through hard B_t
  kRelaxed,  // Gumbel noise, soft B_t in the forward pass (gradient checks)
  kInfer,    // no noise, B_t = argmax of the gate logits
};

struct StepControl {
  StepMode mode = StepMode::kInfer;
  double tau = 1.0;
  SplitMix64* rng = nullptr;                 // noise source for train/relaxed
  std::optional<gumbel::Pair> frozen_noise;  // overrides rng
  std::optional<int> forced_bit;             // bypasses the gate decision
};

struct GateDecision {
  gumbel::Pair logits{};
  gumbel::Pair noise{};
  gumbel::Pair soft{};
  int bit = 0;
};

struct StepOutput {
  LstmState coarse;
  LstmState fine;
  GateDecision decision;
  DiffArray gate_weight;  // (2): B_t carrier (hard, soft or constant)
  cells::Prediction prediction;
};

// One recurrence step: coarse update, gate, fine update or sync, classify.
StepOutput step(const BoundModel& model, const ModelConfig& config,
                const DiffArray& coarse_feature, const DiffArray& fine_feature,
                const LstmState& coarse_state, const LstmState& fine_state,
                const StepControl& control);

struct StepRecord {
  int bit = 0;
  gumbel::Pair logits{};
  std::vector<double> probs;
  std::size_t cumulative_reads = 0;
};

struct StepTrace {
  std::vector<StepRecord> steps;
  std::vector<double> final_probs;

  std::size_t length() const { return steps.size(); }
  std::size_t fine_reads() const {
    return steps.empty() ? 0 : steps.back().cumulative_reads;
  }
  double usage() const {
    return steps.empty() ? 0.0
                         : static_cast<double>(fine_reads()) /
                               static_cast<double>(steps.size());
  }
};

struct RunOptions {
  StepMode mode = StepMode::kInfer;
  double tau = 1.0;
  std::uint64_t noise_seed = 0;
  // Per-step noise for reproducible gradient checks.
  std::optional<std::vector<gumbel::Pair>> frozen_noise;
  // Online protocol: stop right after the K-th fine read; K = 0 forces every
  // decision to skip and runs to the end.
  std::optional<std::size_t> fine_budget;
};

struct VideoRun {
  cells::Prediction final_prediction;
  DiffArray usage;  // scalar: mean of B_t carriers, differentiable
  StepTrace trace;
};

VideoRun forward_video(Tape& tape, const BoundModel& model,
                       const ModelConfig& config,
                       const data::VideoSample& sample,
                       const RunOptions& options);

// -y log p_T + lambda * (usage - gamma)^2
DiffArray loss(const DiffArray& final_probs, int label,
               const DiffArray& usage, const ModelConfig& config);

// Inference over many videos; parallel across videos, results in input order.
std::vector<StepTrace> infer_traces(const ModelParams& params,
                                    const ModelConfig& config,
                                    std::span<const data::VideoSample> samples,
                                    const RunOptions& options = {});
std::vector<StepTrace> infer_traces_serial(
    const ModelParams& params, const ModelConfig& config,
    std::span<const data::VideoSample> samples, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Training.

struct BatchGradient {
  std::vector<Tensor> grads;  // mean over the batch, block order
  double loss = 0.0;          // mean over the batch
  double usage = 0.0;
};

// Per-video tapes; the parallel version reduces per-video buffers in input
// order, so both agree bitwise.
BatchGradient batch_gradient(const ModelParams& params,
                             const ModelConfig& config,
                             std::span<const data::VideoSample* const> batch,
                             std::span<const std::uint64_t> noise_seeds,
                             double tau);
BatchGradient batch_gradient_serial(
    const ModelParams& params, const ModelConfig& config,
    std::span<const data::VideoSample* const> batch,
    std::span<const std::uint64_t> noise_seeds, double tau);

class Adam {
 public:
  Adam(double learning_rate, const ModelParams& shape_like);
  void update(ModelParams& params, const std::vector<Tensor>& grads);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  double lr_;
  long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochLog {
  int epoch = 0;
  double tau = 0.0;
  double train_loss = 0.0;
  double train_usage = 0.0;
  double val_top1 = 0.0;
  double val_usage = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const ModelConfig& config,
                  std::span<const data::VideoSample> train_set,
                  std::span<const data::VideoSample> val_set,
                  const EpochCallback& on_epoch = {});
TrainResult train(ModelParams initial, const ModelConfig& config,
                  std::span<const data::VideoSample> train_set,
                  std::span<const data::VideoSample> val_set,
                  const EpochCallback& on_epoch = {});

double top1_of(std::span<const StepTrace> traces,
               std::span<const data::VideoSample> samples);
double mean_usage(std::span<const StepTrace> traces);

// ---------------------------------------------------------------------------
// Checkpoints: header.json + params.bin (cells block format) with the model
// config stored under meta.config.

void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::filesystem::path& dir);

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace adaeval::liteeval

#endif  // ADAEVAL_LITEEVAL_HPP_
