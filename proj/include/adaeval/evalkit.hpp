// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_EVALKIT_HPP_
#define ADAEVAL_EVALKIT_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adaeval/data.hpp"
#include "adaeval/liteeval.hpp"
#include "json.hpp"

namespace adaeval::evalkit {

using liteeval::ModelConfig;
using liteeval::ModelParams;
using liteeval::StepTrace;

// paper: fine CNN cost only (the Uniform row of the reference table).
// cnn:   coarse + fine CNN costs.
// full:  cnn plus recurrent, gate and classifier costs.
enum class CostMode { kPaper, kCnn, kFull };

const char* to_string(CostMode m);
CostMode cost_mode_from_string(const std::string& s);

struct CostModel {
  double coarse_gflops_per_frame = 0.08;
  double fine_gflops_per_frame = 7.82;
  bool include_coarse = true;
  bool include_recurrent = true;

  static CostModel for_mode(CostMode mode);
  void validate() const;
  nlohmann::json to_json() const;
};

// FLOPs per call, multiply-add counted as 2.
struct RecurrentCost {
  double coarse_lstm_step = 0.0;
  double fine_lstm_step = 0.0;
  double gate = 0.0;
  double classifier = 0.0;
};

// LSTM step 8 H (D_in + H); linear maps 2 * in * out.
RecurrentCost recurrent_cost(const ModelConfig& config);

double flops_for_trace(const StepTrace& trace, const ModelConfig& config,
                       const CostModel& cost);

// ---------------------------------------------------------------------------
// Metrics

// Ties in argmax go to the lowest class index. Throws ContractError on empty
// input or length mismatch.
double top1(std::span<const std::vector<double>> predictions,
            std::span<const int> labels);

struct ApReport {
  double map = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt: no positives
  std::vector<int> excluded_classes;
};

// Non-interpolated AP per class; videos ranked by score descending, ties by
// id ascending. Classes without positives are excluded from the mean.
ApReport mean_average_precision(std::span<const std::vector<double>> scores,
                                std::span<const int> labels,
                                std::span<const std::string> ids,
                                std::size_t num_classes);

// ---------------------------------------------------------------------------
// Evaluation

struct VideoSummary {
  std::string id;
  int label = 0;
  int predicted = 0;
  std::size_t steps = 0;       // steps executed (K' online)
  std::size_t fine_reads = 0;
  double gflops = 0.0;
  std::vector<double> probs;   // prediction vector that was scored
};

struct EvalResult {
  std::string method;    // liteeval, fine_always, coarse_only, uniform_k, seq_k
  std::string protocol;  // offline | online
  std::optional<std::size_t> budget;
  std::string cost_mode;
  double top1 = 0.0;
  double map = 0.0;
  double mean_gflops = 0.0;
  double mean_usage = 0.0;
  std::vector<std::optional<double>> per_class_ap;
  std::vector<int> excluded_classes;
  std::vector<VideoSummary> videos;

  std::vector<std::size_t> stop_steps() const;
  nlohmann::json to_json() const;
  static EvalResult from_json(const nlohmann::json& j);
};

EvalResult eval_offline(const ModelParams& params, const ModelConfig& config,
                        std::span<const data::VideoSample> samples,
                        CostMode cost_mode, const std::string& method = "liteeval");

// Runs each video until its K-th fine read (K = 0: never read, run to the
// end) and scores the prediction at that step.
EvalResult eval_online(const ModelParams& params, const ModelConfig& config,
                       std::span<const data::VideoSample> samples,
                       std::size_t budget, CostMode cost_mode,
                       const std::string& method = "liteeval");

// Shared by offline/online and the CLI: scores finished traces.
EvalResult summarize(std::span<const StepTrace> traces,
                     std::span<const data::VideoSample> samples,
                     const ModelConfig& config, CostMode cost_mode);

// Per-frame predictions from an always-fine model: one vector per step.
std::vector<StepTrace> per_frame_traces(const ModelParams& fine_params,
                                        const ModelConfig& fine_config,
                                        std::span<const data::VideoSample> samples);

// 1-based index of the j-th (0-based) of K uniform picks within [1, K'].
std::size_t uniform_pick(std::size_t j, std::size_t k, std::size_t k_prime);

// Averages K uniformly spaced per-frame predictions within the first K'
// frames (K clamped to K'); cost K fine + K' coarse reads.
EvalResult baseline_uniform_k(std::span<const StepTrace> frame_traces,
                              std::span<const data::VideoSample> samples,
                              std::size_t k, std::span<const std::size_t> stop_steps,
                              std::size_t num_classes, CostMode cost_mode);

// Averages the predictions of frames 1..K (K clamped to T); cost K fine reads.
EvalResult baseline_seq_k(std::span<const StepTrace> frame_traces,
                          std::span<const data::VideoSample> samples,
                          std::size_t k, std::size_t num_classes,
                          CostMode cost_mode);

enum class LstmVariant { kCoarseOnly, kFineAlways };

// The config used to train a plain-LSTM baseline variant.
ModelConfig baseline_config(LstmVariant variant, ModelConfig base);

struct BaselineRun {
  liteeval::TrainResult trained;
  ModelConfig config;
  EvalResult result;
};

BaselineRun baseline_lstm(LstmVariant variant, const ModelConfig& base,
                          std::span<const data::VideoSample> train_set,
                          std::span<const data::VideoSample> val_set,
                          std::span<const data::VideoSample> eval_set,
                          CostMode cost_mode,
                          const liteeval::EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Outputs

void write_results_json(const std::filesystem::path& path,
                        std::span<const EvalResult> results,
                        const nlohmann::json& context);
std::vector<EvalResult> read_results_json(const std::filesystem::path& path);

// Columns budget_K, mean_gflops, top1, method; offline rows use "inf".
std::string curves_csv(std::span<const EvalResult> results);
void write_curves_csv(const std::filesystem::path& path,
                      std::span<const EvalResult> results);

}  // namespace adaeval::evalkit

#endif  // ADAEVAL_EVALKIT_HPP_
