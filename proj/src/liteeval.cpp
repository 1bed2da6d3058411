// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/liteeval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "adaeval/errors.hpp"

#ifdef ADAEVAL_HAVE_OPENMP
#include <omp.h>
#endif

namespace adaeval::liteeval {

const char* to_string(GatePolicy p) {
  switch (p) {
    case GatePolicy::kLearned: return "learned";
    case GatePolicy::kAlwaysFine: return "always_fine";
    case GatePolicy::kAlwaysCoarse: return "always_coarse";
  }
  return "learned";
}

GatePolicy gate_policy_from_string(const std::string& s) {
  if (s == "learned") return GatePolicy::kLearned;
  if (s == "always_fine") return GatePolicy::kAlwaysFine;
  if (s == "always_coarse") return GatePolicy::kAlwaysCoarse;
  throw ConfigError("unknown gate policy '" + s + "'", {{"gate_policy", s}});
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why,
                 nlohmann::json value) {
    throw ConfigError(field + ": " + why, {{"field", field}, {"value", value}});
  };
  if (coarse_dim == 0) fail("Dc_feat", "must be >= 1", coarse_dim);
  if (fine_dim == 0) fail("Df_feat", "must be >= 1", fine_dim);
  if (coarse_hidden == 0) fail("Hc", "must be >= 1", coarse_hidden);
  if (fine_hidden < coarse_hidden) {
    throw ConfigError("Hf must be >= Hc for the synchronization copy",
                      {{"field", "Hf"}, {"Hc", coarse_hidden}, {"Hf", fine_hidden}});
  }
  if (num_classes < 2) fail("num_classes", "must be >= 2", num_classes);
  if (steps == 0) fail("T", "must be >= 1", steps);
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]", gamma);
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    fail("lambda", "must be finite and >= 0", lambda);
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0", learning_rate);
  if (batch_size == 0) fail("batch_size", "must be >= 1", batch_size);
  if (epochs < 0) fail("epochs", "must be >= 0", epochs);
  tau.validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"Dc_feat", coarse_dim},
          {"Df_feat", fine_dim},
          {"Hc", coarse_hidden},
          {"Hf", fine_hidden},
          {"num_classes", num_classes},
          {"T", steps},
          {"gamma", gamma},
          {"lambda", lambda},
          {"tau0", tau.tau0},
          {"tau_min", tau.tau_min},
          {"tau_decay", tau.decay_rate},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"gate_policy", to_string(gate_policy)},
          {"sync", sync}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.coarse_dim = j.value("Dc_feat", c.coarse_dim);
    c.fine_dim = j.value("Df_feat", c.fine_dim);
    c.coarse_hidden = j.value("Hc", c.coarse_hidden);
    c.fine_hidden = j.value("Hf", c.fine_hidden);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.steps = j.value("T", c.steps);
    c.gamma = j.value("gamma", c.gamma);
    c.lambda = j.value("lambda", c.lambda);
    c.tau.tau0 = j.value("tau0", c.tau.tau0);
    c.tau.tau_min = j.value("tau_min", c.tau.tau_min);
    c.tau.decay_rate = j.value("tau_decay", c.tau.decay_rate);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.gate_policy = gate_policy_from_string(j.value("gate_policy", "learned"));
    c.sync = j.value("sync", c.sync);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// ModelParams

ModelParams ModelParams::zeros(const ModelConfig& c) {
  ModelParams p;
  p.coarse_cell = cells::LstmParams::zeros(c.coarse_dim, c.coarse_hidden);
  p.fine_cell =
      cells::LstmParams::zeros(c.coarse_dim + c.fine_dim, c.fine_hidden);
  p.gate = cells::GateParams::zeros(c.coarse_dim, c.fine_hidden);
  p.classifier = cells::ClassifierParams::zeros(c.fine_hidden, c.num_classes);
  return p;
}

ModelParams ModelParams::initialized(const ModelConfig& c) {
  c.validate();
  SplitMix64 rng(derive_seed(c.seed, 0x1417));
  ModelParams p;
  p.coarse_cell =
      cells::LstmParams::initialized(c.coarse_dim, c.coarse_hidden, rng);
  p.fine_cell = cells::LstmParams::initialized(c.coarse_dim + c.fine_dim,
                                               c.fine_hidden, rng);
  p.gate = cells::GateParams::initialized(c.coarse_dim, c.fine_hidden, rng);
  p.classifier = cells::ClassifierParams::zeros(c.fine_hidden, c.num_classes);
  return p;
}

std::vector<Tensor*> ModelParams::tensors() {
  return {&coarse_cell.W, &coarse_cell.b, &fine_cell.W, &fine_cell.b,
          &gate.W,        &gate.b,        &classifier.W, &classifier.b};
}

std::vector<const Tensor*> ModelParams::tensors() const {
  return {&coarse_cell.W, &coarse_cell.b, &fine_cell.W, &fine_cell.b,
          &gate.W,        &gate.b,        &classifier.W, &classifier.b};
}

const std::vector<std::string>& ModelParams::block_names() {
  static const std::vector<std::string> names = {
      "coarse_cell.W", "coarse_cell.b", "fine_cell.W",  "fine_cell.b",
      "gate.W",        "gate.b",        "classifier.W", "classifier.b"};
  return names;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += t->size();
  return n;
}

void ModelParams::validate(const ModelConfig& c) const {
  const auto want = zeros(c);
  const auto have = tensors();
  const auto expect = want.tensors();
  for (std::size_t i = 0; i < have.size(); ++i) {
    if (have[i]->shape != expect[i]->shape) {
      throw DimensionError(
          "parameter block " + block_names()[i] + " has shape " +
              ndgrad::shape_str(have[i]->shape) + ", config implies " +
              ndgrad::shape_str(expect[i]->shape),
          {{"block", block_names()[i]},
           {"expected", expect[i]->shape},
           {"actual", have[i]->shape}});
    }
  }
  coarse_cell.validate("coarse_cell");
  fine_cell.validate("fine_cell");
  gate.validate("gate");
  classifier.validate("classifier");
}

std::vector<DiffArray> BoundModel::leaves() const {
  return {coarse_cell.W, coarse_cell.b, fine_cell.W, fine_cell.b,
          gate.W,        gate.b,        classifier.W, classifier.b};
}

BoundModel bind(Tape& tape, const ModelParams& params, bool requires_grad) {
  BoundModel m;
  m.coarse_cell = cells::bind(tape, params.coarse_cell, requires_grad);
  m.fine_cell = cells::bind(tape, params.fine_cell, requires_grad);
  m.gate = cells::bind(tape, params.gate, requires_grad);
  m.classifier = cells::bind(tape, params.classifier, requires_grad);
  m.ones_fine = tape.constant(Tensor({1, params.fine_cell.hidden}, 1.0));
  return m;
}

// ---------------------------------------------------------------------------
// Recurrence

namespace {

DiffArray one_hot_constant(Tape& tape, int bit) {
  return tape.constant(
      Tensor::vector({bit == 1 ? 0.0 : 1.0, bit == 1 ? 1.0 : 0.0}));
}

// (1 - B) * skip + B * candidate with B broadcast over the hidden vector.
DiffArray blend(const BoundModel& m, const DiffArray& weight,
                const DiffArray& skip, const DiffArray& candidate) {
  const DiffArray w_skip = ndgrad::matmul(ndgrad::slice(weight, 0, 0, 1), m.ones_fine);
  const DiffArray w_read = ndgrad::matmul(ndgrad::slice(weight, 0, 1, 2), m.ones_fine);
  return ndgrad::add(ndgrad::hadamard(w_read, candidate),
                     ndgrad::hadamard(w_skip, skip));
}

DiffArray row_constant(Tape& tape, std::span<const float> row) {
  return tape.constant(Tensor::vector(std::vector<double>(row.begin(), row.end())));
}

}  // namespace

StepOutput step(const BoundModel& model, const ModelConfig& config,
                const DiffArray& coarse_feature, const DiffArray& fine_feature,
                const LstmState& coarse_state, const LstmState& fine_state,
                const StepControl& control) {
  Tape& tape = coarse_feature.tape();
  StepOutput out;

  out.coarse = cells::lstm_step(model.coarse_cell, coarse_feature, coarse_state);

  const DiffArray logits = cells::gate_logits(model.gate, coarse_feature,
                                              fine_state.h, fine_state.c);
  GateDecision& d = out.decision;
  d.logits = {logits[0], logits[1]};

  bool hard_branch = true;
  if (control.forced_bit) {
    d.bit = *control.forced_bit;
    d.soft = {d.bit == 1 ? 0.0 : 1.0, d.bit == 1 ? 1.0 : 0.0};
    out.gate_weight = one_hot_constant(tape, d.bit);
  } else if (control.mode == StepMode::kInfer) {
    d.bit = gumbel::gumbel_max(d.logits, {0.0, 0.0});
    d.soft = {d.bit == 1 ? 0.0 : 1.0, d.bit == 1 ? 1.0 : 0.0};
    out.gate_weight = one_hot_constant(tape, d.bit);
  } else {
    if (control.frozen_noise) {
      d.noise = *control.frozen_noise;
    } else if (control.rng) {
      d.noise = gumbel::sample_gumbel_noise(*control.rng);
    } else {
      throw ContractError("step: training mode needs an rng or frozen noise");
    }
    const DiffArray soft = gumbel::gumbel_softmax(logits, d.noise, control.tau);
    d.soft = {soft[0], soft[1]};
    if (control.mode == StepMode::kTrain) {
      auto st = gumbel::straight_through(soft);
      d.bit = st.hard_bit;
      out.gate_weight = st.carrier;
    } else {
      d.bit = gumbel::hard_bit(d.soft);
      out.gate_weight = soft;
    }
    hard_branch = false;
  }

  const std::size_t hc = config.coarse_hidden;
  const std::size_t hf = config.fine_hidden;
  LstmState skip = fine_state;
  if (config.sync) {
    skip.h = ndgrad::concat(out.coarse.h, ndgrad::slice(fine_state.h, 0, hc, hf));
    skip.c = ndgrad::concat(out.coarse.c, ndgrad::slice(fine_state.c, 0, hc, hf));
  }

  if (hard_branch) {
    if (d.bit == 1) {
      out.fine = cells::lstm_step(model.fine_cell,
                                  ndgrad::concat(coarse_feature, fine_feature),
                                  fine_state);
    } else {
      out.fine = skip;
    }
  } else {
    const LstmState candidate = cells::lstm_step(
        model.fine_cell, ndgrad::concat(coarse_feature, fine_feature), fine_state);
    out.fine.h = blend(model, out.gate_weight, skip.h, candidate.h);
    out.fine.c = blend(model, out.gate_weight, skip.c, candidate.c);
  }

  out.prediction = cells::classify(model.classifier, out.fine.h);
  return out;
}

VideoRun forward_video(Tape& tape, const BoundModel& model,
                       const ModelConfig& config,
                       const data::VideoSample& sample,
                       const RunOptions& options) {
  const std::size_t T = sample.steps();
  if (T == 0 || T != config.steps || sample.fine.rows != T ||
      sample.coarse.cols != config.coarse_dim ||
      sample.fine.cols != config.fine_dim) {
    throw DataError("video '" + sample.id + "' does not match the model dims",
                    {{"video", sample.id},
                     {"T", T},
                     {"fine_T", sample.fine.rows},
                     {"coarse_dim", sample.coarse.cols},
                     {"fine_dim", sample.fine.cols},
                     {"expected_T", config.steps},
                     {"expected_coarse_dim", config.coarse_dim},
                     {"expected_fine_dim", config.fine_dim}});
  }
  if (options.frozen_noise && options.frozen_noise->size() < T) {
    throw ContractError("frozen noise shorter than the sequence");
  }

  LstmState coarse = cells::zero_state(tape, config.coarse_hidden);
  LstmState fine = cells::zero_state(tape, config.fine_hidden);
  SplitMix64 rng(options.noise_seed);

  StepControl control;
  control.mode = options.mode;
  control.tau = options.tau;
  control.rng = &rng;
  if (config.gate_policy == GatePolicy::kAlwaysFine) control.forced_bit = 1;
  if (config.gate_policy == GatePolicy::kAlwaysCoarse) control.forced_bit = 0;

  VideoRun run;
  run.trace.steps.reserve(T);
  DiffArray reads_sum;
  std::size_t reads = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (options.frozen_noise) control.frozen_noise = (*options.frozen_noise)[t];
    if (options.fine_budget && reads >= *options.fine_budget) control.forced_bit = 0;

    const StepOutput out =
        step(model, config, row_constant(tape, sample.coarse.row(t)),
             row_constant(tape, sample.fine.row(t)), coarse, fine, control);
    coarse = out.coarse;
    fine = out.fine;

    const DiffArray read = ndgrad::slice(out.gate_weight, 0, 1, 2);
    reads_sum = t == 0 ? read : ndgrad::add(reads_sum, read);
    reads += static_cast<std::size_t>(out.decision.bit);

    StepRecord rec;
    rec.bit = out.decision.bit;
    rec.logits = out.decision.logits;
    const auto p = out.prediction.probs.values();
    rec.probs.assign(p.begin(), p.end());
    rec.cumulative_reads = reads;
    run.trace.steps.push_back(std::move(rec));
    run.final_prediction = out.prediction;

    if (options.fine_budget && *options.fine_budget > 0 &&
        reads == *options.fine_budget) {
      break;
    }
  }
  run.trace.final_probs = run.trace.steps.back().probs;
  run.usage = ndgrad::scalar_mul(
      ndgrad::mean(reads_sum),
      1.0 / static_cast<double>(run.trace.steps.size()));
  return run;
}

DiffArray loss(const DiffArray& final_probs, int label, const DiffArray& usage,
               const ModelConfig& config) {
  if (label < 0 || static_cast<std::size_t>(label) >= final_probs.size()) {
    throw RangeError("loss: label out of range",
                     {{"label", label}, {"classes", final_probs.size()}});
  }
  Tape& tape = final_probs.tape();
  const auto y = static_cast<std::size_t>(label);
  const DiffArray ce = ndgrad::scalar_mul(
      ndgrad::mean(ndgrad::log(ndgrad::slice(final_probs, 0, y, y + 1))), -1.0);
  const DiffArray gap =
      ndgrad::add(usage, tape.constant(Tensor::scalar(-config.gamma)));
  const DiffArray penalty = ndgrad::scalar_mul(ndgrad::square(gap), config.lambda);
  return ndgrad::add(ce, penalty);
}

// ---------------------------------------------------------------------------
// Batched inference

namespace {

StepTrace infer_one(const ModelParams& params, const ModelConfig& config,
                    const data::VideoSample& sample, const RunOptions& options,
                    Tape& tape) {
  tape.clear();
  const BoundModel m = bind(tape, params, false);
  RunOptions opts = options;
  opts.mode = StepMode::kInfer;
  return forward_video(tape, m, config, sample, opts).trace;
}

// Runs body(i) for i in [0, n), in parallel when OpenMP is on. The first
// exception thrown by any iteration is rethrown after the loop.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(adaeval_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<StepTrace> infer_traces(const ModelParams& params,
                                    const ModelConfig& config,
                                    std::span<const data::VideoSample> samples,
                                    const RunOptions& options) {
  std::vector<StepTrace> traces(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    thread_local Tape tape;
    traces[i] = infer_one(params, config, samples[i], options, tape);
  });
  return traces;
}

std::vector<StepTrace> infer_traces_serial(
    const ModelParams& params, const ModelConfig& config,
    std::span<const data::VideoSample> samples, const RunOptions& options) {
  std::vector<StepTrace> traces;
  traces.reserve(samples.size());
  Tape tape;
  for (const auto& s : samples)
    traces.push_back(infer_one(params, config, s, options, tape));
  return traces;
}

double top1_of(std::span<const StepTrace> traces,
               std::span<const data::VideoSample> samples) {
  if (traces.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < traces.size(); ++i)
    if (cells::argmax(traces[i].final_probs) ==
        static_cast<std::size_t>(samples[i].label))
      ++hit;
  return static_cast<double>(hit) / static_cast<double>(traces.size());
}

double mean_usage(std::span<const StepTrace> traces) {
  if (traces.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : traces) s += t.usage();
  return s / static_cast<double>(traces.size());
}

// ---------------------------------------------------------------------------
// Gradients and training

namespace {

struct VideoGradient {
  std::vector<Tensor> grads;
  double loss = 0.0;
  double usage = 0.0;
};

VideoGradient video_gradient(const ModelParams& params,
                             const ModelConfig& config,
                             const data::VideoSample& sample,
                             std::uint64_t noise_seed, double tau, Tape& tape) {
  tape.clear();
  const BoundModel m = bind(tape, params, true);
  RunOptions opts;
  opts.mode = StepMode::kTrain;
  opts.tau = tau;
  opts.noise_seed = noise_seed;
  const VideoRun run = forward_video(tape, m, config, sample, opts);
  const DiffArray l = loss(run.final_prediction.probs, sample.label, run.usage, config);
  tape.backward(l);

  VideoGradient vg;
  vg.loss = l.item();
  vg.usage = run.trace.usage();
  for (const auto& leaf : m.leaves()) {
    const auto g = leaf.grad();
    vg.grads.emplace_back(leaf.shape(), std::vector<double>(g.begin(), g.end()));
  }
  return vg;
}

BatchGradient reduce(const ModelParams& params,
                     std::vector<VideoGradient>& per_video) {
  BatchGradient out;
  for (const auto* t : params.tensors()) out.grads.emplace_back(t->shape);
  for (const auto& vg : per_video) {
    for (std::size_t b = 0; b < out.grads.size(); ++b) {
      auto& dst = out.grads[b].data;
      const auto& src = vg.grads[b].data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    out.loss += vg.loss;
    out.usage += vg.usage;
  }
  const double inv = 1.0 / static_cast<double>(per_video.size());
  for (auto& g : out.grads)
    for (auto& x : g.data) x *= inv;
  out.loss *= inv;
  out.usage *= inv;
  return out;
}

void check_batch(std::span<const data::VideoSample* const> batch,
                 std::span<const std::uint64_t> seeds) {
  if (batch.empty()) throw ContractError("batch_gradient: empty batch");
  if (batch.size() != seeds.size())
    throw ContractError("batch_gradient: one noise seed per video required");
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params,
                             const ModelConfig& config,
                             std::span<const data::VideoSample* const> batch,
                             std::span<const std::uint64_t> noise_seeds,
                             double tau) {
  check_batch(batch, noise_seeds);
  std::vector<VideoGradient> per_video(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    thread_local Tape tape;
    per_video[i] = video_gradient(params, config, *batch[i], noise_seeds[i], tau, tape);
  });
  return reduce(params, per_video);
}

BatchGradient batch_gradient_serial(
    const ModelParams& params, const ModelConfig& config,
    std::span<const data::VideoSample* const> batch,
    std::span<const std::uint64_t> noise_seeds, double tau) {
  check_batch(batch, noise_seeds);
  std::vector<VideoGradient> per_video;
  per_video.reserve(batch.size());
  Tape tape;
  for (std::size_t i = 0; i < batch.size(); ++i)
    per_video.push_back(
        video_gradient(params, config, *batch[i], noise_seeds[i], tau, tape));
  return reduce(params, per_video);
}

Adam::Adam(double learning_rate, const ModelParams& shape_like)
    : lr_(learning_rate) {
  for (const auto* t : shape_like.tensors()) {
    m_.emplace_back(t->size(), 0.0);
    v_.emplace_back(t->size(), 0.0);
  }
}

void Adam::update(ModelParams& params, const std::vector<Tensor>& grads) {
  ++step_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  auto tensors = params.tensors();
  for (std::size_t b = 0; b < tensors.size(); ++b) {
    auto& w = tensors[b]->data;
    const auto& g = grads[b].data;
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + kEpsilon);
    }
  }
}

nlohmann::json EpochLog::to_json() const {
  return {{"epoch", epoch},           {"tau", tau},
          {"train_loss", train_loss}, {"train_usage", train_usage},
          {"val_top1", val_top1},     {"val_usage", val_usage}};
}

TrainResult train(const ModelConfig& config,
                  std::span<const data::VideoSample> train_set,
                  std::span<const data::VideoSample> val_set,
                  const EpochCallback& on_epoch) {
  return train(ModelParams::initialized(config), config, train_set, val_set,
               on_epoch);
}

TrainResult train(ModelParams initial, const ModelConfig& config,
                  std::span<const data::VideoSample> train_set,
                  std::span<const data::VideoSample> val_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  initial.validate(config);
  if (train_set.empty()) throw ContractError("train: empty training split");

  TrainResult result{std::move(initial), {}};
  ModelParams& params = result.params;
  Adam adam(config.learning_rate, params);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double tau = gumbel::tau_at(config.tau, epoch);
    SplitMix64 shuffle(derive_seed(derive_seed(config.seed, kShuffleStream),
                                   static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);
    const std::uint64_t epoch_seed =
        derive_seed(config.seed, static_cast<std::uint64_t>(epoch) + 1);

    double loss_sum = 0.0;
    double usage_sum = 0.0;
    std::vector<const data::VideoSample*> batch;
    std::vector<std::uint64_t> seeds;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      seeds.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(&train_set[order[k]]);
        seeds.push_back(derive_seed(epoch_seed, order[k]));
      }
      BatchGradient g = batch_gradient(params, config, batch, seeds, tau);
      bool finite = std::isfinite(g.loss);
      for (const auto& t : g.grads)
        for (double x : t.data) finite = finite && std::isfinite(x);
      if (!finite) {
        throw TrainingError("training diverged: non-finite loss or gradient",
                            {{"epoch", epoch},
                             {"batch_start", start},
                             {"loss", std::isfinite(g.loss) ? nlohmann::json(g.loss)
                                                            : nlohmann::json("non-finite")}});
      }
      adam.update(params, g.grads);
      const double n = static_cast<double>(end - start);
      loss_sum += g.loss * n;
      usage_sum += g.usage * n;
    }

    EpochLog log;
    log.epoch = epoch;
    log.tau = tau;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.train_usage = usage_sum / static_cast<double>(order.size());
    if (!val_set.empty()) {
      const auto traces = infer_traces(params, config, val_set);
      log.val_top1 = top1_of(traces, val_set);
      log.val_usage = mean_usage(traces);
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const ModelParams& params, const ModelConfig& config,
                     const std::filesystem::path& dir) {
  params.validate(config);
  std::vector<cells::NamedBlock> blocks;
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i)
    blocks.push_back({ModelParams::block_names()[i], *tensors[i]});
  cells::write_blocks(dir, {{"model", "liteeval"}, {"config", config.to_json()}},
                      blocks);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto file = cells::read_blocks(dir);
  const auto& meta = file.header.at("meta");
  if (meta.value("model", "") != "liteeval" || !meta.contains("config")) {
    throw DataError("checkpoint is not a liteeval model",
                    {{"path", dir.string()}});
  }
  Checkpoint ck;
  ck.config = ModelConfig::from_json(meta.at("config"));
  ck.config.validate();
  ck.params = ModelParams::zeros(ck.config);
  auto tensors = ck.params.tensors();
  const auto& names = ModelParams::block_names();
  if (file.blocks.size() != names.size()) {
    throw DataError("checkpoint has " + std::to_string(file.blocks.size()) +
                        " blocks, expected " + std::to_string(names.size()),
                    {{"path", dir.string()}});
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& blk = file.blocks[i];
    if (blk.name != names[i]) {
      throw DataError("checkpoint block " + std::to_string(i) + " is '" +
                          blk.name + "', expected '" + names[i] + "'",
                      {{"path", dir.string()}});
    }
    if (blk.tensor.shape != tensors[i]->shape) {
      throw DimensionError(
          "checkpoint block " + names[i] + " has shape " +
              ndgrad::shape_str(blk.tensor.shape) + ", config implies " +
              ndgrad::shape_str(tensors[i]->shape),
          {{"path", dir.string()},
           {"block", names[i]},
           {"expected", tensors[i]->shape},
           {"actual", blk.tensor.shape}});
    }
    *tensors[i] = blk.tensor;
  }
  ck.params.validate(ck.config);
  return ck;
}

}  // namespace adaeval::liteeval
