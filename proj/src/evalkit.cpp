// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "adaeval/errors.hpp"

namespace adaeval::evalkit {

const char* to_string(CostMode m) {
  switch (m) {
    case CostMode::kPaper: return "paper";
    case CostMode::kCnn: return "cnn";
    case CostMode::kFull: return "full";
  }
  return "full";
}

CostMode cost_mode_from_string(const std::string& s) {
  if (s == "paper") return CostMode::kPaper;
  if (s == "cnn") return CostMode::kCnn;
  if (s == "full") return CostMode::kFull;
  throw ConfigError("unknown cost mode '" + s + "' (paper, cnn, full)",
                    {{"field", "cost_mode"}, {"value", s}});
}

CostModel CostModel::for_mode(CostMode mode) {
  CostModel c;
  c.include_coarse = mode != CostMode::kPaper;
  c.include_recurrent = mode == CostMode::kFull;
  return c;
}

void CostModel::validate() const {
  if (!(coarse_gflops_per_frame >= 0.0) || !(fine_gflops_per_frame >= 0.0))
    throw ConfigError("per-frame costs must be non-negative",
                      {{"coarse", coarse_gflops_per_frame}, {"fine", fine_gflops_per_frame}});
}

nlohmann::json CostModel::to_json() const {
  return {{"coarse_gflops_per_frame", coarse_gflops_per_frame},
          {"fine_gflops_per_frame", fine_gflops_per_frame},
          {"include_coarse", include_coarse},
          {"include_recurrent", include_recurrent}};
}

RecurrentCost recurrent_cost(const ModelConfig& c) {
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  RecurrentCost r;
  r.coarse_lstm_step = 8.0 * d(c.coarse_hidden) * d(c.coarse_dim + c.coarse_hidden);
  r.fine_lstm_step =
      8.0 * d(c.fine_hidden) * d(c.coarse_dim + c.fine_dim + c.fine_hidden);
  r.gate = 2.0 * d(c.coarse_dim + 2 * c.fine_hidden) * 2.0;
  r.classifier = 2.0 * d(c.fine_hidden) * d(c.num_classes);
  return r;
}

double flops_for_trace(const StepTrace& trace, const ModelConfig& config,
                       const CostModel& cost) {
  const double steps = static_cast<double>(trace.length());
  const double reads = static_cast<double>(trace.fine_reads());
  double g = reads * cost.fine_gflops_per_frame;
  if (cost.include_coarse) g += steps * cost.coarse_gflops_per_frame;
  if (cost.include_recurrent) {
    const auto r = recurrent_cost(config);
    g += (steps * (r.coarse_lstm_step + r.gate + r.classifier) +
          reads * r.fine_lstm_step) * 1e-9;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Metrics

double top1(std::span<const std::vector<double>> predictions,
            std::span<const int> labels) {
  if (predictions.empty()) throw ContractError("top1: empty prediction set");
  if (predictions.size() != labels.size())
    throw ContractError("top1: predictions and labels differ in length",
                        {{"predictions", predictions.size()}, {"labels", labels.size()}});
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (cells::argmax(predictions[i]) == static_cast<std::size_t>(labels[i])) ++hit;
  return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

ApReport mean_average_precision(std::span<const std::vector<double>> scores,
                                std::span<const int> labels,
                                std::span<const std::string> ids,
                                std::size_t num_classes) {
  const std::size_t n = scores.size();
  if (labels.size() != n || ids.size() != n)
    throw ContractError("mAP: scores, labels and ids differ in length");
  if (num_classes == 0) throw ContractError("mAP: empty class set");
  for (const auto& s : scores)
    if (s.size() != num_classes)
      throw DimensionError("mAP: score row has " + std::to_string(s.size()) +
                           " entries, expected " + std::to_string(num_classes));

  ApReport report;
  report.per_class.resize(num_classes);
  std::vector<std::size_t> order(n);
  double sum = 0.0;
  std::size_t included = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t positives = 0;
    for (int y : labels) positives += static_cast<std::size_t>(y) == c;
    if (positives == 0) {
      report.excluded_classes.push_back(static_cast<int>(c));
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a][c] != scores[b][c]) return scores[a][c] > scores[b][c];
      return ids[a] < ids[b];
    });
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (static_cast<std::size_t>(labels[order[rank]]) == c) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    ap /= static_cast<double>(positives);
    report.per_class[c] = ap;
    sum += ap;
    ++included;
  }
  if (included == 0) throw ContractError("mAP: no class has a positive example");
  report.map = sum / static_cast<double>(included);
  return report;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

EvalResult score(std::vector<VideoSummary> videos, std::size_t num_classes,
                 CostMode cost_mode, std::size_t total_steps) {
  EvalResult r;
  r.cost_mode = to_string(cost_mode);
  std::vector<std::vector<double>> probs;
  std::vector<int> labels;
  std::vector<std::string> ids;
  double gflops = 0.0;
  std::size_t reads = 0;
  for (const auto& v : videos) {
    probs.push_back(v.probs);
    labels.push_back(v.label);
    ids.push_back(v.id);
    gflops += v.gflops;
    reads += v.fine_reads;
  }
  r.top1 = top1(probs, labels);
  auto ap = mean_average_precision(probs, labels, ids, num_classes);
  r.map = ap.map;
  r.per_class_ap = std::move(ap.per_class);
  r.excluded_classes = std::move(ap.excluded_classes);
  const double n = static_cast<double>(videos.size());
  r.mean_gflops = gflops / n;
  r.mean_usage = total_steps == 0 ? 0.0
                                  : static_cast<double>(reads) / static_cast<double>(total_steps);
  r.videos = std::move(videos);
  return r;
}

}  // namespace

EvalResult summarize(std::span<const StepTrace> traces,
                     std::span<const data::VideoSample> samples,
                     const ModelConfig& config, CostMode cost_mode) {
  if (traces.size() != samples.size())
    throw ContractError("summarize: one trace per video required");
  const CostModel cost = CostModel::for_mode(cost_mode);
  std::vector<VideoSummary> videos;
  std::size_t total_steps = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    VideoSummary v;
    v.id = samples[i].id;
    v.label = samples[i].label;
    v.probs = t.final_probs;
    v.predicted = static_cast<int>(cells::argmax(v.probs));
    v.steps = t.length();
    v.fine_reads = t.fine_reads();
    v.gflops = flops_for_trace(t, config, cost);
    total_steps += v.steps;
    videos.push_back(std::move(v));
  }
  return score(std::move(videos), config.num_classes, cost_mode, total_steps);
}

EvalResult eval_offline(const ModelParams& params, const ModelConfig& config,
                        std::span<const data::VideoSample> samples,
                        CostMode cost_mode, const std::string& method) {
  params.validate(config);
  const auto traces = liteeval::infer_traces(params, config, samples);
  auto r = summarize(traces, samples, config, cost_mode);
  r.method = method;
  r.protocol = "offline";
  return r;
}

EvalResult eval_online(const ModelParams& params, const ModelConfig& config,
                       std::span<const data::VideoSample> samples,
                       std::size_t budget, CostMode cost_mode,
                       const std::string& method) {
  params.validate(config);
  liteeval::RunOptions opts;
  opts.fine_budget = budget;
  const auto traces = liteeval::infer_traces(params, config, samples, opts);
  auto r = summarize(traces, samples, config, cost_mode);
  r.method = method;
  r.protocol = "online";
  r.budget = budget;
  return r;
}

std::vector<StepTrace> per_frame_traces(const ModelParams& fine_params,
                                        const ModelConfig& fine_config,
                                        std::span<const data::VideoSample> samples) {
  ModelConfig c = fine_config;
  c.gate_policy = liteeval::GatePolicy::kAlwaysFine;
  return liteeval::infer_traces(fine_params, c, samples);
}

std::size_t uniform_pick(std::size_t j, std::size_t k, std::size_t k_prime) {
  // ceil((j + 0.5) * K' / K) in integers: ceil((2j + 1) K' / 2K)
  const std::size_t num = (2 * j + 1) * k_prime;
  const std::size_t den = 2 * k;
  return std::max<std::size_t>(1, (num + den - 1) / den);
}

namespace {

std::vector<double> average_steps(const StepTrace& t, std::span<const std::size_t> steps_1based) {
  std::vector<double> avg(t.steps.front().probs.size(), 0.0);
  for (std::size_t s : steps_1based) {
    const auto& p = t.steps[s - 1].probs;
    for (std::size_t c = 0; c < avg.size(); ++c) avg[c] += p[c];
  }
  for (auto& x : avg) x /= static_cast<double>(steps_1based.size());
  return avg;
}

void check_frames(std::span<const StepTrace> frames, std::span<const data::VideoSample> samples,
                  std::size_t k) {
  if (frames.size() != samples.size())
    throw ContractError("baseline: one per-frame trace per video required");
  if (k == 0) throw ContractError("baseline: K must be >= 1");
}

}  // namespace

EvalResult baseline_uniform_k(std::span<const StepTrace> frame_traces,
                              std::span<const data::VideoSample> samples,
                              std::size_t k, std::span<const std::size_t> stop_steps,
                              std::size_t num_classes, CostMode cost_mode) {
  check_frames(frame_traces, samples, k);
  if (stop_steps.size() != samples.size())
    throw ContractError("uniform_k: one stop step per video required");
  const CostModel cost = CostModel::for_mode(cost_mode);
  std::vector<VideoSummary> videos;
  std::size_t total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& t = frame_traces[i];
    const std::size_t kp = std::clamp<std::size_t>(stop_steps[i], 1, t.length());
    const std::size_t kk = std::min(k, kp);
    std::vector<std::size_t> picks;
    for (std::size_t j = 0; j < kk; ++j) picks.push_back(uniform_pick(j, kk, kp));
    VideoSummary v;
    v.id = samples[i].id;
    v.label = samples[i].label;
    v.probs = average_steps(t, picks);
    v.predicted = static_cast<int>(cells::argmax(v.probs));
    v.steps = kp;
    v.fine_reads = kk;
    v.gflops = static_cast<double>(kk) * cost.fine_gflops_per_frame +
               (cost.include_coarse ? static_cast<double>(kp) * cost.coarse_gflops_per_frame : 0.0);
    total += kp;
    videos.push_back(std::move(v));
  }
  auto r = score(std::move(videos), num_classes, cost_mode, total);
  r.method = "uniform_k";
  r.protocol = "online";
  r.budget = k;
  return r;
}

EvalResult baseline_seq_k(std::span<const StepTrace> frame_traces,
                          std::span<const data::VideoSample> samples,
                          std::size_t k, std::size_t num_classes,
                          CostMode cost_mode) {
  check_frames(frame_traces, samples, k);
  const CostModel cost = CostModel::for_mode(cost_mode);
  std::vector<VideoSummary> videos;
  std::size_t total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& t = frame_traces[i];
    const std::size_t kk = std::min(k, t.length());
    std::vector<std::size_t> picks(kk);
    std::iota(picks.begin(), picks.end(), 1);
    VideoSummary v;
    v.id = samples[i].id;
    v.label = samples[i].label;
    v.probs = average_steps(t, picks);
    v.predicted = static_cast<int>(cells::argmax(v.probs));
    v.steps = kk;
    v.fine_reads = kk;
    v.gflops = static_cast<double>(kk) * cost.fine_gflops_per_frame;
    total += kk;
    videos.push_back(std::move(v));
  }
  auto r = score(std::move(videos), num_classes, cost_mode, total);
  r.method = "seq_k";
  r.protocol = "online";
  r.budget = k;
  return r;
}

ModelConfig baseline_config(LstmVariant variant, ModelConfig base) {
  base.lambda = 0.0;
  base.sync = true;
  base.gate_policy = variant == LstmVariant::kCoarseOnly
                         ? liteeval::GatePolicy::kAlwaysCoarse
                         : liteeval::GatePolicy::kAlwaysFine;
  return base;
}

BaselineRun baseline_lstm(LstmVariant variant, const ModelConfig& base,
                          std::span<const data::VideoSample> train_set,
                          std::span<const data::VideoSample> val_set,
                          std::span<const data::VideoSample> eval_set,
                          CostMode cost_mode,
                          const liteeval::EpochCallback& on_epoch) {
  BaselineRun run;
  run.config = baseline_config(variant, base);
  run.trained = liteeval::train(run.config, train_set, val_set, on_epoch);
  run.result = eval_offline(run.trained.params, run.config, eval_set, cost_mode,
                            variant == LstmVariant::kCoarseOnly ? "coarse_only"
                                                                : "fine_always");
  return run;
}

// ---------------------------------------------------------------------------
// Outputs

std::vector<std::size_t> EvalResult::stop_steps() const {
  std::vector<std::size_t> out;
  for (const auto& v : videos) out.push_back(v.steps);
  return out;
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::json ap = nlohmann::json::array();
  for (const auto& a : per_class_ap) ap.push_back(a ? nlohmann::json(*a) : nlohmann::json());
  nlohmann::json vids = nlohmann::json::array();
  for (const auto& v : videos) {
    vids.push_back({{"id", v.id},
                    {"label", v.label},
                    {"predicted", v.predicted},
                    {"steps", v.steps},
                    {"fine_reads", v.fine_reads},
                    {"gflops", v.gflops},
                    {"probs", v.probs}});
  }
  return {{"method", method},
          {"protocol", protocol},
          {"budget_K", budget ? nlohmann::json(*budget) : nlohmann::json()},
          {"cost_mode", cost_mode},
          {"top1", top1},
          {"mAP", map},
          {"mean_gflops", mean_gflops},
          {"mean_usage", mean_usage},
          {"num_videos", videos.size()},
          {"per_class_ap", ap},
          {"excluded_classes", excluded_classes},
          {"videos", vids}};
}

EvalResult EvalResult::from_json(const nlohmann::json& j) {
  EvalResult r;
  try {
    r.method = j.at("method").get<std::string>();
    r.protocol = j.at("protocol").get<std::string>();
    if (!j.at("budget_K").is_null()) r.budget = j.at("budget_K").get<std::size_t>();
    r.cost_mode = j.at("cost_mode").get<std::string>();
    r.top1 = j.at("top1").get<double>();
    r.map = j.at("mAP").get<double>();
    r.mean_gflops = j.at("mean_gflops").get<double>();
    r.mean_usage = j.at("mean_usage").get<double>();
    for (const auto& a : j.at("per_class_ap"))
      r.per_class_ap.push_back(a.is_null() ? std::nullopt : std::optional<double>(a.get<double>()));
    r.excluded_classes = j.at("excluded_classes").get<std::vector<int>>();
    for (const auto& v : j.at("videos")) {
      VideoSummary s;
      s.id = v.at("id").get<std::string>();
      s.label = v.at("label").get<int>();
      s.predicted = v.at("predicted").get<int>();
      s.steps = v.at("steps").get<std::size_t>();
      s.fine_reads = v.at("fine_reads").get<std::size_t>();
      s.gflops = v.at("gflops").get<double>();
      s.probs = v.at("probs").get<std::vector<double>>();
      r.videos.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation result: ") + e.what());
  }
  return r;
}

void write_results_json(const std::filesystem::path& path,
                        std::span<const EvalResult> results,
                        const nlohmann::json& context) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) arr.push_back(r.to_json());
  nlohmann::json doc = {{"format", "adaeval-results"}, {"version", 1},
                        {"context", context}, {"results", arr}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string(), {{"path", path.string()}});
  out << doc.dump(2) << '\n';
}

std::vector<EvalResult> read_results_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string(), {{"path", path.string()}});
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("results file is not valid JSON: ") + e.what(),
                    {{"path", path.string()}});
  }
  if (!doc.is_object() || doc.value("format", "") != "adaeval-results" ||
      !doc.contains("results") || !doc.at("results").is_array())
    throw DataError("not an adaeval results file", {{"path", path.string()}});
  std::vector<EvalResult> out;
  for (const auto& r : doc.at("results")) out.push_back(EvalResult::from_json(r));
  return out;
}

std::string curves_csv(std::span<const EvalResult> results) {
  std::ostringstream os;
  os << "budget_K,mean_gflops,top1,method\n";
  for (const auto& r : results) {
    os << (r.budget ? std::to_string(*r.budget) : std::string("inf")) << ','
       << nlohmann::json(r.mean_gflops).dump() << ','
       << nlohmann::json(r.top1).dump() << ',' << r.method << '\n';
  }
  return os.str();
}

void write_curves_csv(const std::filesystem::path& path,
                      std::span<const EvalResult> results) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string(), {{"path", path.string()}});
  out << curves_csv(results);
}

}  // namespace adaeval::evalkit
