// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <tuple>

#include "adaeval/errors.hpp"
#include "adaeval/evalkit.hpp"
#include "test_support.hpp"

namespace {

namespace ek = adaeval::evalkit;
namespace le = adaeval::liteeval;
namespace ts = testing_support;

le::StepTrace trace_with_bits(const std::vector<int>& bits, std::size_t classes = 3) {
  le::StepTrace t;
  std::size_t reads = 0;
  for (int b : bits) {
    le::StepRecord r;
    r.bit = b;
    reads += b;
    r.cumulative_reads = reads;
    r.probs.assign(classes, 1.0 / classes);
    t.steps.push_back(r);
  }
  t.final_probs = t.steps.back().probs;
  return t;
}

TEST(Cost, PaperModeAllFineTwentyFiveSteps) {
  le::ModelConfig c;
  c.steps = 25;
  const auto g = ek::flops_for_trace(trace_with_bits(std::vector<int>(25, 1)), c,
                                     ek::CostModel::for_mode(ek::CostMode::kPaper));
  EXPECT_NEAR(g, 195.5, 1e-9);
}

TEST(Cost, CnnModeAddsCoarsePerStep) {
  le::ModelConfig c;
  c.steps = 16;
  const auto g = ek::flops_for_trace(trace_with_bits(std::vector<int>(16, 0)), c,
                                     ek::CostModel::for_mode(ek::CostMode::kCnn));
  EXPECT_NEAR(g, 16 * 0.08, 1e-12);
}

TEST(Cost, RecurrentCostsByHand) {
  le::ModelConfig c;  // Dc 16, Df 64, Hc 8, Hf 32, C 10
  const auto r = ek::recurrent_cost(c);
  EXPECT_EQ(r.coarse_lstm_step, 8.0 * 8 * (16 + 8));
  EXPECT_EQ(r.fine_lstm_step, 8.0 * 32 * (16 + 64 + 32));
  EXPECT_EQ(r.gate, 2.0 * (16 + 64) * 2);
  EXPECT_EQ(r.classifier, 2.0 * 32 * 10);
  const std::vector<int> bits{1, 0, 0, 1, 1};
  const double expect = 3 * 7.82 + 5 * 0.08 +
                        (5 * (1536.0 + 320.0 + 640.0) + 3 * 28672.0) * 1e-9;
  EXPECT_NEAR(ek::flops_for_trace(trace_with_bits(bits), c,
                                  ek::CostModel::for_mode(ek::CostMode::kFull)),
              expect, 1e-12);
}

TEST(Cost, AdditiveOverReadsAndSteps) {
  le::ModelConfig c;
  const auto m = ek::CostModel::for_mode(ek::CostMode::kFull);
  const double none = ek::flops_for_trace(trace_with_bits({0, 0, 0, 0}), c, m);
  const double one = ek::flops_for_trace(trace_with_bits({0, 1, 0, 0}), c, m);
  const double two = ek::flops_for_trace(trace_with_bits({1, 1, 0, 0}), c, m);
  EXPECT_NEAR(two - one, one - none, 1e-12);
  EXPECT_GT(one, none);
  const double longer = ek::flops_for_trace(trace_with_bits({0, 0, 0, 0, 0}), c, m);
  EXPECT_GT(longer, none);
}

TEST(Cost, ModeNamesRoundTrip) {
  for (auto m : {ek::CostMode::kPaper, ek::CostMode::kCnn, ek::CostMode::kFull})
    EXPECT_EQ(ek::cost_mode_from_string(ek::to_string(m)), m);
  EXPECT_THROW(ek::cost_mode_from_string("cheap"), adaeval::ConfigError);
}

TEST(Top1, TiesGoToLowestIndex) {
  const std::vector<std::vector<double>> p{{0.4, 0.4, 0.2}, {0.1, 0.45, 0.45}, {0.2, 0.3, 0.5}};
  const std::vector<int> y{0, 2, 2};
  EXPECT_DOUBLE_EQ(ek::top1(p, y), 2.0 / 3.0);
  EXPECT_THROW(ek::top1(std::span<const std::vector<double>>{}, std::span<const int>{}),
               adaeval::ContractError);
  EXPECT_THROW(ek::top1(p, std::vector<int>{0}), adaeval::ContractError);
}

// Independent AP: rank by (-score, id), precision at every positive.
double oracle_ap(const std::vector<double>& s, const std::vector<int>& pos,
                 const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return std::make_tuple(-s[a], ids[a]) < std::make_tuple(-s[b], ids[b]);
  });
  double hits = 0, sum = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (pos[order[r]]) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  return hits > 0 ? sum / hits : -1;
}

TEST(Map, HandExample) {
  // class 0 ranking: a(0.9,+) b(0.8,-) c(0.7,+) d(0.6,-) -> (1 + 2/3) / 2
  const std::vector<std::vector<double>> s{{0.9, 0.1}, {0.8, 0.2}, {0.7, 0.3}, {0.6, 0.4}};
  const std::vector<int> y{0, 1, 0, 1};
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  const auto rep = ek::mean_average_precision(s, y, ids, 2);
  EXPECT_NEAR(*rep.per_class[0], 5.0 / 6.0, 1e-15);
  // class 1 ranking: d(+) c(-) b(+) a(-) -> same
  EXPECT_NEAR(*rep.per_class[1], 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(rep.map, 5.0 / 6.0, 1e-15);
}

TEST(Map, TiesAreBrokenById) {
  const std::vector<std::vector<double>> s{{0.5, 0.5}, {0.5, 0.5}};
  const std::vector<int> y{0, 1};
  const auto first = ek::mean_average_precision(s, y, std::vector<std::string>{"a", "b"}, 2);
  EXPECT_DOUBLE_EQ(*first.per_class[0], 1.0);
  EXPECT_DOUBLE_EQ(*first.per_class[1], 0.5);
  const auto swapped = ek::mean_average_precision(s, y, std::vector<std::string>{"b", "a"}, 2);
  EXPECT_DOUBLE_EQ(*swapped.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(*swapped.per_class[1], 1.0);
}

TEST(Map, ClassesWithoutPositivesAreExcluded) {
  const std::vector<std::vector<double>> s{{0.9, 0.1, 0.0}, {0.2, 0.8, 0.0}};
  const std::vector<int> y{0, 1};
  const auto rep = ek::mean_average_precision(s, y, std::vector<std::string>{"a", "b"}, 3);
  EXPECT_FALSE(rep.per_class[2].has_value());
  EXPECT_EQ(rep.excluded_classes, std::vector<int>{2});
  EXPECT_DOUBLE_EQ(rep.map, 1.0);
}

TEST(Map, AgreesWithBruteForceAndIsPermutationInvariant) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 30, C = 4;
    std::vector<std::vector<double>> s(n, std::vector<double>(C));
    std::vector<int> y(n);
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties happen.
      for (auto& x : s[i]) x = std::round(u(gen) * 5) / 5;
      y[i] = static_cast<int>(gen() % C);
      ids[i] = "v" + std::to_string(1000 + gen() % 9000) + "_" + std::to_string(i);
    }
    const auto rep = ek::mean_average_precision(s, y, ids, C);
    double sum = 0;
    int counted = 0;
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<double> col(n);
      std::vector<int> pos(n);
      for (std::size_t i = 0; i < n; ++i) {
        col[i] = s[i][c];
        pos[i] = y[i] == static_cast<int>(c);
      }
      const double ap = oracle_ap(col, pos, ids);
      if (ap < 0) continue;
      EXPECT_NEAR(*rep.per_class[c], ap, 1e-14);
      sum += ap;
      ++counted;
    }
    EXPECT_NEAR(rep.map, sum / counted, 1e-14);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<std::vector<double>> s2;
    std::vector<int> y2;
    std::vector<std::string> ids2;
    for (auto i : perm) {
      s2.push_back(s[i]);
      y2.push_back(y[i]);
      ids2.push_back(ids[i]);
    }
    EXPECT_EQ(ek::mean_average_precision(s2, y2, ids2, C).map, rep.map);
  }
}

struct Fixture {
  le::ModelConfig config = ts::tiny_config();
  le::ModelParams params;
  std::vector<adaeval::data::VideoSample> videos;
  Fixture() {
    config.steps = 10;
    params = ts::random_params(config, 12, 0.7);
    for (int i = 0; i < 40; ++i)
      videos.push_back(ts::random_video(config, 300 + i, i % 3, "v" + std::to_string(i)));
  }
};

TEST(Protocol, OnlineWithoutBindingBudgetEqualsOfflineBitwise) {
  Fixture f;
  const auto off = ek::eval_offline(f.params, f.config, f.videos, ek::CostMode::kFull);
  const auto on = ek::eval_online(f.params, f.config, f.videos, f.config.steps + 1,
                                  ek::CostMode::kFull);
  ASSERT_EQ(off.videos.size(), on.videos.size());
  for (std::size_t i = 0; i < off.videos.size(); ++i) {
    EXPECT_EQ(off.videos[i].probs, on.videos[i].probs);
    EXPECT_EQ(off.videos[i].predicted, on.videos[i].predicted);
  }
  EXPECT_EQ(off.top1, on.top1);
  EXPECT_EQ(off.mean_gflops, on.mean_gflops);
}

TEST(Protocol, OnlineStopsAtKthRead) {
  Fixture f;
  const auto off = ek::eval_offline(f.params, f.config, f.videos, ek::CostMode::kPaper);
  ASSERT_GT(off.mean_usage, 0.0);
  for (std::size_t k : {1u, 2u, 4u}) {
    const auto on = ek::eval_online(f.params, f.config, f.videos, k, ek::CostMode::kPaper);
    EXPECT_EQ(on.budget, k);
    for (std::size_t i = 0; i < f.videos.size(); ++i) {
      const auto& v = on.videos[i];
      EXPECT_LE(v.fine_reads, k);
      if (v.fine_reads == k) {
        EXPECT_NEAR(v.gflops, k * 7.82, 1e-9);
      } else {
        EXPECT_EQ(v.steps, f.config.steps);
      }
      EXPECT_LE(v.steps, off.videos[i].steps);
    }
  }
  const auto zero = ek::eval_online(f.params, f.config, f.videos, 0, ek::CostMode::kPaper);
  for (const auto& v : zero.videos) {
    EXPECT_EQ(v.fine_reads, 0u);
    EXPECT_EQ(v.steps, f.config.steps);
  }
}

TEST(Protocol, ResultsJsonRoundTrip) {
  Fixture f;
  const auto r = ek::eval_online(f.params, f.config, f.videos, 2, ek::CostMode::kCnn);
  ts::TempDir dir("results");
  const std::vector<ek::EvalResult> rs{r};
  ek::write_results_json(dir / "results.json", rs, {{"k", 1}});
  const auto back = ek::read_results_json(dir / "results.json");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].to_json(), r.to_json());
  const auto csv = ek::curves_csv(rs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "budget_K,mean_gflops,top1,method");
  const auto off = ek::eval_offline(f.params, f.config, f.videos, ek::CostMode::kCnn);
  const std::vector<ek::EvalResult> rs2{off};
  EXPECT_NE(ek::curves_csv(rs2).find("\ninf,"), std::string::npos);
}

TEST(Baselines, UniformPickSpreadsAcrossWindow) {
  EXPECT_EQ(ek::uniform_pick(0, 1, 10), 5u);
  EXPECT_EQ(ek::uniform_pick(0, 2, 10), 3u);
  EXPECT_EQ(ek::uniform_pick(1, 2, 10), 8u);
  for (std::size_t k = 1; k <= 12; ++k) {
    std::size_t prev = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const auto p = ek::uniform_pick(j, k, 12);
      EXPECT_GE(p, 1u);
      EXPECT_LE(p, 12u);
      EXPECT_GT(p, prev);
      prev = p;
    }
  }
}

TEST(Baselines, SeqAndUniformAverageTheRightFrames) {
  Fixture f;
  auto fine_cfg = f.config;
  fine_cfg.gate_policy = le::GatePolicy::kAlwaysFine;
  const auto frames = ek::per_frame_traces(f.params, fine_cfg, f.videos);
  ASSERT_EQ(frames[0].length(), f.config.steps);
  for (const auto& t : frames) EXPECT_EQ(t.fine_reads(), f.config.steps);

  const auto seq = ek::baseline_seq_k(frames, f.videos, 3, 3, ek::CostMode::kPaper);
  for (std::size_t i = 0; i < f.videos.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double avg =
          (frames[i].steps[0].probs[c] + frames[i].steps[1].probs[c] + frames[i].steps[2].probs[c]) / 3;
      EXPECT_NEAR(seq.videos[i].probs[c], avg, 1e-15);
    }
    EXPECT_NEAR(seq.videos[i].gflops, 3 * 7.82, 1e-12);
  }

  std::vector<std::size_t> stops(f.videos.size(), 10);
  const auto uni = ek::baseline_uniform_k(frames, f.videos, 2, stops, 3, ek::CostMode::kCnn);
  for (std::size_t i = 0; i < f.videos.size(); ++i) {
    const double avg = (frames[i].steps[2].probs[1] + frames[i].steps[7].probs[1]) / 2;
    EXPECT_NEAR(uni.videos[i].probs[1], avg, 1e-15);
    EXPECT_NEAR(uni.videos[i].gflops, 2 * 7.82 + 10 * 0.08, 1e-12);
  }
  EXPECT_EQ(uni.method, "uniform_k");
  EXPECT_EQ(seq.method, "seq_k");
  EXPECT_THROW(ek::baseline_seq_k(frames, f.videos, 0, 3, ek::CostMode::kPaper),
               adaeval::ContractError);
}

TEST(Baselines, ConfigsForceTheGate) {
  le::ModelConfig base;
  base.lambda = 2;
  const auto fine = ek::baseline_config(ek::LstmVariant::kFineAlways, base);
  EXPECT_EQ(fine.gate_policy, le::GatePolicy::kAlwaysFine);
  EXPECT_EQ(fine.lambda, 0.0);
  const auto coarse = ek::baseline_config(ek::LstmVariant::kCoarseOnly, base);
  EXPECT_EQ(coarse.gate_policy, le::GatePolicy::kAlwaysCoarse);
  EXPECT_TRUE(coarse.sync);
}

}  // namespace
