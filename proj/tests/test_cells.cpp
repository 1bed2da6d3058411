// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "adaeval/cells.hpp"
#include "adaeval/errors.hpp"
#include "test_support.hpp"

namespace {

namespace cells = adaeval::cells;
namespace nd = adaeval::ndgrad;
using nd::Tape;
using nd::Tensor;
using testing_support::random_tensor;
using testing_support::TempDir;

TEST(Lstm, ZeroParamsFromZeroStateGiveZeroState) {
  Tape t;
  auto w = cells::bind(t, cells::LstmParams::zeros(3, 4), false);
  auto s = cells::lstm_step(w, t.constant(random_tensor({3}, 1)), cells::zero_state(t, 4));
  for (double v : s.h.values()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.values()) EXPECT_EQ(v, 0.0);
}

// One unit, one input: every gate pre-activation is w*x + u*h + b.
TEST(Lstm, ScalarCellMatchesHandComputation) {
  cells::LstmParams p = cells::LstmParams::zeros(1, 1);
  p.W = Tensor::matrix(4, 2, {0.5, -0.25, 1.0, 0.5, -1.0, 2.0, 0.75, 0.1});
  p.b = Tensor::vector({0.1, 1.0, 0.0, -0.2});
  const double x = 0.8, h0 = -0.3, c0 = 0.6;
  auto sg = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double i = sg(0.5 * x - 0.25 * h0 + 0.1);
  const double f = sg(1.0 * x + 0.5 * h0 + 1.0);
  const double o = sg(-1.0 * x + 2.0 * h0);
  const double g = std::tanh(0.75 * x + 0.1 * h0 - 0.2);
  const double c1 = f * c0 + i * g;
  const double h1 = o * std::tanh(c1);

  Tape t;
  auto w = cells::bind(t, p, false);
  cells::LstmState s{t.constant(Tensor::vector({h0})), t.constant(Tensor::vector({c0}))};
  auto out = cells::lstm_step(w, t.constant(Tensor::vector({x})), s);
  EXPECT_NEAR(out.c.item(), c1, 1e-15);
  EXPECT_NEAR(out.h.item(), h1, 1e-15);
}

TEST(Lstm, MatchesLongDoubleOracleOnRandomCells) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cells::LstmParams p = cells::LstmParams::zeros(5, 3);
    p.W = random_tensor({12, 8}, seed, 0.8);
    p.b = random_tensor({12}, seed + 50, 0.5);
    const auto x = random_tensor({5}, seed + 100);
    const auto h = random_tensor({3}, seed + 200), c = random_tensor({3}, seed + 300);
    Tape t;
    auto out = cells::lstm_step(cells::bind(t, p, false), t.constant(x),
                                {t.constant(h), t.constant(c)});
    testing_support::OracleState s{{h.data.begin(), h.data.end()}, {c.data.begin(), c.data.end()}};
    auto ref = testing_support::oracle_lstm(p.W, p.b, {x.data.begin(), x.data.end()}, s);
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(out.h[k], static_cast<double>(ref.h[k]), 1e-14);
      EXPECT_NEAR(out.c[k], static_cast<double>(ref.c[k]), 1e-14);
    }
  }
}

TEST(Lstm, HiddenStaysInUnitInterval) {
  cells::LstmParams p = cells::LstmParams::zeros(4, 6);
  p.W = random_tensor({24, 10}, 3, 20.0);
  p.b = random_tensor({24}, 4, 20.0);
  Tape t;
  auto w = cells::bind(t, p, false);
  auto s = cells::zero_state(t, 6);
  for (int step = 0; step < 20; ++step) {
    s = cells::lstm_step(w, t.constant(random_tensor({4}, 10 + step, 50.0)), s);
    for (double v : s.h.values()) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(Lstm, InitializedUsesForgetBiasOneAndBoundedWeights) {
  adaeval::SplitMix64 rng(7);
  auto p = cells::LstmParams::initialized(5, 3, rng);
  const double bound = 1.0 / std::sqrt(8.0);
  for (double w : p.W.data) EXPECT_LE(std::abs(w), bound);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(p.b[k], (k >= 3 && k < 6) ? 1.0 : 0.0);
}

TEST(Lstm, WrongInputWidthIsDimensionError) {
  Tape t;
  auto w = cells::bind(t, cells::LstmParams::zeros(3, 4), false);
  EXPECT_THROW(cells::lstm_step(w, t.constant(Tensor({5})), cells::zero_state(t, 4)),
               adaeval::DimensionError);
  EXPECT_THROW(cells::lstm_step(w, t.constant(Tensor({3})), cells::zero_state(t, 2)),
               adaeval::DimensionError);
}

TEST(Gate, LogitsAreAdditiveOverInputParts) {
  cells::GateParams p = cells::GateParams::zeros(3, 2);
  p.W = random_tensor({7, 2}, 1);
  p.b = random_tensor({2}, 2);
  const auto v = random_tensor({3}, 3), h = random_tensor({2}, 4), c = random_tensor({2}, 5);
  Tape t;
  auto w = cells::bind(t, p, false);
  auto z = t.constant(Tensor({2}));
  auto full = cells::gate_logits(w, t.constant(v), t.constant(h), t.constant(c));
  auto only_v = cells::gate_logits(w, t.constant(v), z, z);
  auto only_h = cells::gate_logits(w, t.constant(Tensor({3})), t.constant(h), z);
  auto only_c = cells::gate_logits(w, t.constant(Tensor({3})), z, t.constant(c));
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(full[k] + 2 * p.b[k], only_v[k] + only_h[k] + only_c[k], 1e-14);
  }
}

TEST(Gate, InitializedBiasFavoursReading) {
  adaeval::SplitMix64 rng(3);
  auto p = cells::GateParams::initialized(4, 5, rng);
  EXPECT_EQ(p.W.shape, (nd::Shape{14, 2}));
  EXPECT_EQ(p.b[0], 0.0);
  EXPECT_EQ(p.b[1], 1.0);
}

TEST(Classifier, ZeroWeightsGiveUniformProbabilities) {
  Tape t;
  auto w = cells::bind(t, cells::ClassifierParams::zeros(6, 4), false);
  auto pred = cells::classify(w, t.constant(random_tensor({6}, 1)));
  for (double p : pred.probs.values()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Classifier, ArgmaxPicksLowestIndexOnTies) {
  const std::vector<double> p{0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(cells::argmax(p), 1u);
  const std::vector<double> q{0.0, 0.0};
  EXPECT_EQ(cells::argmax(q), 0u);
}

TEST(Blocks, RoundTripIsBitExact) {
  TempDir dir("blocks");
  std::vector<cells::NamedBlock> blocks{
      {"a", random_tensor({3, 4}, 1)},
      {"b", Tensor::vector({-0.0, 1e-310, 1.0 / 3.0})},
      {"s", Tensor::scalar(42.5)}};
  cells::write_blocks(dir.path(), {{"k", "v"}}, blocks);
  auto back = cells::read_blocks(dir.path());
  ASSERT_EQ(back.blocks.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.blocks[i].name, blocks[i].name);
    EXPECT_EQ(back.blocks[i].tensor.shape, blocks[i].tensor.shape);
    EXPECT_EQ(std::memcmp(back.blocks[i].tensor.data.data(), blocks[i].tensor.data.data(),
                          blocks[i].tensor.size() * sizeof(double)),
              0);
  }
  EXPECT_EQ(back.header.at("meta").at("k"), "v");
  EXPECT_EQ(std::filesystem::file_size(dir / "params.bin"), (12 + 3 + 1) * sizeof(double));
}

TEST(Blocks, BinaryLayoutIsLittleEndianBinary64) {
  TempDir dir("layout");
  cells::write_blocks(dir.path(), nlohmann::json::object(), {{"x", Tensor::vector({1.0})}});
  const auto bytes = testing_support::file_bytes(dir / "params.bin");
  const std::vector<unsigned char> one{0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
  EXPECT_EQ(bytes, one);
}

TEST(Blocks, MissingOrTruncatedFilesAreDataErrors) {
  TempDir dir("broken");
  EXPECT_THROW(cells::read_blocks(dir.path()), adaeval::DataError);
  cells::write_blocks(dir.path(), nlohmann::json::object(), {{"x", random_tensor({4}, 1)}});
  std::filesystem::resize_file(dir / "params.bin", 20);
  EXPECT_THROW(cells::read_blocks(dir.path()), adaeval::DataError);
  std::ofstream(dir / "header.json") << "{not json";
  EXPECT_THROW(cells::read_blocks(dir.path()), adaeval::DataError);
}

TEST(Blocks, WrongFormatVersionIsRejected) {
  TempDir dir("version");
  cells::write_blocks(dir.path(), nlohmann::json::object(), {{"x", Tensor::vector({1.0})}});
  std::ifstream in(dir / "header.json");
  auto h = nlohmann::json::parse(in);
  in.close();
  h["version"] = 99;
  std::ofstream(dir / "header.json") << h.dump();
  EXPECT_THROW(cells::read_blocks(dir.path()), adaeval::DataError);
}

}  // namespace
