// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "adaeval/errors.hpp"
#include "adaeval/ndgrad.hpp"
#include "test_support.hpp"

namespace {

namespace nd = adaeval::ndgrad;
using nd::DiffArray;
using nd::Shape;
using nd::Tape;
using nd::Tensor;
using testing_support::random_tensor;

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;

// Reduces any array to a scalar through a fixed random weighting so that
// every output entry carries a distinct gradient.
DiffArray weighted_sum(const DiffArray& y, std::uint64_t seed) {
  Tape& t = y.tape();
  auto w = t.constant(random_tensor(y.shape(), seed));
  return nd::mean(nd::hadamard(y, w));
}

struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<DiffArray(Tape&, std::span<const DiffArray>)> build;
  double scale = 1.0;
  double offset = 0.0;  // added to inputs (keeps log away from the floor)
};

std::vector<PrimitiveCase> primitive_cases() {
  using S = Shape;
  return {
      {"matmul_mm", {S{3, 4}, S{4, 2}}, [](Tape&, auto p) { return nd::matmul(p[0], p[1]); }},
      {"matmul_vm", {S{4}, S{4, 3}}, [](Tape&, auto p) { return nd::matmul(p[0], p[1]); }},
      {"matmul_mv", {S{5, 4}, S{4}}, [](Tape&, auto p) { return nd::matmul(p[0], p[1]); }},
      {"add", {S{3, 2}, S{3, 2}}, [](Tape&, auto p) { return nd::add(p[0], p[1]); }},
      {"add_broadcast", {S{3, 2}, S{2}}, [](Tape&, auto p) { return nd::add(p[0], p[1]); }},
      {"add_broadcast_lhs", {S{2}, S{4, 2}}, [](Tape&, auto p) { return nd::add(p[0], p[1]); }},
      {"hadamard", {S{6}, S{6}}, [](Tape&, auto p) { return nd::hadamard(p[0], p[1]); }},
      {"concat_vec", {S{3}, S{2}}, [](Tape&, auto p) { return nd::concat(p[0], p[1]); }},
      {"concat_rows", {S{2, 3}, S{1, 3}}, [](Tape&, auto p) { return nd::concat(p[0], p[1], 0); }},
      {"concat_cols", {S{2, 3}, S{2, 2}}, [](Tape&, auto p) { return nd::concat(p[0], p[1], 1); }},
      {"slice_vec", {S{7}}, [](Tape&, auto p) { return nd::slice(p[0], 0, 2, 5); }},
      {"slice_rows", {S{4, 3}}, [](Tape&, auto p) { return nd::slice(p[0], 0, 1, 3); }},
      {"slice_cols", {S{4, 3}}, [](Tape&, auto p) { return nd::slice(p[0], 1, 1, 3); }},
      {"sigmoid", {S{5}}, [](Tape&, auto p) { return nd::sigmoid(p[0]); }, 3.0},
      {"tanh", {S{5}}, [](Tape&, auto p) { return nd::tanh(p[0]); }, 2.0},
      {"softmax_vec", {S{5}}, [](Tape&, auto p) { return nd::softmax(p[0]); }, 2.0},
      {"softmax_rows", {S{3, 4}}, [](Tape&, auto p) { return nd::softmax(p[0], 1); }, 2.0},
      {"softmax_cols", {S{3, 4}}, [](Tape&, auto p) { return nd::softmax(p[0], 0); }, 2.0},
      {"log", {S{5}}, [](Tape&, auto p) { return nd::log(p[0]); }, 0.5, 1.0},
      {"mean", {S{2, 3}}, [](Tape&, auto p) { return nd::mean(p[0]); }},
      {"square", {S{5}}, [](Tape&, auto p) { return nd::square(p[0]); }},
      {"scalar_mul", {S{4}}, [](Tape&, auto p) { return nd::scalar_mul(p[0], -1.7); }},
      {"cross_entropy_vec",
       {S{4}},
       [](Tape& t, auto p) {
         return nd::cross_entropy(p[0], t.constant(Tensor::vector({0.0, 0.0, 1.0, 0.0})));
       },
       2.0},
      {"cross_entropy_batch",
       {S{2, 3}},
       [](Tape& t, auto p) {
         return nd::cross_entropy(p[0], t.constant(Tensor::matrix(2, 3, {0.2, 0.8, 0.0, 0, 0, 1})));
       },
       2.0},
  };
}

class PrimitiveGrad : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGrad, MatchesCentralDifferencesOverTenSeeds) {
  const auto c = primitive_cases()[GetParam()];
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::vector<Tensor> params;
    for (std::size_t i = 0; i < c.shapes.size(); ++i) {
      auto t = random_tensor(c.shapes[i], seed * 100 + i, c.scale);
      for (auto& x : t.data) x += c.offset;
      params.push_back(std::move(t));
    }
    const auto f = [&](Tape& tape, std::span<const DiffArray> p) {
      const DiffArray y = c.build(tape, p);
      return y.shape().empty() ? y : weighted_sum(y, seed + 999);
    };
    const auto rep = nd::grad_check_report(f, params, kEps);
    EXPECT_LE(rep.max_relative_error, kTol)
        << c.name << " seed " << seed << " param " << rep.worst_param << "[" << rep.worst_index
        << "] analytic " << rep.analytic << " numeric " << rep.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGrad,
                         ::testing::Range<std::size_t>(0, primitive_cases().size()),
                         [](const auto& info) { return std::string(primitive_cases()[info.param].name); });

TEST(Forward, MatmulByIdentityReturnsInput) {
  Tape t;
  auto eye = t.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  const auto x = random_tensor({3, 5}, 4);
  auto y = nd::matmul(eye, t.constant(x));
  EXPECT_EQ(y.to_tensor(), x);
}

TEST(Forward, SigmoidOfZeroIsHalf) {
  Tape t;
  auto y = nd::sigmoid(t.constant(Tensor({6})));
  for (double v : y.values()) EXPECT_EQ(v, 0.5);
}

// Oracle: log(1 + e^-2) evaluated at 40 digits.
TEST(Forward, CrossEntropyMatchesHighPrecisionOracle) {
  const long double oracle = std::log1p(std::exp(-2.0L));
  EXPECT_NEAR(static_cast<double>(oracle), 0.12692801104297250, 1e-16);
  Tape t;
  auto ce = nd::cross_entropy(t.constant(Tensor::vector({2.0, 0.0})),
                              t.constant(Tensor::vector({1.0, 0.0})));
  EXPECT_NEAR(ce.item(), 0.12692801104297250, 1e-15);
}

TEST(Forward, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  Tape t;
  const auto x = random_tensor({4, 6}, 9, 5.0);
  auto shifted = x;
  for (auto& v : shifted.data) v += 123.25;
  auto a = nd::softmax(t.constant(x), 1);
  auto b = nd::softmax(t.constant(shifted), 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 6; ++j) s += a.values()[r * 6 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (std::size_t i = 0; i < 24; ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-9);
}

TEST(Forward, SoftmaxSurvivesLargeLogits) {
  Tape t;
  auto y = nd::softmax(t.constant(Tensor::vector({1000.0, 0.0, -1000.0})));
  EXPECT_EQ(y.values()[0], 1.0);
  EXPECT_TRUE(std::isfinite(y.values()[2]));
}

TEST(Forward, LogClampsAtFloor) {
  Tape t;
  auto x = t.leaf(Tensor::vector({0.0, 1e-40, 2.0}), true);
  auto y = nd::log(x);
  EXPECT_EQ(y.values()[0], std::log(nd::kLogFloor));
  EXPECT_EQ(y.values()[1], std::log(nd::kLogFloor));
  t.backward(nd::mean(y));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_NEAR(x.grad()[2], 1.0 / 6.0, 1e-15);
}

TEST(Forward, ConcatThenSliceIsIdentityOnEachHalf) {
  Tape t;
  const auto a = random_tensor({2, 3}, 1), b = random_tensor({2, 4}, 2);
  auto c = nd::concat(t.constant(a), t.constant(b), 1);
  EXPECT_EQ(nd::slice(c, 1, 0, 3).to_tensor(), a);
  EXPECT_EQ(nd::slice(c, 1, 3, 7).to_tensor(), b);
  const auto u = random_tensor({5}, 3), v = random_tensor({2}, 4);
  auto w = nd::concat(t.constant(u), t.constant(v));
  EXPECT_EQ(nd::slice(w, 0, 0, 5).to_tensor(), u);
  EXPECT_EQ(nd::slice(w, 0, 5, 7).to_tensor(), v);
}

TEST(Backward, MeanOfSquareHandDerivative) {
  Tape t;
  auto x = t.leaf(Tensor::vector({1, 2, 3}), true);
  t.backward(nd::mean(nd::square(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0 / 3.0);
}

TEST(Backward, FanOutAccumulates) {
  Tape t;
  auto x = t.leaf(Tensor::scalar(0.7), true);
  t.backward(nd::add(x, x));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Backward, UnreachedArraysHaveZeroGradient) {
  Tape t;
  auto x = t.leaf(Tensor::vector({1, 2}), true);
  auto unused = t.leaf(Tensor::vector({3, 4, 5}), true);
  auto side = nd::square(unused);
  t.backward(nd::mean(x));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
  for (double g : side.grad()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(unused.grad().size(), 3u);
}

TEST(Backward, StraightThroughPassesSoftGradient) {
  const auto soft_in = random_tensor({2}, 5);
  const auto w = random_tensor({2}, 6);
  auto run = [&](bool st) {
    Tape t;
    auto l = t.leaf(soft_in, true);
    auto s = nd::softmax(l);
    auto y = st ? nd::straight_through(s) : s;
    t.backward(nd::mean(nd::hadamard(y, t.constant(w))));
    if (st) {
      EXPECT_TRUE((y[0] == 1.0 && y[1] == 0.0) || (y[0] == 0.0 && y[1] == 1.0));
    }
    return std::vector<double>(l.grad().begin(), l.grad().end());
  };
  const auto g_st = run(true), g_soft = run(false);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(g_st[i], g_soft[i], 1e-6 * std::max(1.0, std::abs(g_soft[i])));
}

TEST(Backward, StraightThroughTieGoesToHigherIndex) {
  Tape t;
  auto y = nd::straight_through(t.constant(Tensor::vector({0.5, 0.5})));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
}

TEST(GradCheck, LinearFunctionIsExactToRoundoff) {
  const auto f = [](Tape&, std::span<const DiffArray> p) { return nd::mean(p[0]); };
  EXPECT_LE(nd::grad_check(f, {random_tensor({7}, 3)}, kEps), 1e-10);
}

TEST(GradCheck, SigmoidWeightedComposition) {
  const auto f = [](Tape&, std::span<const DiffArray> p) {
    return nd::mean(nd::hadamard(nd::sigmoid(p[0]), p[1]));
  };
  EXPECT_LE(nd::grad_check(f, {random_tensor({5}, 1, 2.0), random_tensor({5}, 2)}, kEps), 1e-4);
}

TEST(GradCheck, CrossEntropyAfterSoftmaxChain) {
  const auto f = [](Tape& t, std::span<const DiffArray> p) {
    auto probs = nd::softmax(nd::matmul(p[0], p[1]));
    return nd::cross_entropy(probs, t.constant(Tensor::vector({0, 1, 0})));
  };
  EXPECT_LE(nd::grad_check(f, {random_tensor({4}, 3), random_tensor({4, 3}, 4)}, kEps), 1e-5);
}

TEST(GradCheck, RejectsNonPositiveEps) {
  const auto f = [](Tape&, std::span<const DiffArray> p) { return nd::mean(p[0]); };
  EXPECT_THROW(nd::grad_check(f, {random_tensor({2}, 1)}, 0.0), adaeval::ContractError);
}

TEST(Tape, NodeIdsAreUniqueAndClearEmptiesTape) {
  Tape t;
  std::set<std::size_t> ids;
  auto x = t.leaf(Tensor::vector({1, 2}), true);
  ids.insert(x.node_id());
  auto y = nd::square(x);
  ids.insert(y.node_id());
  auto z = nd::mean(y);
  ids.insert(z.node_id());
  EXPECT_EQ(ids.size(), 3u);
  EXPECT_EQ(t.size(), 3u);
  t.clear();
  EXPECT_EQ(t.size(), 0u);
  EXPECT_FALSE(x.valid());
}

TEST(Tape, ConstantsAreNotRecordedForBackward) {
  Tape t;
  auto c = t.constant(Tensor::vector({1, 2}));
  auto y = nd::square(c);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(t.recorded_ops(), 0u);
}

TEST(Errors, BackwardTwiceIsRejected) {
  Tape t;
  auto x = t.leaf(Tensor::vector({1, 2}), true);
  auto l = nd::mean(x);
  t.backward(l);
  EXPECT_THROW(t.backward(l), adaeval::ContractError);
}

TEST(Errors, BackwardOnClearedTapeIsRejected) {
  Tape t;
  auto x = t.leaf(Tensor::vector({1, 2}), true);
  auto l = nd::mean(x);
  t.clear();
  EXPECT_THROW(t.backward(l), adaeval::ContractError);
  auto y = t.leaf(Tensor::vector({1}), true);
  (void)y;
  EXPECT_THROW(t.backward(l), adaeval::ContractError);
}

TEST(Errors, NonScalarRootIsRejected) {
  Tape t;
  auto x = t.leaf(Tensor::vector({1, 2}), true);
  EXPECT_THROW(t.backward(nd::square(x)), adaeval::ContractError);
}

TEST(Errors, EmptyTapeAndForeignRootAreRejected) {
  Tape a, b;
  auto x = b.leaf(Tensor::scalar(1.0), true);
  EXPECT_THROW(a.backward(x), adaeval::ContractError);
}

TEST(Errors, ShapeMismatchNamesOpAndShapes) {
  Tape t;
  auto a = t.constant(Tensor({2, 3}));
  auto b = t.constant(Tensor({2, 3}));
  try {
    nd::matmul(a, b);
    FAIL() << "expected a dimension error";
  } catch (const adaeval::DimensionError& e) {
    EXPECT_EQ(e.kind(), "dimension_error");
    EXPECT_EQ(e.details().at("op"), "matmul");
    EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos);
  }
  EXPECT_THROW(nd::hadamard(t.constant(Tensor({3})), t.constant(Tensor({4}))),
               adaeval::DimensionError);
  EXPECT_THROW(nd::add(t.constant(Tensor({2, 3})), t.constant(Tensor({2}))),
               adaeval::DimensionError);
}

TEST(Errors, SliceOutOfBoundsIsRangeError) {
  Tape t;
  auto a = t.constant(Tensor({4}));
  EXPECT_THROW(nd::slice(a, 0, 2, 5), adaeval::RangeError);
  EXPECT_THROW(nd::slice(a, 0, 3, 2), adaeval::RangeError);
}

TEST(Errors, CrossEntropyLabelMustSumToOne) {
  Tape t;
  EXPECT_THROW(nd::cross_entropy(t.constant(Tensor::vector({1, 2})),
                                 t.constant(Tensor::vector({0.5, 0.4}))),
               adaeval::ContractError);
}

TEST(Errors, TensorDataMustMatchShape) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), adaeval::DimensionError);
}

}  // namespace
