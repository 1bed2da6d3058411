// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_NDGRAD_HPP_
#define ADAEVAL_NDGRAD_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace adaeval::ndgrad {

// Dimension sizes, rank 0 (scalar), 1 (vector) or 2 (row-major matrix).
using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Plain dense value, the host-side currency for parameters and inputs.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data[r * shape[1] + c];
  }

  bool operator==(const Tensor&) const = default;
};

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kHadamard,
  kConcat,
  kSlice,
  kSigmoid,
  kTanh,
  kSoftmax,
  kLog,
  kMean,
  kSquare,
  kScalarMul,
  kCrossEntropy,
  kStraightThrough,
};

const char* op_name(Op op);

class Tape;

// Handle to an array living on a Tape. Cheap to copy; invalid once the tape
// is cleared.
class DiffArray {
 public:
  DiffArray() = default;

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> values() const;
  // d(root)/d(this) after backward; all-zero if this array was not reached.
  std::span<const double> grad() const;
  bool requires_grad() const;
  std::size_t node_id() const { return id_; }
  Tape& tape() const;
  bool valid() const;

  double item() const;  // value of a single-element array
  double operator[](std::size_t i) const { return values()[i]; }
  Tensor to_tensor() const;

 private:
  friend class Tape;
  DiffArray(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

// Explicit reverse-mode tape. Every array created on the tape becomes a node;
// nodes whose inputs do not require gradients are stored as constants and are
// skipped by backward. Nodes are appended in creation order, so the list is
// topologically sorted by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  DiffArray leaf(Tensor value, bool requires_grad);
  DiffArray constant(Tensor value) { return leaf(std::move(value), false); }

  // Runs reverse accumulation from a scalar root. A tape supports one
  // backward pass; call clear() before recording the next step.
  void backward(const DiffArray& root);

  void clear();

  std::size_t size() const { return nodes_.size(); }
  // Nodes that participate in backward (non-leaf, requires_grad).
  std::size_t recorded_ops() const;
  bool backward_done() const { return backward_done_; }

 private:
  friend class DiffArray;
  friend struct Recorder;

  struct Node {
    Op op = Op::kLeaf;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::array<std::int64_t, 2> inputs{-1, -1};
    double scalar = 0.0;
    std::size_t axis = 0;
    std::size_t start = 0;
    std::vector<double> cache;
  };

  Node& node(const DiffArray& a);
  const Node& node(const DiffArray& a) const;
  void check(const DiffArray& a) const;
  DiffArray push(Node n);
  std::vector<double>& grad_buffer(std::size_t id);
  void backward_node(std::size_t id);

  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
  bool backward_done_ = false;
  std::vector<double> zeros_;
};

// Primitive set. All operands must live on the same tape.

// a(m x k) * b(k x n). A rank-1 lhs is a row vector and a rank-1 rhs a column
// vector; the corresponding output dimension is dropped.
DiffArray matmul(const DiffArray& a, const DiffArray& b);
// Elementwise sum. One operand may be rank-1 (m) against a rank-2 (n x m)
// other; it is then broadcast over the leading batch dimension.
DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray hadamard(const DiffArray& a, const DiffArray& b);
DiffArray concat(const DiffArray& a, const DiffArray& b, std::size_t axis = 0);
DiffArray slice(const DiffArray& a, std::size_t axis, std::size_t start,
                std::size_t end);
DiffArray sigmoid(const DiffArray& a);
DiffArray tanh(const DiffArray& a);
// Max-subtracted softmax along `axis` (rank-1: axis 0).
DiffArray softmax(const DiffArray& a, std::size_t axis = 0);
// Natural log with the input clamped at kLogFloor.
DiffArray log(const DiffArray& a);
DiffArray mean(const DiffArray& a);
DiffArray square(const DiffArray& a);
DiffArray scalar_mul(const DiffArray& a, double s);
// -sum(one_hot * log_softmax(logits)); rank-2 inputs average over rows.
DiffArray cross_entropy(const DiffArray& logits, const DiffArray& one_hot);
// Forward: one-hot of the argmax (ties go to the highest index).
// Backward: identity, i.e. gradients flow as if the output were `soft`.
DiffArray straight_through(const DiffArray& soft);

inline constexpr double kLogFloor = 1e-30;

// Central-difference gradient check. `f` builds a scalar on the given tape
// from leaves bound to `params` (in order). Returns the maximum over all
// parameter entries of |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
using ScalarFn =
    std::function<DiffArray(Tape&, std::span<const DiffArray> params)>;

inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

GradCheckReport grad_check_report(const ScalarFn& f,
                                  const std::vector<Tensor>& params,
                                  double eps);
double grad_check(const ScalarFn& f, const std::vector<Tensor>& params,
                  double eps);

}  // namespace adaeval::ndgrad

#endif  // ADAEVAL_NDGRAD_HPP_
