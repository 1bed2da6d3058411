// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/ndgrad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adaeval/errors.hpp"
#include "adaeval/kernels.hpp"

namespace adaeval::ndgrad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw DimensionError("tensor data does not match shape",
                         {{"shape", shape}, {"size", data.size()}});
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kHadamard: return "hadamard";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kSoftmax: return "softmax";
    case Op::kLog: return "log";
    case Op::kMean: return "mean";
    case Op::kSquare: return "square";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kCrossEntropy: return "cross_entropy";
    case Op::kStraightThrough: return "straight_through";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// DiffArray

const Shape& DiffArray::shape() const { return tape().node(*this).shape; }

std::size_t DiffArray::size() const { return tape().node(*this).value.size(); }

std::span<const double> DiffArray::values() const {
  return tape().node(*this).value;
}

std::span<const double> DiffArray::grad() const {
  Tape& t = tape();
  const auto& n = t.node(*this);
  if (!n.grad.empty()) return n.grad;
  if (t.zeros_.size() < n.value.size()) t.zeros_.assign(n.value.size(), 0.0);
  return std::span<const double>(t.zeros_).first(n.value.size());
}

bool DiffArray::requires_grad() const {
  return tape().node(*this).requires_grad;
}

Tape& DiffArray::tape() const {
  if (!tape_) throw ContractError("use of a default-constructed DiffArray");
  tape_->check(*this);
  return *tape_;
}

bool DiffArray::valid() const {
  return tape_ && generation_ == tape_->generation_ &&
         id_ < tape_->nodes_.size();
}

double DiffArray::item() const {
  const auto v = values();
  if (v.size() != 1) {
    throw ContractError("item() on a non-scalar array",
                        {{"shape", shape()}});
  }
  return v[0];
}

Tensor DiffArray::to_tensor() const {
  const auto v = values();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// Tape

void Tape::check(const DiffArray& a) const {
  if (a.tape_ != this) throw ContractError("array belongs to another tape");
  if (a.generation_ != generation_ || a.id_ >= nodes_.size()) {
    throw ContractError("array refers to a cleared tape",
                        {{"node_id", a.id_}});
  }
}

Tape::Node& Tape::node(const DiffArray& a) {
  check(a);
  return nodes_[a.id_];
}

const Tape::Node& Tape::node(const DiffArray& a) const {
  check(a);
  return nodes_[a.id_];
}

DiffArray Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return DiffArray(this, nodes_.size() - 1, generation_);
}

DiffArray Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.shape = std::move(value.shape);
  n.value = std::move(value.data);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

void Tape::clear() {
  nodes_.clear();
  ++generation_;
  backward_done_ = false;
}

std::size_t Tape::recorded_ops() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) {
        return n.requires_grad && n.op != Op::kLeaf;
      }));
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(const DiffArray& root) {
  if (nodes_.empty()) throw ContractError("backward on an empty tape");
  if (root.tape_ != this || root.generation_ != generation_ ||
      root.id_ >= nodes_.size()) {
    throw ContractError("backward root is not on this tape");
  }
  if (backward_done_) {
    throw ContractError("backward already ran on this tape; clear it first");
  }
  const auto& r = nodes_[root.id_];
  if (r.value.size() != 1) {
    throw ContractError("backward root must be a scalar",
                        {{"shape", r.shape}});
  }
  backward_done_ = true;
  if (!r.requires_grad) return;
  grad_buffer(root.id_)[0] = 1.0;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    const auto& n = nodes_[id];
    if (n.op == Op::kLeaf || !n.requires_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

// ---------------------------------------------------------------------------
// Primitive forward rules. Recorder has access to tape internals.

struct Recorder {
  static Tape& common(const DiffArray& a, const DiffArray& b) {
    Tape& t = a.tape();
    if (&b.tape() != &t) throw ContractError("operands on different tapes");
    return t;
  }

  static const Tape::Node& node(const DiffArray& a) {
    return a.tape().node(a);
  }

  static DiffArray emit(Tape& t, Op op, Shape shape, std::vector<double> value,
                        std::initializer_list<const DiffArray*> inputs,
                        double scalar = 0.0, std::size_t axis = 0,
                        std::size_t start = 0,
                        std::vector<double> cache = {}) {
    Tape::Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.scalar = scalar;
    n.axis = axis;
    n.start = start;
    n.cache = std::move(cache);
    std::size_t k = 0;
    for (const DiffArray* in : inputs) {
      n.inputs[k++] = static_cast<std::int64_t>(in->node_id());
      n.requires_grad = n.requires_grad || t.nodes_[in->node_id()].requires_grad;
    }
    if (!n.requires_grad) n.cache.clear();
    return t.push(std::move(n));
  }

  static std::vector<double>& grad_of(Tape& t, std::int64_t id) {
    return t.grad_buffer(static_cast<std::size_t>(id));
  }
  static bool wants_grad(const Tape& t, std::int64_t id) {
    return id >= 0 && t.nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  static const Tape::Node& input(const Tape& t, std::int64_t id) {
    return t.nodes_[static_cast<std::size_t>(id)];
  }
};

namespace {

[[noreturn]] void dim_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) +
                           " vs " + shape_str(b),
                       {{"op", op}, {"lhs", a}, {"rhs", b}});
}

[[noreturn]] void dim_error(const char* op, const Shape& a,
                            const std::string& why) {
  throw DimensionError(std::string(op) + ": " + why + " for shape " +
                           shape_str(a),
                       {{"op", op}, {"shape", a}});
}

struct MatDims {
  std::size_t m, k, n;
};

MatDims matmul_dims(const Shape& a, const Shape& b) {
  if (a.empty() || a.size() > 2 || b.empty() || b.size() > 2)
    dim_error("matmul", a, b);
  const std::size_t m = a.size() == 2 ? a[0] : 1;
  const std::size_t ka = a.size() == 2 ? a[1] : a[0];
  const std::size_t kb = b[0];
  const std::size_t n = b.size() == 2 ? b[1] : 1;
  if (ka != kb) dim_error("matmul", a, b);
  return {m, ka, n};
}

// Lays out a softmax axis as `outer` independent runs of `len` entries.
struct AxisRuns {
  std::size_t outer, len, stride;
  std::size_t offset(std::size_t o, std::size_t cols) const {
    return stride == 1 ? o * len : o % cols;
  }
};

AxisRuns axis_runs(const Shape& s, std::size_t axis, const char* op) {
  if (s.size() == 1 && axis == 0) return {1, s[0], 1};
  if (s.size() == 2 && axis == 1) return {s[0], s[1], 1};
  if (s.size() == 2 && axis == 0) return {s[1], s[0], s[1]};
  dim_error(op, s, "invalid axis " + std::to_string(axis));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax_run(const double* in, double* out, std::size_t len,
                 std::size_t stride) {
  double mx = in[0];
  for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, in[i * stride]);
  double sum = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    out[i * stride] = std::exp(in[i * stride] - mx);
    sum += out[i * stride];
  }
  for (std::size_t i = 0; i < len; ++i) out[i * stride] /= sum;
}

// Broadcast mode for add: 0 same shape, 1 rhs broadcast, 2 lhs broadcast.
int add_mode(const Shape& a, const Shape& b) {
  if (a == b) return 0;
  if (a.size() == 2 && b.size() == 1 && a[1] == b[0]) return 1;
  if (a.size() == 1 && b.size() == 2 && b[1] == a[0]) return 2;
  dim_error("add", a, b);
}

}  // namespace

DiffArray matmul(const DiffArray& a, const DiffArray& b) {
  Tape& t = Recorder::common(a, b);
  const auto& na = Recorder::node(a);
  const auto& nb = Recorder::node(b);
  const auto d = matmul_dims(na.shape, nb.shape);
  Shape out;
  if (na.shape.size() == 2) out.push_back(d.m);
  if (nb.shape.size() == 2) out.push_back(d.n);
  std::vector<double> v(d.m * d.n);
  kernels::matmul(na.value, nb.value, v, d.m, d.k, d.n);
  return Recorder::emit(t, Op::kMatMul, std::move(out), std::move(v), {&a, &b});
}

DiffArray add(const DiffArray& a, const DiffArray& b) {
  Tape& t = Recorder::common(a, b);
  const auto& na = Recorder::node(a);
  const auto& nb = Recorder::node(b);
  const int mode = add_mode(na.shape, nb.shape);
  std::vector<double> v;
  Shape out;
  if (mode == 0) {
    out = na.shape;
    v.resize(na.value.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.value[i] + nb.value[i];
  } else {
    const auto& big = mode == 1 ? na : nb;
    const auto& row = mode == 1 ? nb : na;
    out = big.shape;
    const std::size_t cols = row.value.size();
    v.resize(big.value.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = mode == 1 ? big.value[i] + row.value[i % cols]
                       : row.value[i % cols] + big.value[i];
  }
  return Recorder::emit(t, Op::kAdd, std::move(out), std::move(v), {&a, &b},
                        0.0, static_cast<std::size_t>(mode));
}

DiffArray hadamard(const DiffArray& a, const DiffArray& b) {
  Tape& t = Recorder::common(a, b);
  const auto& na = Recorder::node(a);
  const auto& nb = Recorder::node(b);
  if (na.shape != nb.shape) dim_error("hadamard", na.shape, nb.shape);
  std::vector<double> v(na.value.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.value[i] * nb.value[i];
  return Recorder::emit(t, Op::kHadamard, na.shape, std::move(v), {&a, &b});
}

DiffArray concat(const DiffArray& a, const DiffArray& b, std::size_t axis) {
  Tape& t = Recorder::common(a, b);
  const auto& na = Recorder::node(a);
  const auto& nb = Recorder::node(b);
  const auto& sa = na.shape;
  const auto& sb = nb.shape;
  if (sa.size() != sb.size() || sa.empty() || axis >= sa.size())
    dim_error("concat", sa, sb);
  Shape out = sa;
  std::vector<double> v;
  v.reserve(na.value.size() + nb.value.size());
  if (sa.size() == 1 || axis == 0) {
    if (sa.size() == 2 && sa[1] != sb[1]) dim_error("concat", sa, sb);
    out[0] = sa[0] + sb[0];
    v.insert(v.end(), na.value.begin(), na.value.end());
    v.insert(v.end(), nb.value.begin(), nb.value.end());
  } else {
    if (sa[0] != sb[0]) dim_error("concat", sa, sb);
    out[1] = sa[1] + sb[1];
    for (std::size_t r = 0; r < sa[0]; ++r) {
      v.insert(v.end(), na.value.begin() + r * sa[1],
               na.value.begin() + (r + 1) * sa[1]);
      v.insert(v.end(), nb.value.begin() + r * sb[1],
               nb.value.begin() + (r + 1) * sb[1]);
    }
  }
  return Recorder::emit(t, Op::kConcat, std::move(out), std::move(v), {&a, &b},
                        0.0, axis, sa[axis]);
}

DiffArray slice(const DiffArray& a, std::size_t axis, std::size_t start,
                std::size_t end) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  const auto& s = na.shape;
  if (s.empty() || axis >= s.size()) dim_error("slice", s, "invalid axis");
  if (start > end || end > s[axis]) {
    throw RangeError("slice: [" + std::to_string(start) + ", " +
                         std::to_string(end) + ") out of range for axis " +
                         std::to_string(axis) + " of " + shape_str(s),
                     {{"op", "slice"},
                      {"shape", s},
                      {"axis", axis},
                      {"start", start},
                      {"end", end}});
  }
  Shape out = s;
  out[axis] = end - start;
  std::vector<double> v;
  v.reserve(numel(out));
  if (s.size() == 1) {
    v.assign(na.value.begin() + start, na.value.begin() + end);
  } else if (axis == 0) {
    v.assign(na.value.begin() + start * s[1], na.value.begin() + end * s[1]);
  } else {
    for (std::size_t r = 0; r < s[0]; ++r)
      v.insert(v.end(), na.value.begin() + r * s[1] + start,
               na.value.begin() + r * s[1] + end);
  }
  return Recorder::emit(t, Op::kSlice, std::move(out), std::move(v), {&a}, 0.0,
                        axis, start);
}

DiffArray sigmoid(const DiffArray& a) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  std::vector<double> v(na.value.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = stable_sigmoid(na.value[i]);
  return Recorder::emit(t, Op::kSigmoid, na.shape, std::move(v), {&a});
}

DiffArray tanh(const DiffArray& a) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  std::vector<double> v(na.value.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(na.value[i]);
  return Recorder::emit(t, Op::kTanh, na.shape, std::move(v), {&a});
}

DiffArray softmax(const DiffArray& a, std::size_t axis) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  const auto runs = axis_runs(na.shape, axis, "softmax");
  const std::size_t cols = na.shape.size() == 2 ? na.shape[1] : na.shape[0];
  std::vector<double> v(na.value.size());
  for (std::size_t o = 0; o < runs.outer; ++o) {
    const std::size_t off = runs.offset(o, cols);
    softmax_run(na.value.data() + off, v.data() + off, runs.len, runs.stride);
  }
  return Recorder::emit(t, Op::kSoftmax, na.shape, std::move(v), {&a}, 0.0,
                        axis);
}

DiffArray log(const DiffArray& a) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  std::vector<double> v(na.value.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::log(std::max(na.value[i], kLogFloor));
  return Recorder::emit(t, Op::kLog, na.shape, std::move(v), {&a});
}

DiffArray mean(const DiffArray& a) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  if (na.value.empty()) dim_error("mean", na.shape, "empty array");
  double s = 0.0;
  for (double x : na.value) s += x;
  return Recorder::emit(t, Op::kMean, Shape{},
                        {s / static_cast<double>(na.value.size())}, {&a});
}

DiffArray square(const DiffArray& a) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  std::vector<double> v(na.value.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.value[i] * na.value[i];
  return Recorder::emit(t, Op::kSquare, na.shape, std::move(v), {&a});
}

DiffArray scalar_mul(const DiffArray& a, double s) {
  Tape& t = a.tape();
  const auto& na = Recorder::node(a);
  std::vector<double> v(na.value.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = na.value[i] * s;
  return Recorder::emit(t, Op::kScalarMul, na.shape, std::move(v), {&a}, s);
}

DiffArray cross_entropy(const DiffArray& logits, const DiffArray& one_hot) {
  Tape& t = Recorder::common(logits, one_hot);
  const auto& nl = Recorder::node(logits);
  const auto& ny = Recorder::node(one_hot);
  if (nl.shape != ny.shape || nl.shape.empty() || nl.shape.size() > 2)
    dim_error("cross_entropy", nl.shape, ny.shape);
  const std::size_t rows = nl.shape.size() == 2 ? nl.shape[0] : 1;
  const std::size_t cols = nl.shape.back();
  std::vector<double> probs(nl.value.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = nl.value.data() + r * cols;
    const double* y = ny.value.data() + r * cols;
    double ysum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ysum += y[j];
    if (std::abs(ysum - 1.0) > 1e-9) {
      throw ContractError("cross_entropy: label row does not sum to 1",
                          {{"row", r}, {"sum", ysum}});
    }
    double mx = z[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, z[j]);
    double se = 0.0;
    for (std::size_t j = 0; j < cols; ++j) se += std::exp(z[j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < cols; ++j) {
      probs[r * cols + j] = std::exp(z[j] - lse);
      if (y[j] != 0.0) total -= y[j] * (z[j] - lse);
    }
  }
  return Recorder::emit(t, Op::kCrossEntropy, Shape{},
                        {total / static_cast<double>(rows)},
                        {&logits, &one_hot}, 0.0, 0, 0, std::move(probs));
}

DiffArray straight_through(const DiffArray& soft) {
  Tape& t = soft.tape();
  const auto& ns = Recorder::node(soft);
  if (ns.shape.empty() || ns.shape.size() > 2)
    dim_error("straight_through", ns.shape, "expected rank 1 or 2");
  const std::size_t cols = ns.shape.back();
  const std::size_t rows = ns.value.size() / cols;
  std::vector<double> v(ns.value.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j)
      if (ns.value[r * cols + j] >= ns.value[r * cols + best]) best = j;
    v[r * cols + best] = 1.0;
  }
  return Recorder::emit(t, Op::kStraightThrough, ns.shape, std::move(v),
                        {&soft});
}

// ---------------------------------------------------------------------------
// Backward rules.

void Tape::backward_node(std::size_t id) {
  const Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  const auto in0 = n.inputs[0];
  const auto in1 = n.inputs[1];
  const bool want0 = Recorder::wants_grad(*this, in0);
  const bool want1 = Recorder::wants_grad(*this, in1);

  switch (n.op) {
    case Op::kLeaf:
      return;

    case Op::kMatMul: {
      const auto& a = Recorder::input(*this, in0);
      const auto& b = Recorder::input(*this, in1);
      const auto d = matmul_dims(a.shape, b.shape);
      if (want0)
        kernels::matmul_grad_a(g, b.value, Recorder::grad_of(*this, in0), d.m,
                               d.k, d.n);
      if (want1)
        kernels::matmul_grad_b(a.value, g, Recorder::grad_of(*this, in1), d.m,
                               d.k, d.n);
      return;
    }

    case Op::kAdd: {
      const int mode = static_cast<int>(n.axis);
      auto accumulate = [&](std::int64_t in, bool broadcast) {
        auto& gi = Recorder::grad_of(*this, in);
        if (!broadcast) {
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        } else {
          const std::size_t cols = gi.size();
          for (std::size_t i = 0; i < g.size(); ++i) gi[i % cols] += g[i];
        }
      };
      if (want0) accumulate(in0, mode == 2);
      if (want1) accumulate(in1, mode == 1);
      return;
    }

    case Op::kHadamard: {
      const auto& a = Recorder::input(*this, in0);
      const auto& b = Recorder::input(*this, in1);
      if (want0) {
        auto& ga = Recorder::grad_of(*this, in0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value[i];
      }
      if (want1) {
        auto& gb = Recorder::grad_of(*this, in1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value[i];
      }
      return;
    }

    case Op::kConcat: {
      const auto& a = Recorder::input(*this, in0);
      const auto& b = Recorder::input(*this, in1);
      if (n.shape.size() == 1 || n.axis == 0) {
        const std::size_t na = a.value.size();
        if (want0) {
          auto& ga = Recorder::grad_of(*this, in0);
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (want1) {
          auto& gb = Recorder::grad_of(*this, in1);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        }
      } else {
        const std::size_t rows = n.shape[0];
        const std::size_t ca = a.shape[1];
        const std::size_t cb = b.shape[1];
        const std::size_t co = n.shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          if (want0) {
            auto& ga = Recorder::grad_of(*this, in0);
            for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] += g[r * co + j];
          }
          if (want1) {
            auto& gb = Recorder::grad_of(*this, in1);
            for (std::size_t j = 0; j < cb; ++j)
              gb[r * cb + j] += g[r * co + ca + j];
          }
        }
      }
      return;
    }

    case Op::kSlice: {
      if (!want0) return;
      const auto& a = Recorder::input(*this, in0);
      auto& ga = Recorder::grad_of(*this, in0);
      if (a.shape.size() == 1) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[n.start + i] += g[i];
      } else if (n.axis == 0) {
        const std::size_t off = n.start * a.shape[1];
        for (std::size_t i = 0; i < g.size(); ++i) ga[off + i] += g[i];
      } else {
        const std::size_t cols = a.shape[1];
        const std::size_t w = n.shape[1];
        for (std::size_t r = 0; r < n.shape[0]; ++r)
          for (std::size_t j = 0; j < w; ++j)
            ga[r * cols + n.start + j] += g[r * w + j];
      }
      return;
    }

    case Op::kSigmoid: {
      if (!want0) return;
      auto& ga = Recorder::grad_of(*this, in0);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      return;
    }

    case Op::kTanh: {
      if (!want0) return;
      auto& ga = Recorder::grad_of(*this, in0);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      return;
    }

    case Op::kSoftmax: {
      if (!want0) return;
      auto& ga = Recorder::grad_of(*this, in0);
      const auto runs = axis_runs(n.shape, n.axis, "softmax");
      const std::size_t cols = n.shape.size() == 2 ? n.shape[1] : n.shape[0];
      for (std::size_t o = 0; o < runs.outer; ++o) {
        const std::size_t off = runs.offset(o, cols);
        double dot = 0.0;
        for (std::size_t i = 0; i < runs.len; ++i) {
          const std::size_t k = off + i * runs.stride;
          dot += g[k] * n.value[k];
        }
        for (std::size_t i = 0; i < runs.len; ++i) {
          const std::size_t k = off + i * runs.stride;
          ga[k] += n.value[k] * (g[k] - dot);
        }
      }
      return;
    }

    case Op::kLog: {
      if (!want0) return;
      const auto& a = Recorder::input(*this, in0);
      auto& ga = Recorder::grad_of(*this, in0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.value[i] > kLogFloor) ga[i] += g[i] / a.value[i];
      return;
    }

    case Op::kMean: {
      if (!want0) return;
      auto& ga = Recorder::grad_of(*this, in0);
      const double share = g[0] / static_cast<double>(ga.size());
      for (auto& x : ga) x += share;
      return;
    }

    case Op::kSquare: {
      if (!want0) return;
      const auto& a = Recorder::input(*this, in0);
      auto& ga = Recorder::grad_of(*this, in0);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += 2.0 * a.value[i] * g[i];
      return;
    }

    case Op::kScalarMul: {
      if (!want0) return;
      auto& ga = Recorder::grad_of(*this, in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
      return;
    }

    case Op::kCrossEntropy: {
      const auto& z = Recorder::input(*this, in0);
      const auto& y = Recorder::input(*this, in1);
      const std::size_t cols = z.shape.back();
      const std::size_t rows = z.value.size() / cols;
      const double scale = g[0] / static_cast<double>(rows);
      if (want0) {
        auto& gz = Recorder::grad_of(*this, in0);
        for (std::size_t r = 0; r < rows; ++r) {
          double ysum = 0.0;
          for (std::size_t j = 0; j < cols; ++j) ysum += y.value[r * cols + j];
          for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t k = r * cols + j;
            gz[k] += scale * (n.cache[k] * ysum - y.value[k]);
          }
        }
      }
      if (want1) {
        auto& gy = Recorder::grad_of(*this, in1);
        for (std::size_t k = 0; k < gy.size(); ++k)
          gy[k] -= scale * std::log(std::max(n.cache[k], kLogFloor));
      }
      return;
    }

    case Op::kStraightThrough: {
      if (!want0) return;
      auto& ga = Recorder::grad_of(*this, in0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check.

GradCheckReport grad_check_report(const ScalarFn& f,
                                  const std::vector<Tensor>& params,
                                  double eps) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  GradCheckReport report;

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<DiffArray> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
    DiffArray root = f(tape, leaves);
    tape.backward(root);
    for (const auto& l : leaves) {
      const auto gr = l.grad();
      analytic.emplace_back(gr.begin(), gr.end());
    }
  }

  Tape tape;
  std::vector<Tensor> work = params;
  auto eval = [&]() {
    tape.clear();
    std::vector<DiffArray> leaves;
    leaves.reserve(work.size());
    for (const auto& p : work) leaves.push_back(tape.leaf(p, false));
    return f(tape, leaves).item();
  };

  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + eps;
      const double fp = eval();
      work[p][i] = orig - eps;
      const double fm = eval();
      work[p][i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[p][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_relative_error || report.entries_checked == 1) {
        report.max_relative_error = rel;
        report.worst_param = p;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& params,
                  double eps) {
  return grad_check_report(f, params, eps).max_relative_error;
}

}  // namespace adaeval::ndgrad
