// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/cells.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "adaeval/errors.hpp"

namespace adaeval::cells {
namespace {

void fill_uniform(Tensor& t, double bound, SplitMix64& rng) {
  for (auto& x : t.data) x = (2.0 * rng.uniform() - 1.0) * bound;
}

void expect_shape(const Tensor& t, const ndgrad::Shape& want, const char* what,
                  const char* block) {
  if (t.shape != want) {
    throw DimensionError(std::string(what) + "." + block + ": expected " +
                             ndgrad::shape_str(want) + ", got " +
                             ndgrad::shape_str(t.shape),
                         {{"params", what},
                          {"block", block},
                          {"expected", want},
                          {"actual", t.shape}});
  }
  for (double x : t.data) {
    if (!std::isfinite(x)) {
      throw DataError(std::string(what) + "." + block + " has non-finite entries",
                      {{"params", what}, {"block", block}});
    }
  }
}

void expect_size(const DiffArray& a, std::size_t n, const char* op,
                 const char* operand) {
  if (a.shape().size() != 1 || a.size() != n) {
    throw DimensionError(std::string(op) + ": " + operand + " has shape " +
                             ndgrad::shape_str(a.shape()) + ", expected (" +
                             std::to_string(n) + ")",
                         {{"op", op},
                          {"operand", operand},
                          {"expected", n},
                          {"actual", a.shape()}});
  }
}

}  // namespace

LstmParams LstmParams::zeros(std::size_t input_dim, std::size_t hidden) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.W = Tensor({4 * hidden, input_dim + hidden});
  p.b = Tensor({4 * hidden});
  return p;
}

LstmParams LstmParams::initialized(std::size_t input_dim, std::size_t hidden,
                                   SplitMix64& rng) {
  auto p = zeros(input_dim, hidden);
  fill_uniform(p.W, 1.0 / std::sqrt(static_cast<double>(input_dim + hidden)),
               rng);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) p.b[j] = 1.0;
  return p;
}

void LstmParams::validate(const char* what) const {
  expect_shape(W, {4 * hidden, input_dim + hidden}, what, "W");
  expect_shape(b, {4 * hidden}, what, "b");
}

GateParams GateParams::zeros(std::size_t coarse_dim, std::size_t fine_hidden) {
  GateParams p;
  p.coarse_dim = coarse_dim;
  p.fine_hidden = fine_hidden;
  p.W = Tensor({p.input_dim(), 2});
  p.b = Tensor({2});
  return p;
}

GateParams GateParams::initialized(std::size_t coarse_dim,
                                   std::size_t fine_hidden, SplitMix64& rng) {
  auto p = zeros(coarse_dim, fine_hidden);
  fill_uniform(p.W, 1.0 / std::sqrt(static_cast<double>(p.input_dim())), rng);
  p.b[1] = 1.0;
  return p;
}

void GateParams::validate(const char* what) const {
  expect_shape(W, {input_dim(), 2}, what, "W");
  expect_shape(b, {2}, what, "b");
}

ClassifierParams ClassifierParams::zeros(std::size_t hidden,
                                         std::size_t classes) {
  ClassifierParams p;
  p.hidden = hidden;
  p.classes = classes;
  p.W = Tensor({hidden, classes});
  p.b = Tensor({classes});
  return p;
}

void ClassifierParams::validate(const char* what) const {
  expect_shape(W, {hidden, classes}, what, "W");
  expect_shape(b, {classes}, what, "b");
}

LstmWeights bind(Tape& tape, const LstmParams& p, bool requires_grad) {
  return {tape.leaf(p.W, requires_grad), tape.leaf(p.b, requires_grad),
          p.input_dim, p.hidden};
}

GateWeights bind(Tape& tape, const GateParams& p, bool requires_grad) {
  return {tape.leaf(p.W, requires_grad), tape.leaf(p.b, requires_grad)};
}

ClassifierWeights bind(Tape& tape, const ClassifierParams& p,
                       bool requires_grad) {
  return {tape.leaf(p.W, requires_grad), tape.leaf(p.b, requires_grad)};
}

LstmState zero_state(Tape& tape, std::size_t hidden) {
  return {tape.constant(Tensor({hidden})), tape.constant(Tensor({hidden}))};
}

LstmState lstm_step(const LstmWeights& cell, const DiffArray& x,
                    const LstmState& state) {
  const std::size_t H = cell.hidden;
  expect_size(x, cell.input_dim, "lstm_step", "x");
  expect_size(state.h, H, "lstm_step", "h");
  expect_size(state.c, H, "lstm_step", "c");

  const DiffArray z =
      ndgrad::add(ndgrad::matmul(cell.W, ndgrad::concat(x, state.h)), cell.b);
  const DiffArray i = ndgrad::sigmoid(ndgrad::slice(z, 0, 0, H));
  const DiffArray f = ndgrad::sigmoid(ndgrad::slice(z, 0, H, 2 * H));
  const DiffArray o = ndgrad::sigmoid(ndgrad::slice(z, 0, 2 * H, 3 * H));
  const DiffArray g = ndgrad::tanh(ndgrad::slice(z, 0, 3 * H, 4 * H));
  const DiffArray c =
      ndgrad::add(ndgrad::hadamard(f, state.c), ndgrad::hadamard(i, g));
  const DiffArray h = ndgrad::hadamard(o, ndgrad::tanh(c));
  return {h, c};
}

DiffArray gate_logits(const GateWeights& gate, const DiffArray& coarse_feature,
                      const DiffArray& fine_h, const DiffArray& fine_c) {
  const auto& ws = gate.W.shape();
  const std::size_t hf = fine_h.size();
  const std::size_t dc = coarse_feature.size();
  if (ws.size() != 2 || ws[1] != 2 || ws[0] != dc + 2 * hf) {
    throw DimensionError("gate_logits: W_g shape " + ndgrad::shape_str(ws) +
                             " does not match inputs (" + std::to_string(dc) +
                             " + 2*" + std::to_string(hf) + ") x 2",
                         {{"op", "gate_logits"},
                          {"W_g", ws},
                          {"coarse_dim", dc},
                          {"fine_hidden", hf}});
  }
  expect_size(fine_c, hf, "gate_logits", "c_f");
  const DiffArray input =
      ndgrad::concat(ndgrad::concat(coarse_feature, fine_h), fine_c);
  return ndgrad::add(ndgrad::matmul(input, gate.W), gate.b);
}

Prediction classify(const ClassifierWeights& classifier,
                    const DiffArray& fine_h) {
  const auto& ws = classifier.W.shape();
  if (ws.size() != 2 || fine_h.shape().size() != 1 || ws[0] != fine_h.size()) {
    throw DimensionError("classify: W_p shape " + ndgrad::shape_str(ws) +
                             " does not match hidden " +
                             ndgrad::shape_str(fine_h.shape()),
                         {{"op", "classify"},
                          {"W_p", ws},
                          {"hidden", fine_h.shape()}});
  }
  const DiffArray logits =
      ndgrad::add(ndgrad::matmul(fine_h, classifier.W), classifier.b);
  return {logits, ndgrad::softmax(logits)};
}

std::size_t argmax(std::span<const double> p) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.size(); ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

// ---------------------------------------------------------------------------
// Block files.

namespace {

void put_le64(std::ofstream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_blocks(const std::filesystem::path& dir, const nlohmann::json& meta,
                  const std::vector<NamedBlock>& blocks) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  {
    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("cannot write " + (dir / "params.bin").string());
    for (const auto& blk : blocks) {
      const std::size_t nbytes = blk.tensor.size() * 8;
      entries.push_back({{"name", blk.name},
                         {"shape", blk.tensor.shape},
                         {"offset", offset},
                         {"nbytes", nbytes}});
      for (double v : blk.tensor.data) put_le64(bin, v);
      offset += nbytes;
    }
  }
  nlohmann::json header = {{"format", kBlockFormatName},
                           {"version", kBlockFormatVersion},
                           {"dtype", "float64-le"},
                           {"data_file", "params.bin"},
                           {"total_bytes", offset},
                           {"blocks", entries},
                           {"meta", meta}};
  std::ofstream hdr(dir / "header.json", std::ios::trunc);
  if (!hdr) throw DataError("cannot write " + (dir / "header.json").string());
  hdr << header.dump(2) << '\n';
}

BlockFile read_blocks(const std::filesystem::path& dir) {
  const auto header_path = dir / "header.json";
  std::ifstream hdr(header_path);
  if (!hdr) {
    throw DataError("missing checkpoint header", {{"path", header_path.string()}});
  }
  BlockFile file;
  try {
    file.header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what(),
                    {{"path", header_path.string()}});
  }
  const auto& h = file.header;
  if (h.value("format", "") != kBlockFormatName ||
      h.value("version", -1) != kBlockFormatVersion) {
    throw DataError("unsupported checkpoint format/version",
                    {{"path", header_path.string()},
                     {"format", h.value("format", "")},
                     {"version", h.value("version", -1)},
                     {"expected_version", kBlockFormatVersion}});
  }

  const auto bin_path = dir / h.value("data_file", "params.bin");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("missing parameter data", {{"path", bin_path.string()}});
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());
  const std::size_t total = h.value("total_bytes", std::size_t{0});
  if (bytes.size() != total) {
    throw DataError("parameter data has " + std::to_string(bytes.size()) +
                        " bytes, header declares " + std::to_string(total),
                    {{"path", bin_path.string()},
                     {"expected_bytes", total},
                     {"actual_bytes", bytes.size()}});
  }

  for (const auto& e : h.at("blocks")) {
    const auto shape = e.at("shape").get<ndgrad::Shape>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
    const std::size_t n = ndgrad::numel(shape);
    if (nbytes != n * 8 || offset + nbytes > bytes.size()) {
      throw DataError("block '" + e.at("name").get<std::string>() +
                          "' is inconsistent with its shape or the data file",
                      {{"block", e.at("name")}, {"shape", shape}});
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = get_le64(&bytes[offset + 8 * i]);
    file.blocks.push_back({e.at("name").get<std::string>(),
                           Tensor(shape, std::move(data))});
  }
  return file;
}

}  // namespace adaeval::cells
