// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include "adaeval/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

#include "adaeval/errors.hpp"
#include "adaeval/rng.hpp"

namespace adaeval::data {
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string(), {{"path", path.string()}});
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::uint32_t parse_hex32(const std::string& s, const std::string& what) {
  if (s.size() != 8 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw DataError("malformed checksum for " + what, {{"value", s}});
  return static_cast<std::uint32_t>(std::stoul(s, nullptr, 16));
}

void check_lefx_header(const std::vector<unsigned char>& bytes, const fs::path& path) {
  if (bytes.size() < kLefxHeaderBytes) {
    throw DataError("truncated feature file: expected at least " +
                        std::to_string(kLefxHeaderBytes) + " header bytes, got " +
                        std::to_string(bytes.size()),
                    {{"path", path.string()},
                     {"expected_bytes", kLefxHeaderBytes},
                     {"actual_bytes", bytes.size()}});
  }
  if (!std::equal(kLefxMagic, kLefxMagic + 4, bytes.begin())) {
    throw DataError("bad magic in feature file", {{"path", path.string()}});
  }
  const std::uint32_t version = get_u32(&bytes[4]);
  if (version != kLefxVersion) {
    throw DataError("unsupported feature file version " + std::to_string(version),
                    {{"path", path.string()},
                     {"version", version},
                     {"expected_version", kLefxVersion}});
  }
}

FeatureMatrix parse_lefx(const std::vector<unsigned char>& bytes, const fs::path& path) {
  check_lefx_header(bytes, path);
  const std::uint32_t T = get_u32(&bytes[8]);
  const std::uint32_t D = get_u32(&bytes[12]);
  const std::size_t expected =
      kLefxHeaderBytes + static_cast<std::size_t>(T) * static_cast<std::size_t>(D) * 4;
  if (bytes.size() != expected) {
    throw DataError("feature file size mismatch: expected " + std::to_string(expected) +
                        " bytes, got " + std::to_string(bytes.size()),
                    {{"path", path.string()},
                     {"T", T},
                     {"D", D},
                     {"expected_bytes", expected},
                     {"actual_bytes", bytes.size()}});
  }
  FeatureMatrix m(T, D);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const float v = std::bit_cast<float>(get_u32(&bytes[kLefxHeaderBytes + 4 * i]));
    if (!std::isfinite(v)) {
      throw DataError("non-finite feature value",
                      {{"path", path.string()}, {"row", i / D}, {"col", i % D}});
    }
    m.values[i] = v;
  }
  return m;
}

void write_file(const fs::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string(), {{"path", path.string()}});
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string(), {{"path", path.string()}});
}

std::vector<unsigned char> encode_lefx(const FeatureMatrix& m) {
  std::vector<unsigned char> out(kLefxMagic, kLefxMagic + 4);
  out.reserve(kLefxHeaderBytes + 4 * m.values.size());
  put_u32(out, kLefxVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows));
  put_u32(out, static_cast<std::uint32_t>(m.cols));
  for (float v : m.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// LEFX

void write_lefx(const fs::path& path, const FeatureMatrix& m) {
  if (m.values.size() != m.rows * m.cols)
    throw ContractError("feature matrix size does not match its shape");
  for (float v : m.values)
    if (!std::isfinite(v))
      throw DataError("refusing to write non-finite features", {{"path", path.string()}});
  write_file(path, encode_lefx(m));
}

FeatureMatrix read_lefx(const fs::path& path) { return parse_lefx(read_bytes(path), path); }

std::pair<std::uint32_t, std::uint32_t> peek_lefx(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string(), {{"path", path.string()}});
  std::vector<unsigned char> head(kLefxHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), kLefxHeaderBytes);
  head.resize(static_cast<std::size_t>(in.gcount()));
  check_lefx_header(head, path);
  return {get_u32(&head[8]), get_u32(&head[12])};
}

std::uint32_t file_crc32(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return crc32_of(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// SyntheticSpec

void SyntheticSpec::validate() const {
  auto fail = [](const char* field, const std::string& why, nlohmann::json v) {
    throw ConfigError(std::string(field) + ": " + why, {{"field", field}, {"value", v}});
  };
  if (num_classes < 2) fail("num_classes", "must be >= 2", num_classes);
  if (steps < 1) fail("T", "must be >= 1", steps);
  if (coarse_dim < 1) fail("Dc_feat", "must be >= 1", coarse_dim);
  if (fine_dim < 1) fail("Df_feat", "must be >= 1", fine_dim);
  if (k_informative < 1 || k_informative > steps)
    fail("k_informative", "must lie in [1, T]", k_informative);
  if (!(fine_snr >= 0.0) || !std::isfinite(fine_snr))
    fail("fine_snr", "must be finite and >= 0", fine_snr);
  if (!(coarse_snr >= 0.0) || !std::isfinite(coarse_snr))
    fail("coarse_snr", "must be finite and >= 0", coarse_snr);
  if (!(coarse_snr < fine_snr) && !(coarse_snr == 0.0 && fine_snr == 0.0))
    fail("coarse_snr", "must be below fine_snr", coarse_snr);
  if (!(distractor_scale >= 0.0) || !std::isfinite(distractor_scale))
    fail("distractor_scale", "must be finite and >= 0", distractor_scale);
  if (!std::isfinite(coarse_salience))
    fail("coarse_salience", "must be finite", coarse_salience);
  if (salience_lead < 0 || salience_lead + k_informative > steps)
    fail("salience_lead", "must lie in [0, T - k_informative]", salience_lead);
  if (!(coarse_noise >= 0.0) || !std::isfinite(coarse_noise))
    fail("coarse_noise", "must be finite and >= 0", coarse_noise);
  if (num_distractors < 1) fail("num_distractors", "must be >= 1", num_distractors);
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_classes", num_classes},
          {"T", steps},
          {"Dc_feat", coarse_dim},
          {"Df_feat", fine_dim},
          {"k_informative", k_informative},
          {"fine_snr", fine_snr},
          {"coarse_snr", coarse_snr},
          {"distractor_scale", distractor_scale},
          {"coarse_salience", coarse_salience},
          {"salience_lead", salience_lead},
          {"coarse_noise", coarse_noise},
          {"num_distractors", num_distractors},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  static const std::set<std::string> known = {
      "num_classes", "T",          "Dc_feat",          "Df_feat",
      "k_informative", "fine_snr", "coarse_snr",       "distractor_scale",
      "coarse_salience", "salience_lead", "coarse_noise", "num_distractors",
      "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw ConfigError("unknown synthetic spec field '" + key + "'", {{"field", key}});
  }
  SyntheticSpec s;
  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(dst);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string(key) + ": wrong type", {{"field", key}, {"value", j.at(key)}});
    }
  };
  get("num_classes", s.num_classes);
  get("T", s.steps);
  get("Dc_feat", s.coarse_dim);
  get("Df_feat", s.fine_dim);
  get("k_informative", s.k_informative);
  get("fine_snr", s.fine_snr);
  get("coarse_snr", s.coarse_snr);
  get("distractor_scale", s.distractor_scale);
  get("coarse_salience", s.coarse_salience);
  get("salience_lead", s.salience_lead);
  get("coarse_noise", s.coarse_noise);
  get("num_distractors", s.num_distractors);
  get("seed", s.seed);
  return s;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

nlohmann::json manifest_body(const DatasetManifest& m) {
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [name, entries] : m.splits) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
      arr.push_back({{"id", e.id},
                     {"label", e.label},
                     {"coarse", e.coarse_path},
                     {"fine", e.fine_path},
                     {"coarse_crc32", hex32(e.coarse_crc)},
                     {"fine_crc32", hex32(e.fine_crc)}});
    }
    splits[name] = std::move(arr);
  }
  nlohmann::json j = {{"version", m.version},
                      {"num_classes", m.num_classes},
                      {"T", m.steps},
                      {"Dc_feat", m.coarse_dim},
                      {"Df_feat", m.fine_dim},
                      {"class_names", m.class_names},
                      {"splits", splits}};
  if (m.generator_spec) j["generator_spec"] = m.generator_spec->to_json();
  return j;
}

}  // namespace

std::string DatasetManifest::checksum() const {
  const std::string text = manifest_body(*this).dump();
  return hex32(crc32_of(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

nlohmann::json DatasetManifest::to_json() const {
  auto j = manifest_body(*this);
  j["checksum"] = checksum();
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw DataError("unsupported manifest version " + std::to_string(m.version),
                      {{"version", m.version}, {"expected_version", kManifestVersion}});
    }
    m.num_classes = j.at("num_classes").get<int>();
    m.steps = j.at("T").get<std::size_t>();
    m.coarse_dim = j.at("Dc_feat").get<std::size_t>();
    m.fine_dim = j.at("Df_feat").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& [name, arr] : j.at("splits").items()) {
      auto& entries = m.splits[name];
      for (const auto& e : arr) {
        ManifestEntry me;
        me.id = e.at("id").get<std::string>();
        me.label = e.at("label").get<int>();
        me.coarse_path = e.at("coarse").get<std::string>();
        me.fine_path = e.at("fine").get<std::string>();
        me.coarse_crc = parse_hex32(e.at("coarse_crc32").get<std::string>(), me.id);
        me.fine_crc = parse_hex32(e.at("fine_crc32").get<std::string>(), me.id);
        entries.push_back(std::move(me));
      }
    }
    if (j.contains("generator_spec"))
      m.generator_spec = SyntheticSpec::from_json(j.at("generator_spec"));
    const auto stored = j.at("checksum").get<std::string>();
    if (stored != m.checksum()) {
      throw DataError("manifest checksum mismatch",
                      {{"stored", stored}, {"computed", m.checksum()}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed generator spec in manifest: ") + e.what(),
                    e.details());
  }
  m.validate_structure();
  return m;
}

void DatasetManifest::validate_structure() const {
  if (num_classes < 2) throw DataError("manifest num_classes must be >= 2");
  if (steps == 0 || coarse_dim == 0 || fine_dim == 0)
    throw DataError("manifest dims must be positive",
                    {{"T", steps}, {"Dc_feat", coarse_dim}, {"Df_feat", fine_dim}});
  if (class_names.size() != static_cast<std::size_t>(num_classes))
    throw DataError("class_names has " + std::to_string(class_names.size()) +
                    " entries, expected " + std::to_string(num_classes));
  std::map<std::string, std::string> seen;
  for (const auto& [split, entries] : splits) {
    for (const auto& e : entries) {
      if (e.label < 0 || e.label >= num_classes)
        throw DataError("label out of range for video '" + e.id + "'",
                        {{"video", e.id}, {"label", e.label}, {"num_classes", num_classes}});
      auto [it, inserted] = seen.emplace(e.id, split);
      if (!inserted)
        throw DataError("video id '" + e.id + "' appears twice",
                        {{"video", e.id}, {"splits", {it->second, split}}});
    }
  }
}

void save_manifest(const DatasetManifest& manifest, const fs::path& root) {
  manifest.validate_structure();
  fs::create_directories(root);
  const std::string text = manifest.to_json().dump(2) + "\n";
  write_file(root / "manifest.json", std::vector<unsigned char>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Generator

namespace {

using Vec = std::vector<double>;

Vec unit_gaussian(SplitMix64& rng, std::size_t n) {
  Vec v(n);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

double dot(const Vec& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct World {
  std::vector<Vec> prototypes;   // C x Df, unit norm
  std::vector<Vec> distractors;  // num_distractors x Df, unit norm
  std::vector<Vec> projection;   // Dc rows of Df
  Vec salience;                  // Dc, unit norm
  double alpha = 0.0;            // coarse rescale
};

World make_world(const SyntheticSpec& s) {
  SplitMix64 rng(derive_seed(s.seed, 0xDA7A5E7ULL));
  const auto C = static_cast<std::size_t>(s.num_classes);
  const auto Df = static_cast<std::size_t>(s.fine_dim);
  const auto Dc = static_cast<std::size_t>(s.coarse_dim);
  World w;
  for (std::size_t c = 0; c < C; ++c) w.prototypes.push_back(unit_gaussian(rng, Df));
  for (int d = 0; d < s.num_distractors; ++d) w.distractors.push_back(unit_gaussian(rng, Df));
  const double scale = 1.0 / std::sqrt(static_cast<double>(Df));
  for (std::size_t r = 0; r < Dc; ++r) {
    Vec row(Df);
    for (auto& x : row) x = rng.normal() * scale;
    w.projection.push_back(std::move(row));
  }
  w.salience = unit_gaussian(rng, Dc);

  // alpha * fine_snr * rms_c |P proto_c| = coarse_snr
  double energy = 0.0;
  for (const auto& p : w.prototypes)
    for (const auto& row : w.projection) {
      const double v = dot(row, p);
      energy += v * v;
    }
  const double rms = std::sqrt(energy / static_cast<double>(C));
  w.alpha = (s.fine_snr > 0.0 && rms > 0.0) ? s.coarse_snr / (s.fine_snr * rms) : 0.0;
  return w;
}

constexpr int kMaxPlacementAttempts = 10000;

VideoSample make_video(const SyntheticSpec& s, const World& w, std::string id,
                       int label, std::uint64_t video_seed) {
  const auto T = static_cast<std::size_t>(s.steps);
  const auto Df = static_cast<std::size_t>(s.fine_dim);
  const auto Dc = static_cast<std::size_t>(s.coarse_dim);
  const auto k = static_cast<std::size_t>(s.k_informative);
  const auto lead = static_cast<std::size_t>(s.salience_lead);
  const Vec& proto = w.prototypes[static_cast<std::size_t>(label)];
  SplitMix64 rng(video_seed);

  std::vector<double> fine(T * Df);
  std::vector<char> informative(T);
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxPlacementAttempts) {
      throw DataError("could not place the class signal in video '" + id + "'",
                      {{"video", id}, {"attempts", attempt}});
    }
    std::vector<std::size_t> pos(T - lead);
    for (std::size_t t = 0; t < pos.size(); ++t) pos[t] = lead + t;
    for (std::size_t i = 0; i < k; ++i) std::swap(pos[i], pos[i + rng.below(pos.size() - i)]);
    std::fill(informative.begin(), informative.end(), 0);
    for (std::size_t i = 0; i < k; ++i) informative[pos[i]] = 1;

    for (std::size_t t = 0; t < T; ++t) {
      double* row = &fine[t * Df];
      if (informative[t]) {
        for (std::size_t j = 0; j < Df; ++j) row[j] = s.fine_snr * proto[j] + rng.normal();
      } else {
        const Vec& d = w.distractors[rng.below(w.distractors.size())];
        for (std::size_t j = 0; j < Df; ++j)
          row[j] = s.distractor_scale * d[j] + rng.normal();
      }
    }
    if (s.fine_snr == 0.0 || k == T) break;

    std::vector<double> ip(T);
    double distractor_mean = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      ip[t] = dot(proto, std::span<const double>(&fine[t * Df], Df));
      if (!informative[t]) distractor_mean += std::abs(ip[t]);
    }
    const double threshold = 3.0 * distractor_mean / static_cast<double>(T - k);
    bool ok = true;
    for (std::size_t t = 0; t < T && ok; ++t)
      ok = (ip[t] > threshold) == static_cast<bool>(informative[t]);
    if (ok) break;
  }

  VideoSample v;
  v.id = std::move(id);
  v.label = label;
  v.fine = FeatureMatrix(T, Df);
  v.coarse = FeatureMatrix(T, Dc);
  for (std::size_t i = 0; i < fine.size(); ++i) v.fine.values[i] = static_cast<float>(fine[i]);
  for (std::size_t t = 0; t < T; ++t) {
    const std::span<const double> frow(&fine[t * Df], Df);
    for (std::size_t r = 0; r < Dc; ++r) {
      double x = w.alpha * dot(w.projection[r], frow) + s.coarse_noise * rng.normal();
      if (t + lead < T && informative[t + lead]) x += s.coarse_salience * w.salience[r];
      v.coarse.values[t * Dc + r] = static_cast<float>(x);
    }
  }
  return v;
}

}  // namespace

GeneratedDataset generate_synthetic(const SyntheticSpec& spec, const SplitSizes& sizes) {
  spec.validate();
  if (sizes.train == 0) throw ConfigError("train split must not be empty", {{"field", "train"}});
  const World world = make_world(spec);

  GeneratedDataset out;
  DatasetManifest& m = out.manifest;
  m.version = kManifestVersion;
  m.num_classes = spec.num_classes;
  m.steps = static_cast<std::size_t>(spec.steps);
  m.coarse_dim = static_cast<std::size_t>(spec.coarse_dim);
  m.fine_dim = static_cast<std::size_t>(spec.fine_dim);
  for (int c = 0; c < spec.num_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
  m.generator_spec = spec;

  const std::vector<std::pair<std::string, std::size_t>> plan = {
      {"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  std::size_t global = 0;
  for (std::size_t si = 0; si < plan.size(); ++si) {
    const auto& [name, n] = plan[si];
    if (n == 0) continue;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % world.prototypes.size());
    SplitMix64 shuffle(derive_seed(spec.seed, 0x5B117 + si));
    for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[shuffle.below(i)]);

    auto& videos = out.samples[name];
    videos.resize(n);
    std::exception_ptr error;
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t i = 0; i < count; ++i) {
      try {
        const auto idx = static_cast<std::size_t>(i);
        videos[idx] = make_video(spec, world, name + "_" + std::to_string(idx), labels[idx],
                                 spec.seed ^ static_cast<std::uint64_t>(global + idx + 1));
      } catch (...) {
#pragma omp critical(adaeval_generate_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    global += n;

    auto& entries = m.splits[name];
    for (const auto& v : videos)
      entries.push_back({v.id, v.label, "coarse/" + v.id + ".lefx", "fine/" + v.id + ".lefx", 0, 0});
  }
  return out;
}

void write_dataset(DatasetManifest& manifest,
                   const std::map<std::string, std::vector<VideoSample>>& samples,
                   const fs::path& root) {
  for (auto& [split, entries] : manifest.splits) {
    auto it = samples.find(split);
    if (it == samples.end() || it->second.size() != entries.size())
      throw ContractError("samples do not match manifest split '" + split + "'");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      auto& e = entries[i];
      const auto& v = it->second[i];
      if (v.id != e.id) throw ContractError("sample order does not match manifest");
      const auto cbytes = encode_lefx(v.coarse);
      const auto fbytes = encode_lefx(v.fine);
      write_file(root / e.coarse_path, cbytes);
      write_file(root / e.fine_path, fbytes);
      e.coarse_crc = crc32_of(cbytes.data(), cbytes.size());
      e.fine_crc = crc32_of(fbytes.data(), fbytes.size());
    }
  }
  save_manifest(manifest, root);
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::open(const fs::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("missing dataset manifest", {{"path", path.string()}});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what(),
                    {{"path", path.string()}});
  }
  Dataset ds;
  ds.root_ = root;
  try {
    ds.manifest_ = DatasetManifest::from_json(j);
  } catch (const DataError& e) {
    auto details = e.details().is_object() ? e.details() : nlohmann::json::object();
    details["path"] = path.string();
    throw DataError(e.what(), details);
  }
  return ds;
}

bool Dataset::has_split(const std::string& split) const {
  return manifest_.splits.count(split) > 0;
}

std::size_t Dataset::split_size(const std::string& split) const {
  return entries(split).size();
}

const std::vector<ManifestEntry>& Dataset::entries(const std::string& split) const {
  auto it = manifest_.splits.find(split);
  if (it == manifest_.splits.end()) {
    nlohmann::json names = nlohmann::json::array();
    for (const auto& [n, _] : manifest_.splits) names.push_back(n);
    throw DataError("dataset has no split '" + split + "'",
                    {{"split", split}, {"available", names}});
  }
  return it->second;
}

fs::path Dataset::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : root_ / path;
}

VideoSample Dataset::load(const std::string& split, std::size_t index) const {
  const auto& list = entries(split);
  if (index >= list.size())
    throw RangeError("video index out of range", {{"split", split}, {"index", index}});
  const auto& e = list[index];
  auto load_one = [&](const std::string& rel, std::uint32_t crc, std::size_t dim) {
    const auto path = resolve(rel);
    const auto bytes = read_bytes(path);
    const std::uint32_t got = crc32_of(bytes.data(), bytes.size());
    if (got != crc) {
      throw DataError("checksum mismatch for video '" + e.id + "'",
                      {{"video", e.id}, {"path", path.string()},
                       {"expected", hex32(crc)}, {"actual", hex32(got)}});
    }
    auto m = parse_lefx(bytes, path);
    if (m.rows != manifest_.steps || m.cols != dim) {
      throw DataError("video '" + e.id + "' has shape " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols) + ", manifest declares " +
                          std::to_string(manifest_.steps) + "x" + std::to_string(dim),
                      {{"video", e.id}, {"path", path.string()}});
    }
    return m;
  };
  VideoSample v;
  v.id = e.id;
  v.label = e.label;
  v.coarse = load_one(e.coarse_path, e.coarse_crc, manifest_.coarse_dim);
  v.fine = load_one(e.fine_path, e.fine_crc, manifest_.fine_dim);
  return v;
}

std::vector<VideoSample> Dataset::load_split(const std::string& split) const {
  const std::size_t n = split_size(split);
  std::vector<VideoSample> out(n);
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = load(split, static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(adaeval_load_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---------------------------------------------------------------------------
// Import

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

DatasetManifest import_external(const fs::path& coarse_dir, const fs::path& fine_dir,
                                const fs::path& labels_file, std::optional<int> num_classes) {
  std::ifstream in(labels_file);
  if (!in) throw DataError("cannot open labels file", {{"path", labels_file.string()}});
  std::string line;
  if (!std::getline(in, line)) throw DataError("labels file is empty", {{"path", labels_file.string()}});
  const auto header = split_csv_line(line);
  const bool has_split = header.size() == 3 && header[2] == "split";
  if (header.size() < 2 || header[0] != "id" || header[1] != "label" ||
      (header.size() == 3 && !has_split) || header.size() > 3) {
    throw DataError("labels file header must be 'id,label' or 'id,label,split'",
                    {{"path", labels_file.string()}, {"header", line}});
  }

  struct Row {
    std::string id, split;
    int label;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size() || cells[0].empty()) {
      throw DataError("malformed labels row", {{"path", labels_file.string()}, {"line", line_no}});
    }
    int label = -1;
    try {
      std::size_t used = 0;
      label = std::stoi(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError("label is not an integer", {{"path", labels_file.string()},
                                                  {"line", line_no}, {"video", cells[0]}});
    }
    rows.push_back({cells[0], has_split ? cells[2] : "all", label, line_no});
  }
  if (rows.empty()) throw DataError("labels file lists no videos", {{"path", labels_file.string()}});

  DatasetManifest m;
  m.version = kManifestVersion;
  int max_label = 0;
  for (const auto& r : rows) max_label = std::max(max_label, r.label);
  m.num_classes = num_classes.value_or(max_label + 1);

  struct Dims {
    std::uint32_t t_c, d_c, t_f, d_f;
  };
  std::vector<Dims> dims;
  nlohmann::json missing = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto c = fs::absolute(coarse_dir / (r.id + ".lefx"));
    const auto f = fs::absolute(fine_dir / (r.id + ".lefx"));
    if (!fs::exists(c) || !fs::exists(f)) {
      missing.push_back(r.id);
      dims.push_back({});
      continue;
    }
    const auto [tc, dc] = peek_lefx(c);
    const auto [tf, df] = peek_lefx(f);
    dims.push_back({tc, dc, tf, df});
  }
  if (!missing.empty()) {
    throw DataError("labels file names videos with no feature files: " + missing[0].get<std::string>(),
                    {{"unknown_ids", missing}});
  }

  const Dims ref = dims.front();
  nlohmann::json offenders = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& d = dims[i];
    if (d.t_c != d.t_f || d.t_c != ref.t_c || d.d_c != ref.d_c || d.d_f != ref.d_f) {
      offenders.push_back({{"id", rows[i].id},
                           {"coarse", {d.t_c, d.d_c}},
                           {"fine", {d.t_f, d.d_f}}});
    }
  }
  if (!offenders.empty()) {
    throw DataError("feature dims are inconsistent across videos",
                    {{"reference", {{"T", ref.t_c}, {"Dc_feat", ref.d_c}, {"Df_feat", ref.d_f}}},
                     {"offenders", offenders}});
  }
  m.steps = ref.t_c;
  m.coarse_dim = ref.d_c;
  m.fine_dim = ref.d_f;
  for (int c = 0; c < m.num_classes; ++c) m.class_names.push_back("class_" + std::to_string(c));

  for (const auto& r : rows) {
    if (r.label < 0 || r.label >= m.num_classes) {
      throw DataError("label out of range for video '" + r.id + "'",
                      {{"video", r.id}, {"label", r.label}, {"line", r.line_no}});
    }
    ManifestEntry e;
    e.id = r.id;
    e.label = r.label;
    e.coarse_path = fs::absolute(coarse_dir / (r.id + ".lefx")).lexically_normal().string();
    e.fine_path = fs::absolute(fine_dir / (r.id + ".lefx")).lexically_normal().string();
    e.coarse_crc = file_crc32(e.coarse_path);
    e.fine_crc = file_crc32(e.fine_path);
    m.splits[r.split].push_back(std::move(e));
  }
  m.validate_structure();
  return m;
}

}  // namespace adaeval::data
