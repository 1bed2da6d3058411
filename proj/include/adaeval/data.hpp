// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_DATA_HPP_
#define ADAEVAL_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace adaeval::data {

// T x D row-major float32 feature sequence, one row per frame.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c) {}

  std::span<const float> row(std::size_t t) const {
    return std::span<const float>(values).subspan(t * cols, cols);
  }
  std::span<float> row(std::size_t t) {
    return std::span<float>(values).subspan(t * cols, cols);
  }
  bool operator==(const FeatureMatrix&) const = default;
};

struct VideoSample {
  std::string id;
  int label = 0;
  FeatureMatrix coarse;
  FeatureMatrix fine;

  std::size_t steps() const { return coarse.rows; }
};

// ---------------------------------------------------------------------------
// LEFX feature files. Layout, all little-endian:
//   bytes 0..3   magic "LEFX"
//   u32          version (= 1)
//   u32          T
//   u32          D
//   T*D float32  row-major values

inline constexpr char kLefxMagic[4] = {'L', 'E', 'F', 'X'};
inline constexpr std::uint32_t kLefxVersion = 1;
inline constexpr std::size_t kLefxHeaderBytes = 16;

void write_lefx(const std::filesystem::path& path, const FeatureMatrix& m);
// Validates magic, version, byte count and finiteness.
FeatureMatrix read_lefx(const std::filesystem::path& path);
// Header only: (T, D).
std::pair<std::uint32_t, std::uint32_t> peek_lefx(
    const std::filesystem::path& path);

std::uint32_t file_crc32(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic generator.

struct SyntheticSpec {
  int num_classes = 10;
  int steps = 16;  // T
  int coarse_dim = 16;
  int fine_dim = 64;
  int k_informative = 3;
  double fine_snr = 6.0;
  double coarse_snr = 1.5;
  double distractor_scale = 1.0;
  // Offset added along a fixed coarse direction at informative frames; lets a
  // cheap glance tell that a frame is worth a closer look without revealing
  // the class.
  double coarse_salience = 0.0;
  // The salience offset lands this many steps before each informative frame,
  // which then lies in [lead, T).
  int salience_lead = 0;
  double coarse_noise = 1.0;
  int num_distractors = 10;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// ---------------------------------------------------------------------------
// Dataset manifest (manifest.json at the dataset root).

struct ManifestEntry {
  std::string id;
  int label = 0;
  std::string coarse_path;  // relative to the dataset root, or absolute
  std::string fine_path;
  std::uint32_t coarse_crc = 0;
  std::uint32_t fine_crc = 0;
};

struct DatasetManifest {
  int version = 1;
  int num_classes = 0;
  std::size_t steps = 0;  // T
  std::size_t coarse_dim = 0;
  std::size_t fine_dim = 0;
  std::vector<std::string> class_names;
  std::map<std::string, std::vector<ManifestEntry>> splits;
  std::optional<SyntheticSpec> generator_spec;

  nlohmann::json to_json() const;  // includes the "checksum" field
  static DatasetManifest from_json(const nlohmann::json& j);
  // CRC-32 of the canonical manifest body (everything except "checksum").
  std::string checksum() const;
  void validate_structure() const;
};

inline constexpr int kManifestVersion = 1;

struct GeneratedDataset {
  DatasetManifest manifest;
  std::map<std::string, std::vector<VideoSample>> samples;
};

// Builds the dataset in memory; deterministic in (spec, sizes).
GeneratedDataset generate_synthetic(const SyntheticSpec& spec,
                                    const SplitSizes& sizes);

// Writes manifest.json plus coarse/<id>.lefx and fine/<id>.lefx under root,
// filling in checksums.
void write_dataset(DatasetManifest& manifest,
                   const std::map<std::string, std::vector<VideoSample>>& samples,
                   const std::filesystem::path& root);

// Lazily-loading view of a dataset on disk.
class Dataset {
 public:
  // Reads and validates manifest.json (schema, version, checksum).
  static Dataset open(const std::filesystem::path& root);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  std::size_t split_size(const std::string& split) const;
  bool has_split(const std::string& split) const;

  // Loads one video, verifying file checksums, dims and finiteness.
  VideoSample load(const std::string& split, std::size_t index) const;
  std::vector<VideoSample> load_split(const std::string& split) const;

 private:
  std::filesystem::path resolve(const std::string& p) const;
  const std::vector<ManifestEntry>& entries(const std::string& split) const;

  std::filesystem::path root_;
  DatasetManifest manifest_;
};

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& root);

// Builds a manifest over existing per-video LEFX files named <id>.lefx in the
// two directories. labels_file is CSV with header "id,label" (an optional
// third "split" column assigns splits; otherwise every video goes to "all").
// Paths are stored absolute; no files are copied.
DatasetManifest import_external(const std::filesystem::path& coarse_dir,
                                const std::filesystem::path& fine_dir,
                                const std::filesystem::path& labels_file,
                                std::optional<int> num_classes = std::nullopt);

}  // namespace adaeval::data

#endif  // ADAEVAL_DATA_HPP_
