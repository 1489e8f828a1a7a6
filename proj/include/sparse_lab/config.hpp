#pragma once

#include "sparse_lab/dataset.hpp"
#include "sparse_lab/mlp.hpp"
#include "sparse_lab/optimizer.hpp"
#include "sparse_lab/prune.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace sparse_lab {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Where the data for a run comes from.
struct DatasetSpec {
  std::string kind = "blobs";  // "mnist" or "blobs"

  // mnist: IDX files. data_dir supplies the conventional file names for
  // any path left empty; without test files the train pool is split.
  std::string data_dir;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t limit = 0;  // 0 keeps every sample

  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;

  std::size_t blob_per_class = 100;
  int blob_classes = 2;
  Index blob_dim = 2;
  double blob_separation = 4.0;
  std::uint64_t blob_seed = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct SketchConfig {
  std::string run_id = "run";
  DatasetSpec dataset;
  MlpArchitecture arch{{784, 300, 100, 10}};
  TrainConfig train;
  double t_iter = 0.2;
  double t_end = 0.999;
  PruneScope scope = PruneScope::layerwise;
  double epsilon = 0.0;
  std::uint64_t noise_seed = 0;
  bool record_timing = false;  // wall_seconds in metrics.csv breaks byte-reproducibility

  /// Throws ConfigError naming the offending key.
  void validate() const;

  /// Canonical "key = value" text, one key per line, CLI flag names as keys.
  std::string to_text() const;
  static SketchConfig from_text(const std::string& text);
  static SketchConfig from_map(const std::map<std::string, std::string>& values);

  std::uint64_t hash() const;
};

/// Parses "key = value" lines; '#' starts a comment. Surrounding quotes are stripped.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);

struct PreparedData {
  LabeledDataset train;  // label noise applied
  LabeledDataset test;   // clean
  NoiseRecord noise;
};

/// Loads or synthesizes the dataset, splits it, and injects noise into the
/// train side only.
PreparedData prepare_data(const SketchConfig& cfg);

}  // namespace sparse_lab
