#pragma once

#include "sparse_lab/params.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sparse_lab {

enum class SplitRole { whole, train, test };

/// Features [N, D], labels in [0, C). Immutable once built.
struct LabeledDataset {
  MatrixD features;
  std::vector<int> labels;
  int num_classes = 0;
  std::string name;
  SplitRole role = SplitRole::whole;
  bool has_label_noise = false;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  /// Throws unless N >= 1, labels match rows and lie in range, and features are finite.
  void validate() const;

  /// Rows selected by `indices`, in that order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Audit trail of a symmetric label-noise injection.
struct NoiseRecord {
  double epsilon = 0.0;
  std::vector<std::size_t> flipped_indices;  // sorted, unique
  std::vector<int> original_labels;          // aligned with flipped_indices
  std::uint64_t noise_seed = 0;

  /// Labels of `noisy` with every flip undone.
  std::vector<int> restore(const LabeledDataset& noisy) const;
};

// --- IDX ---------------------------------------------------------------

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, count_mismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr double kMnistMean = 0.1307;
inline constexpr double kMnistStd = 0.3081;

/// Grey levels as stored: [N, rows * cols] bytes plus labels.
struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
};

IdxImages read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const IdxImages& data);

/// Pixel byte -> (p / 255 - 0.1307) / 0.3081.
inline double standardize_pixel(std::uint8_t p) { return (static_cast<double>(p) / 255.0 - kMnistMean) / kMnistStd; }

/// Loads an IDX image/label pair as a standardized 10-class dataset,
/// truncated to the first `limit` samples if given.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::optional<std::size_t> limit = std::nullopt);

/// Quantizes features min..max onto 0..255 as a 1 x D image per sample.
IdxImages export_idx(const LabeledDataset& ds);

// --- synthetic -----------------------------------------------------------

/// Unit-variance Gaussian clusters whose centers sit pairwise `separation`
/// apart (along scaled basis vectors when num_classes <= dim, otherwise on a line).
LabeledDataset synth_blobs(std::size_t n_per_class, int num_classes, Index dim, double separation,
                           std::uint64_t seed);

// --- noise and splits ------------------------------------------------------

/// Flips exactly round(epsilon * N) distinct labels, each to a uniformly
/// chosen different class. The input is left untouched.
std::pair<LabeledDataset, NoiseRecord> inject_symmetric_noise(const LabeledDataset& ds, double epsilon,
                                                              std::uint64_t seed);

/// Seeded disjoint train/test partition with round(fraction * N) train rows.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction, std::uint64_t seed);

}  // namespace sparse_lab
