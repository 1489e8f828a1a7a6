#include "sparse_lab/dataset.hpp"

#include "sparse_lab/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace sparse_lab {

namespace fs = std::filesystem;

void LabeledDataset::validate() const {
  if (features.rows() < 1) throw std::invalid_argument("dataset '" + name + "' is empty");
  if (static_cast<Index>(labels.size()) != features.rows())
    throw std::invalid_argument("dataset '" + name + "' has mismatched feature/label counts");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset '" + name + "' has a label out of range");
  if (!features.allFinite()) throw std::invalid_argument("dataset '" + name + "' has non-finite features");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.features.resize(static_cast<Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = features.row(static_cast<Index>(indices[i]));
    out.labels.push_back(labels.at(indices[i]));
  }
  out.num_classes = num_classes;
  out.name = name;
  out.role = role;
  out.has_label_noise = has_label_noise;
  return out;
}

std::vector<int> NoiseRecord::restore(const LabeledDataset& noisy) const {
  std::vector<int> clean = noisy.labels;
  for (std::size_t i = 0; i < flipped_indices.size(); ++i) clean.at(flipped_indices[i]) = original_labels[i];
  return clean;
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const fs::path& path) {
  if (bytes.size() < offset + 4) throw IdxError(IdxError::Kind::truncated, "truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

void check_magic(std::uint32_t got, std::uint32_t want, const fs::path& path) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08X (expected 0x%08X) in ", got, want);
    throw IdxError(IdxError::Kind::bad_magic, buf + path.string());
  }
}

}  // namespace

IdxImages read_idx(const fs::path& images_path, const fs::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  check_magic(read_be32(img, 0, images_path), kIdxImagesMagic, images_path);
  check_magic(read_be32(lab, 0, labels_path), kIdxLabelsMagic, labels_path);

  IdxImages out;
  out.count = read_be32(img, 4, images_path);
  out.rows = read_be32(img, 8, images_path);
  out.cols = read_be32(img, 12, images_path);
  const std::uint32_t label_count = read_be32(lab, 4, labels_path);
  if (label_count != out.count)
    throw IdxError(IdxError::Kind::count_mismatch, "images file has " + std::to_string(out.count) +
                                                       " samples but labels file has " + std::to_string(label_count));
  const std::size_t pixel_bytes = std::size_t{out.count} * out.rows * out.cols;
  if (img.size() < 16 + pixel_bytes) throw IdxError(IdxError::Kind::truncated, "truncated pixel data in " + images_path.string());
  if (lab.size() < 8 + std::size_t{label_count})
    throw IdxError(IdxError::Kind::truncated, "truncated label data in " + labels_path.string());
  out.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(pixel_bytes));
  out.labels.assign(lab.begin() + 8, lab.begin() + 8 + label_count);
  return out;
}

void write_idx(const fs::path& images_path, const fs::path& labels_path, const IdxImages& data) {
  if (data.pixels.size() != std::size_t{data.count} * data.rows * data.cols || data.labels.size() != data.count)
    throw std::invalid_argument("IDX payload sizes do not match the header");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IdxError(IdxError::Kind::io, "cannot write IDX files at " + images_path.string());
  put_be32(img, kIdxImagesMagic);
  put_be32(img, data.count);
  put_be32(img, data.rows);
  put_be32(img, data.cols);
  img.write(reinterpret_cast<const char*>(data.pixels.data()), static_cast<std::streamsize>(data.pixels.size()));
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, data.count);
  lab.write(reinterpret_cast<const char*>(data.labels.data()), static_cast<std::streamsize>(data.labels.size()));
  if (!img || !lab) throw IdxError(IdxError::Kind::io, "failed writing IDX files at " + images_path.string());
}

LabeledDataset load_idx(const fs::path& images_path, const fs::path& labels_path, std::optional<std::size_t> limit) {
  const IdxImages raw = read_idx(images_path, labels_path);
  const std::size_t n = limit ? std::min<std::size_t>(*limit, raw.count) : raw.count;
  const std::size_t dim = std::size_t{raw.rows} * raw.cols;

  LabeledDataset ds;
  ds.name = images_path.filename().string();
  ds.num_classes = 10;
  ds.features.resize(static_cast<Index>(n), static_cast<Index>(dim));
  double* out = ds.features.data();
  for (std::size_t i = 0; i < n * dim; ++i) out[i] = standardize_pixel(raw.pixels[i]);
  ds.labels.assign(raw.labels.begin(), raw.labels.begin() + static_cast<std::ptrdiff_t>(n));
  for (int& y : ds.labels) ds.num_classes = std::max(ds.num_classes, y + 1);
  ds.validate();
  return ds;
}

IdxImages export_idx(const LabeledDataset& ds) {
  ds.validate();
  for (int y : ds.labels)
    if (y > 255) throw std::invalid_argument("IDX labels are single bytes");
  const double lo = ds.features.minCoeff();
  const double hi = ds.features.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  IdxImages out;
  out.count = static_cast<std::uint32_t>(ds.size());
  out.rows = 1;
  out.cols = static_cast<std::uint32_t>(ds.dim());
  out.pixels.resize(static_cast<std::size_t>(ds.features.size()));
  for (Index i = 0; i < ds.features.size(); ++i)
    out.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround((ds.features.data()[i] - lo) * scale));
  out.labels.assign(ds.labels.begin(), ds.labels.end());
  return out;
}

LabeledDataset synth_blobs(std::size_t n_per_class, int num_classes, Index dim, double separation,
                           std::uint64_t seed) {
  if (n_per_class < 1 || num_classes < 1 || dim < 1) throw std::invalid_argument("synth_blobs counts must be >= 1");
  MatrixD centers = MatrixD::Zero(num_classes, dim);
  if (num_classes <= dim) {
    // Scaled basis vectors: |a e_i - a e_j| = a * sqrt(2).
    const double a = separation / std::sqrt(2.0);
    for (int c = 0; c < num_classes; ++c) centers(c, c) = a;
  } else {
    for (int c = 0; c < num_classes; ++c) centers(c, 0) = separation * c;
  }

  Rng rng(seed);
  LabeledDataset ds;
  ds.name = "blobs";
  ds.num_classes = num_classes;
  const Index n = static_cast<Index>(n_per_class) * num_classes;
  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  Index row = 0;
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (int c = 0; c < num_classes; ++c, ++row) {
      for (Index d = 0; d < dim; ++d) ds.features(row, d) = centers(c, d) + standard_normal(rng);
      ds.labels[static_cast<std::size_t>(row)] = c;
    }
  }
  return ds;
}

std::pair<LabeledDataset, NoiseRecord> inject_symmetric_noise(const LabeledDataset& ds, double epsilon,
                                                              std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
  if (ds.role == SplitRole::test) throw std::logic_error("refusing to inject label noise into a test split");
  if (epsilon > 0.0 && ds.num_classes < 2) throw std::invalid_argument("label noise needs at least 2 classes");

  const std::size_t n = ds.labels.size();
  const auto flips = static_cast<std::size_t>(std::llround(epsilon * static_cast<double>(n)));

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `flips` slots are a uniform sample without replacement.
  for (std::size_t i = 0; i < flips; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(flips));
  std::sort(chosen.begin(), chosen.end());

  LabeledDataset noisy = ds;
  noisy.has_label_noise = noisy.has_label_noise || flips > 0;
  NoiseRecord record;
  record.epsilon = epsilon;
  record.noise_seed = seed;
  record.flipped_indices = chosen;
  record.original_labels.reserve(flips);
  for (std::size_t idx : chosen) {
    const int old = ds.labels[idx];
    const int r = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(ds.num_classes - 1)));
    noisy.labels[idx] = r < old ? r : r + 1;
    record.original_labels.push_back(old);
  }
  return {std::move(noisy), std::move(record)};
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must be in (0, 1)");
  const auto n = static_cast<std::size_t>(ds.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw std::invalid_argument("split leaves one side empty");

  auto order = permutation(n, seed);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  LabeledDataset train = ds.subset(train_idx);
  LabeledDataset test = ds.subset(test_idx);
  train.role = SplitRole::train;
  test.role = SplitRole::test;
  train.name = ds.name + ":train";
  test.name = ds.name + ":test";
  return {std::move(train), std::move(test)};
}

}  // namespace sparse_lab
