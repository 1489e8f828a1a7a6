#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sparse_lab {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One named trainable tensor. Weights are rank 2 ([out, in]); biases are
/// rank 1 and stored as a single row.
template <typename Scalar>
struct ParamEntry {
  std::string name;
  Matrix<Scalar> value;
  bool prunable = false;
  int rank = 2;

  std::vector<Index> shape() const {
    if (rank == 1) return {value.cols()};
    return {value.rows(), value.cols()};
  }
};

/// Ordered, name-unique collection of trainable tensors. Iteration order is
/// insertion order.
template <typename Scalar>
class BasicParamSet {
 public:
  using Entry = ParamEntry<Scalar>;

  void add(std::string name, Matrix<Scalar> value, bool prunable, int rank) {
    if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
    if (rank == 1 && value.rows() != 1) throw std::invalid_argument("rank-1 parameter must be one row: " + name);
    entries_.push_back(Entry{std::move(name), std::move(value), prunable, rank});
  }

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }
  Entry* find(const std::string& name) {
    return const_cast<Entry*>(std::as_const(*this).find(name));
  }
  const Entry& at(const std::string& name) const {
    const Entry* e = find(name);
    if (e == nullptr) throw std::out_of_range("no parameter named " + name);
    return *e;
  }
  Entry& at(const std::string& name) { return const_cast<Entry&>(std::as_const(*this).at(name)); }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& operator[](std::size_t i) { return entries_[i]; }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }
  Index prunable_count() const {
    Index n = 0;
    for (const auto& e : entries_)
      if (e.prunable) n += e.value.size();
    return n;
  }

  /// Same names, flags and shapes in the same order.
  bool same_layout(const BasicParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.prunable != b.prunable || a.rank != b.rank ||
          a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
        return false;
    }
    return true;
  }

  /// A zero-filled set with this layout (gradients, velocities).
  BasicParamSet zeros_like() const {
    BasicParamSet out;
    out.entries_ = entries_;
    for (auto& e : out.entries_) e.value.setZero();
    return out;
  }

  friend bool operator==(const BasicParamSet& a, const BasicParamSet& b) {
    if (!a.same_layout(b)) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (a.entries_[i].value != b.entries_[i].value) return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

/// Binary keep-mask over the prunable tensors of a parameter set, in the
/// parameter set's order. Values are exactly 0 or 1.
template <typename Scalar>
struct BasicMask {
  struct Entry {
    std::string name;
    Matrix<Scalar> keep;
  };
  std::vector<Entry> entries;

  static BasicMask full(const BasicParamSet<Scalar>& params) {
    BasicMask m;
    for (const auto& p : params.entries())
      if (p.prunable) m.entries.push_back({p.name, Matrix<Scalar>::Ones(p.value.rows(), p.value.cols())});
    return m;
  }

  const Matrix<Scalar>* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e.keep;
    return nullptr;
  }

  Index total() const {
    Index n = 0;
    for (const auto& e : entries) n += e.keep.size();
    return n;
  }

  Index surviving() const {
    Index n = 0;
    for (const auto& e : entries) n += static_cast<Index>((e.keep.array() != Scalar(0)).count());
    return n;
  }

  friend bool operator==(const BasicMask& a, const BasicMask& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      if (a.entries[i].name != b.entries[i].name) return false;
      const auto& x = a.entries[i].keep;
      const auto& y = b.entries[i].keep;
      if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
    }
    return true;
  }
};

/// Throws unless `mask` covers exactly the prunable tensors of `params`.
template <typename Scalar>
void check_congruent(const BasicParamSet<Scalar>& params, const BasicMask<Scalar>& mask) {
  std::size_t k = 0;
  for (const auto& p : params.entries()) {
    if (!p.prunable) continue;
    if (k >= mask.entries.size() || mask.entries[k].name != p.name)
      throw std::invalid_argument("mask does not cover prunable parameter " + p.name);
    const auto& keep = mask.entries[k].keep;
    if (keep.rows() != p.value.rows() || keep.cols() != p.value.cols())
      throw std::invalid_argument("mask shape mismatch for " + p.name);
    ++k;
  }
  if (k != mask.entries.size()) throw std::invalid_argument("mask has entries for unknown parameters");
}

/// params with every prunable tensor multiplied element-wise by its mask.
template <typename Scalar>
BasicParamSet<Scalar> apply_mask(BasicParamSet<Scalar> params, const BasicMask<Scalar>& mask) {
  check_congruent(params, mask);
  for (auto& p : params.entries())
    if (p.prunable) p.value = p.value.cwiseProduct(*mask.find(p.name));
  return params;
}

using ParamSet = BasicParamSet<double>;
using Mask = BasicMask<double>;
using MatrixD = Matrix<double>;

}  // namespace sparse_lab
