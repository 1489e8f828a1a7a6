#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's forward/backward/prune code paths.

#include "sparse_lab/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

namespace oracle {

using sparse_lab::Index;
using sparse_lab::MatrixD;
using sparse_lab::ParamSet;

/// Triple-loop evaluation of a dense ReLU stack on one input row.
inline std::vector<double> naive_forward(const ParamSet& params, const std::vector<double>& x,
                                         const sparse_lab::Mask* mask = nullptr) {
  std::vector<double> h = x;
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    const MatrixD& w = params[2 * l].value;
    const MatrixD& b = params[2 * l + 1].value;
    const MatrixD* keep = mask ? mask->find(params[2 * l].name) : nullptr;
    std::vector<double> z(static_cast<std::size_t>(w.rows()));
    for (Index o = 0; o < w.rows(); ++o) {
      double acc = b(0, o);
      for (Index i = 0; i < w.cols(); ++i) acc += w(o, i) * (keep ? (*keep)(o, i) : 1.0) * h[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = (l + 1 < layers) ? std::max(acc, 0.0) : acc;
    }
    h = std::move(z);
  }
  return h;
}

/// Mean cross-entropy evaluated in long double, with `offset` added to
/// parameter (tensor, flat) on the fly.
inline long double naive_loss_extended(const ParamSet& params, const MatrixD& batch, std::span<const int> labels,
                                       const sparse_lab::Mask* mask, std::size_t tensor, Index flat,
                                       long double offset) {
  using LD = long double;
  const auto value = [&](std::size_t t, Index i) {
    LD v = params[t].value.data()[i];
    return t == tensor && i == flat ? v + offset : v;
  };
  const std::size_t layers = params.size() / 2;
  LD total = 0;
  for (Index r = 0; r < batch.rows(); ++r) {
    std::vector<LD> h(batch.row(r).data(), batch.row(r).data() + batch.cols());
    for (std::size_t l = 0; l < layers; ++l) {
      const MatrixD& w = params[2 * l].value;
      const MatrixD* keep = mask ? mask->find(params[2 * l].name) : nullptr;
      std::vector<LD> z(static_cast<std::size_t>(w.rows()));
      for (Index o = 0; o < w.rows(); ++o) {
        LD acc = value(2 * l + 1, o);
        for (Index i = 0; i < w.cols(); ++i) {
          const Index at = o * w.cols() + i;  // row-major flat index
          acc += value(2 * l, at) * (keep ? LD(keep->data()[at]) : LD(1)) * h[static_cast<std::size_t>(i)];
        }
        z[static_cast<std::size_t>(o)] = (l + 1 < layers) ? std::max(acc, LD(0)) : acc;
      }
      h = std::move(z);
    }
    const LD m = *std::max_element(h.begin(), h.end());
    LD sum = 0;
    for (LD v : h) sum += std::exp(v - m);
    total += m + std::log(sum) - h[static_cast<std::size_t>(labels[static_cast<std::size_t>(r)])];
  }
  return total / static_cast<LD>(batch.rows());
}

/// Central differences (step h) of the naive loss on every parameter. The
/// loss is evaluated in extended precision so that cancellation in the
/// difference does not swamp small gradient entries.
inline ParamSet finite_difference_grad(const ParamSet& params, const MatrixD& batch, std::span<const int> labels,
                                       const sparse_lab::Mask* mask = nullptr, double h = 1e-5) {
  ParamSet grads = params.zeros_like();
  for (std::size_t t = 0; t < params.size(); ++t)
    for (Index i = 0; i < params[t].value.size(); ++i) {
      const long double up = naive_loss_extended(params, batch, labels, mask, t, i, h);
      const long double down = naive_loss_extended(params, batch, labels, mask, t, i, -static_cast<long double>(h));
      grads[t].value.data()[i] = static_cast<double>((up - down) / (2.0L * h));
    }
  return grads;
}

inline double max_relative_error(const ParamSet& a, const ParamSet& b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (Index i = 0; i < a[t].value.size(); ++i) {
      const double x = a[t].value.data()[i];
      const double y = b[t].value.data()[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  return worst;
}

/// Kept positions after one prune round: sort all survivors in the scope unit
/// by (|w|, tensor, flat index) and drop the first floor(t * count).
/// Returns (tensor, flat) pairs of weights that survive.
inline std::vector<std::pair<std::size_t, Index>> brute_force_kept(const std::vector<MatrixD>& weights,
                                                                    const std::vector<MatrixD>& keep, double t_iter,
                                                                    bool global) {
  using Key = std::tuple<double, std::size_t, Index>;
  std::vector<std::vector<Key>> units;
  if (global) units.emplace_back();
  for (std::size_t t = 0; t < weights.size(); ++t) {
    if (!global) units.emplace_back();
    for (Index i = 0; i < weights[t].size(); ++i)
      if (keep[t].data()[i] == 1.0) units.back().emplace_back(std::abs(weights[t].data()[i]), t, i);
  }
  std::vector<std::pair<std::size_t, Index>> kept;
  for (auto& unit : units) {
    std::sort(unit.begin(), unit.end());
    const auto drop = static_cast<std::size_t>(std::floor(t_iter * static_cast<double>(unit.size())));
    for (std::size_t k = drop; k < unit.size(); ++k) kept.emplace_back(std::get<1>(unit[k]), std::get<2>(unit[k]));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Sparsity after each round when each unit (layer) independently loses
/// floor(t * survivors), until the overall sparsity reaches t_end.
inline std::vector<double> floor_recurrence(std::vector<std::int64_t> survivors, double t_iter, double t_end) {
  std::int64_t total = 0;
  for (auto s : survivors) total += s;
  std::vector<double> out;
  double s = 0.0;
  while (s < t_end) {
    std::int64_t alive = 0;
    for (auto& v : survivors) {
      v -= static_cast<std::int64_t>(std::floor(t_iter * static_cast<double>(v)));
      alive += v;
    }
    const double next = 1.0 - static_cast<double>(alive) / static_cast<double>(total);
    if (next <= s) break;  // stalled
    s = next;
    out.push_back(s);
  }
  return out;
}

/// Exhaustive search over all i < j < k: j qualifies when some i < j is at
/// least delta above it and some k > j is at least delta above it. Returns
/// the qualifying j with the largest min(best drop, best rise), lowest on
/// ties, or -1.
inline long exhaustive_dip(const std::vector<double>& acc, double delta) {
  long best_j = -1;
  double best = 0.0;
  const std::size_t n = acc.size();
  for (std::size_t j = 0; j < n; ++j) {
    double drop = -1e300, rise = -1e300;
    for (std::size_t i = 0; i < j; ++i) drop = std::max(drop, acc[i] - acc[j]);
    for (std::size_t k = j + 1; k < n; ++k) rise = std::max(rise, acc[k] - acc[j]);
    if (drop >= delta && rise >= delta && (best_j < 0 || std::min(drop, rise) > best)) {
      best_j = static_cast<long>(j);
      best = std::min(drop, rise);
    }
  }
  return best_j;
}

}  // namespace oracle
