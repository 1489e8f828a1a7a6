#include "sparse_lab/phases.hpp"

#include <algorithm>
#include <stdexcept>

namespace sparse_lab {

namespace {

std::size_t argmax(std::span<const double> v, std::size_t begin, std::size_t end) {
  std::size_t best = begin;
  for (std::size_t i = begin + 1; i < end; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

PhaseIndices detect_phase_indices(std::span<const double> acc, double delta) {
  if (acc.size() < 4) throw std::invalid_argument("phase detection needs at least 4 rounds");
  const std::size_t n = acc.size();
  PhaseIndices out;
  double best = 0.0;
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const std::size_t i = argmax(acc, 0, j);
    const std::size_t k = argmax(acc, j + 1, n);
    const double depth = acc[i] - acc[j];
    const double rise = acc[k] - acc[j];
    const double prominence = std::min(depth, rise);
    if (depth >= delta && rise >= delta && (!out.detected || prominence > best)) {
      out.detected = true;
      out.peak = i;
      out.dip = j;
      out.recovery = k;
      out.dip_depth = depth;
      best = prominence;
    }
  }

  const std::size_t reference = out.detected ? *out.recovery : argmax(acc, 0, n);
  for (std::size_t c = reference + 1; c < n; ++c) {
    bool stays_down = true;
    for (std::size_t r = c; r < n && stays_down; ++r) stays_down = acc[r] <= acc[reference] - delta;
    if (stays_down) {
      out.collapse = c;
      break;
    }
  }
  return out;
}

}  // namespace sparse_lab
