#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace sparse_lab {

/// Round indices of the double-descent landmarks on an accuracy curve.
struct PhaseIndices {
  bool detected = false;
  std::optional<std::size_t> peak;      // best accuracy before the dip
  std::optional<std::size_t> dip;
  std::optional<std::size_t> recovery;  // best accuracy after the dip
  std::optional<std::size_t> collapse;
  double dip_depth = 0.0;  // accuracy(peak) - accuracy(dip)
};

/// Operational criterion for a dip followed by a rise on an accuracy curve
/// given in percentage points:
///   dip j qualifies if  max_{i<j} acc(i) - acc(j) >= delta
///                  and  max_{k>j} acc(k) - acc(j) >= delta.
/// detected is true iff some j qualifies. Among qualifying j the most
/// prominent wins: the largest min(drop from the earlier best, rise to the
/// later best), lowest index on ties, so a small wiggle inside a terminal
/// collapse does not outrank a dip followed by a full recovery. The collapse
/// is the first round after the recovery (or after the global best when there
/// is no dip) from which every remaining round stays at least delta below
/// that reference.
/// Throws std::invalid_argument for fewer than 4 points.
PhaseIndices detect_phase_indices(std::span<const double> accuracy_pct, double delta);

}  // namespace sparse_lab
