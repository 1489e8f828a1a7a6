#pragma once

#include "sparse_lab/params.hpp"
#include "sparse_lab/prune.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sparse_lab::selftest {

struct GradCheckResult {
  int networks = 0;
  double max_relative_error = 0.0;
  double seconds = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8) between analytic and
/// central-difference (h = 1e-5) gradients of one net.
double gradient_relative_error(const ParamSet& params, const Mask* mask, const MatrixD& batch,
                               std::span<const int> labels, double h = 1e-5);

/// Random MLPs of at most `max_params` parameters with random masks and batches.
GradCheckResult check_random_gradients(int networks, Index max_params, std::uint64_t seed);

/// Keep-mask from sorting every survivor in scope by (|w|, tensor, index).
Mask brute_force_prune(const ParamSet& params, const Mask& mask, double t_iter, PruneScope scope);

struct PruneOracleResult {
  int cases = 0;
  int mismatches = 0;
};

/// Random tensors of at most `max_weights` weights (with repeated
/// magnitudes) compared against brute_force_prune under `scope`.
PruneOracleResult check_prune_oracle(int cases, Index max_weights, PruneScope scope, std::uint64_t seed);

/// Runs both suites, printing one line per suite; true when all pass.
bool run_all(std::string& report);

}  // namespace sparse_lab::selftest
