#pragma once

#include "sparse_lab/dataset.hpp"
#include "sparse_lab/params.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sparse_lab {

/// Output perturbation carried by the weights a mask removes (w_exc).
///
/// y_exc is measured operationally as forward(params) - forward(params * mask):
/// the exact output contribution that disappears along with w_exc. A literal
/// per-weight sum of forward-propagated contributions is not well defined once
/// weights interact through the nonlinearities, so it is not attempted.
struct ProbeResult {
  int round = 0;               // round whose trained params were probed
  double y_exc_l1 = 0.0;       // mean over rows of sum_c |y_full - y_masked|
  std::vector<double> per_layer_amplification;  // one ratio per hidden layer
  double weight_l1_masked_out = 0.0;            // sum |w_i| over w_exc
  double condition1_score = 0.0;  // mean over rows of sum over w_exc of |w_i x_i|
  double condition2_score = 0.0;  // largest per-layer amplification (<= 1: no amplification)

  friend bool operator==(const ProbeResult&, const ProbeResult&) = default;
};

/// Mean L1 output response to a unit-L1 uniform perturbation of each hidden
/// activation (a 1/n shift on every unit), propagated through the rest of the
/// network. Networks without hidden layers yield an empty list.
std::vector<double> amplification_check(const ParamSet& params, const MatrixD& batch);

/// y_exc per row and class: forward(params) - forward(params * mask).
MatrixD excess_logits(const ParamSet& params, const Mask& mask, const MatrixD& batch);

ProbeResult excess_output(const ParamSet& params, const Mask& mask, const MatrixD& batch);

/// `count` rows of `test` drawn without replacement under `seed`, in draw order.
MatrixD sample_probe_batch(const LabeledDataset& test, std::size_t count, std::uint64_t seed);

/// One result per pruned round r >= 1: round r-1's trained params probed
/// against round r's mask, i.e. exactly the weights about to be removed.
std::vector<ProbeResult> probe_along_run(const std::filesystem::path& run_dir, const MatrixD& probe_batch);

}  // namespace sparse_lab
