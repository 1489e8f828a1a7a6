#include "sparse_lab/probe.hpp"

#include "sparse_lab/mlp.hpp"
#include "sparse_lab/rng.hpp"
#include "sparse_lab/sketch.hpp"
#include "sparse_lab/tensor_io.hpp"

#include <algorithm>

namespace sparse_lab {

namespace {

/// Network from layer `first` onwards applied to activations `h` (the input
/// of layer `first`).
MatrixD forward_tail(const ParamSet& params, std::size_t first, MatrixD h) {
  const std::size_t layers = params.size() / 2;
  for (std::size_t l = first; l < layers; ++l) {
    const auto& w = params[2 * l].value;
    MatrixD z(h.rows(), w.rows());
    z.noalias() = h * w.transpose();
    z.rowwise() += params[2 * l + 1].value.row(0);
    h = l + 1 < layers ? MatrixD(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

}  // namespace

std::vector<double> amplification_check(const ParamSet& params, const MatrixD& batch) {
  if (batch.rows() == 0) throw std::invalid_argument("amplification check needs a non-empty batch");
  const auto trace = forward_trace<double>(params, nullptr, batch);
  std::vector<double> ratios;
  for (std::size_t l = 1; l < trace.inputs.size(); ++l) {
    const MatrixD& h = trace.inputs[l];  // activation of hidden layer l
    const double shift = 1.0 / static_cast<double>(h.cols());
    const MatrixD base = forward_tail(params, l, h);
    const MatrixD moved = forward_tail(params, l, (h.array() + shift).matrix());
    // ||delta||_1 is 1 per row, so the row ratio is just ||d out||_1.
    ratios.push_back((moved - base).cwiseAbs().rowwise().sum().mean());
  }
  return ratios;
}

MatrixD excess_logits(const ParamSet& params, const Mask& mask, const MatrixD& batch) {
  check_congruent(params, mask);
  return forward<double>(params, nullptr, batch) - forward<double>(params, &mask, batch);
}

ProbeResult excess_output(const ParamSet& params, const Mask& mask, const MatrixD& batch) {
  check_congruent(params, mask);
  if (batch.rows() == 0) throw std::invalid_argument("probe batch is empty");
  const auto full = forward_trace<double>(params, nullptr, batch);
  const MatrixD masked = forward<double>(params, &mask, batch);

  ProbeResult out;
  out.y_exc_l1 = (full.logits - masked).cwiseAbs().rowwise().sum().mean();
  for (std::size_t l = 0; l < full.inputs.size(); ++l) {
    const auto& w = params[2 * l].value;
    const MatrixD excess = (mask.find(params[2 * l].name)->array() == 0.0).select(w.cwiseAbs(), 0.0);
    out.weight_l1_masked_out += excess.sum();
    // sum_{o,i} |w_oi| |x_i| over excess weights = |X| . colsum(|W_exc|)
    const Eigen::VectorXd per_input = excess.colwise().sum().transpose();
    out.condition1_score += (full.inputs[l].cwiseAbs() * per_input).mean();
  }
  out.per_layer_amplification = amplification_check(params, batch);
  for (double r : out.per_layer_amplification) out.condition2_score = std::max(out.condition2_score, r);
  return out;
}

MatrixD sample_probe_batch(const LabeledDataset& test, std::size_t count, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(test.size());
  count = std::min(count, n);
  const auto order = permutation(n, seed);
  MatrixD batch(static_cast<Index>(count), test.dim());
  for (std::size_t i = 0; i < count; ++i) batch.row(static_cast<Index>(i)) = test.features.row(static_cast<Index>(order[i]));
  return batch;
}

std::vector<ProbeResult> probe_along_run(const std::filesystem::path& run_dir, const MatrixD& probe_batch) {
  const int rounds = run_layout::completed_rounds(run_dir);
  if (rounds == 0) throw CheckpointError("no checkpoints in " + run_dir.string());
  std::vector<ProbeResult> series;
  for (int r = 1; r < rounds; ++r) {
    ParamSet trained;
    Mask next;
    try {
      trained = load_tensors(run_layout::params(run_dir, r - 1)).tensors;
      next = load_mask(run_layout::mask(run_dir, r));
    } catch (const std::exception& e) {
      throw CheckpointError("round " + std::to_string(r) + ": " + e.what());
    }
    ProbeResult p = excess_output(trained, next, probe_batch);
    p.round = r - 1;
    series.push_back(std::move(p));
  }
  return series;
}

}  // namespace sparse_lab
