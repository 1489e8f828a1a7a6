#include "sparse_lab/selftest.hpp"

#include "sparse_lab/mlp.hpp"
#include "sparse_lab/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <tuple>

namespace sparse_lab::selftest {

namespace {

constexpr double kRelativeFloor = 1e-8;

double data_loss(const ParamSet& params, const Mask* mask, const MatrixD& batch, std::span<const int> labels) {
  return cross_entropy_sum(forward(params, mask, batch), labels) / static_cast<double>(batch.rows());
}

}  // namespace

double gradient_relative_error(const ParamSet& params, const Mask* mask, const MatrixD& batch,
                               std::span<const int> labels, double h) {
  const auto analytic = loss_and_grad(params, mask, batch, labels);
  ParamSet probe = params;
  double worst = 0.0;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    auto& value = probe[t].value;
    for (Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = data_loss(probe, mask, batch, labels);
      value.data()[i] = saved - h;
      const double down = data_loss(probe, mask, batch, labels);
      value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic.grads[t].value.data()[i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), kRelativeFloor});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

GradCheckResult check_random_gradients(int networks, Index max_params, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(seed);
  GradCheckResult result;
  while (result.networks < networks) {
    MlpArchitecture arch;
    const auto depth = 2 + uniform_index(rng, 3);  // 1 to 3 layers
    for (std::uint64_t l = 0; l < depth; ++l) arch.layer_sizes.push_back(static_cast<Index>(1 + uniform_index(rng, 6)));
    arch.layer_sizes.back() = std::max<Index>(arch.layer_sizes.back(), 2);
    ParamSet params = init_params(arch, rng());
    if (params.parameter_count() > max_params) continue;
    for (auto& p : params.entries())
      for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = uniform(rng, -1.0, 1.0);

    Mask mask = Mask::full(params);
    const bool masked = uniform_index(rng, 2) == 1;
    if (masked)
      for (auto& e : mask.entries)
        for (Index i = 0; i < e.keep.size(); ++i) e.keep.data()[i] = uniform01(rng) < 0.3 ? 0.0 : 1.0;

    const Index rows = static_cast<Index>(1 + uniform_index(rng, 4));
    MatrixD batch(rows, arch.input_dim());
    for (Index i = 0; i < batch.size(); ++i) batch.data()[i] = standard_normal(rng);
    std::vector<int> labels(static_cast<std::size_t>(rows));
    for (int& y : labels) y = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(arch.num_classes())));

    result.max_relative_error = std::max(
        result.max_relative_error, gradient_relative_error(params, masked ? &mask : nullptr, batch, labels));
    ++result.networks;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Mask brute_force_prune(const ParamSet& params, const Mask& mask, double t_iter, PruneScope scope) {
  using Key = std::tuple<double, std::size_t, Index>;
  std::vector<const MatrixD*> weights;
  for (const auto& p : params.entries())
    if (p.prunable) weights.push_back(&p.value);

  Mask out = mask;
  const auto prune_group = [&](std::vector<Key> keys) {
    std::sort(keys.begin(), keys.end());
    const auto count = static_cast<std::size_t>(std::floor(t_iter * static_cast<double>(keys.size())));
    for (std::size_t i = 0; i < count; ++i) {
      const auto& [mag, t, flat] = keys[i];
      out.entries[t].keep.data()[flat] = 0.0;
    }
  };
  std::vector<Key> all;
  for (std::size_t t = 0; t < weights.size(); ++t) {
    std::vector<Key> keys;
    for (Index i = 0; i < weights[t]->size(); ++i)
      if (mask.entries[t].keep.data()[i] != 0.0) keys.emplace_back(std::abs(weights[t]->data()[i]), t, i);
    if (scope == PruneScope::layerwise) {
      prune_group(keys);
    } else {
      all.insert(all.end(), keys.begin(), keys.end());
    }
  }
  if (scope == PruneScope::global) prune_group(all);
  return out;
}

PruneOracleResult check_prune_oracle(int cases, Index max_weights, PruneScope scope, std::uint64_t seed) {
  Rng rng(seed);
  PruneOracleResult result;
  for (int c = 0; c < cases; ++c) {
    // One to three small tensors sharing a budget of max_weights weights.
    ParamSet params;
    const auto tensors = 1 + uniform_index(rng, 3);
    Index budget = max_weights;
    for (std::uint64_t t = 0; t < tensors && budget > 0; ++t) {
      const Index rows = static_cast<Index>(1 + uniform_index(rng, 4));
      const Index cols = std::max<Index>(1, std::min<Index>(static_cast<Index>(1 + uniform_index(rng, 5)), budget / rows));
      if (rows * cols > budget) break;
      budget -= rows * cols;
      MatrixD w(rows, cols);
      for (Index i = 0; i < w.size(); ++i) {
        // Coarse grid with random signs so equal magnitudes are common.
        const double mag = static_cast<double>(uniform_index(rng, 6)) / 4.0;
        w.data()[i] = uniform_index(rng, 2) ? mag : -mag;
      }
      params.add("t" + std::to_string(t) + ".weight", std::move(w), true, 2);
    }
    Mask mask = Mask::full(params);
    for (auto& e : mask.entries)
      for (Index i = 0; i < e.keep.size(); ++i)
        if (uniform01(rng) < 0.25) e.keep.data()[i] = 0.0;
    if (mask.surviving() == 0) mask.entries.front().keep.data()[0] = 1.0;

    const double t_iter = 0.05 + 0.9 * uniform01(rng);
    ++result.cases;
    if (!(prune(params, mask, t_iter, scope) == brute_force_prune(params, mask, t_iter, scope))) ++result.mismatches;
  }
  return result;
}

bool run_all(std::string& report) {
  std::ostringstream out;
  const auto grads = check_random_gradients(20, 100, 20240601);
  const bool grads_ok = grads.max_relative_error < 1e-6;
  out << (grads_ok ? "PASS" : "FAIL") << " gradient check: " << grads.networks
      << " nets, max relative error " << grads.max_relative_error << " (< 1e-6), " << grads.seconds << " s\n";
  bool ok = grads_ok;
  for (PruneScope scope : {PruneScope::layerwise, PruneScope::global}) {
    const auto oracle = check_prune_oracle(1000, 20, scope, 7 + static_cast<std::uint64_t>(scope));
    const bool pass = oracle.mismatches == 0;
    ok = ok && pass;
    out << (pass ? "PASS" : "FAIL") << " prune oracle (" << to_string(scope) << "): " << oracle.cases << " cases, "
        << oracle.mismatches << " mismatches\n";
  }
  report = out.str();
  return ok;
}

}  // namespace sparse_lab::selftest
