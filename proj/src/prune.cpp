#include "sparse_lab/prune.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sparse_lab {

std::string to_string(PruneScope scope) { return scope == PruneScope::global ? "global" : "layerwise"; }

PruneScope parse_prune_scope(const std::string& text) {
  if (text == "layerwise") return PruneScope::layerwise;
  if (text == "global") return PruneScope::global;
  throw std::invalid_argument("unknown prune scope '" + text + "' (expected layerwise or global)");
}

namespace {

struct Candidate {
  double magnitude;
  std::size_t tensor;
  Index flat;
};

bool smaller(const Candidate& a, const Candidate& b) {
  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
  if (a.tensor != b.tensor) return a.tensor < b.tensor;
  return a.flat < b.flat;
}

void collect(const MatrixD& weight, const MatrixD& keep, std::size_t tensor, std::vector<Candidate>& out) {
  for (Index i = 0; i < weight.size(); ++i)
    if (keep.data()[i] != 0.0) out.push_back({std::abs(weight.data()[i]), tensor, i});
}

std::size_t prune_count(double t_iter, std::size_t surviving) {
  return static_cast<std::size_t>(std::floor(t_iter * static_cast<double>(surviving)));
}

void drop_smallest(std::vector<Candidate>& pool, std::size_t count, Mask& mask) {
  if (count == 0) return;
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count - 1), pool.end(), smaller);
  for (std::size_t i = 0; i < count; ++i) mask.entries[pool[i].tensor].keep.data()[pool[i].flat] = 0.0;
}

}  // namespace

Mask prune(const ParamSet& params, const Mask& mask, double t_iter, PruneScope scope) {
  if (!(t_iter > 0.0 && t_iter < 1.0)) throw std::invalid_argument("t_iter must be in (0, 1)");
  check_congruent(params, mask);
  if (mask.surviving() == 0) throw MaskExhausted();

  Mask next = mask;
  std::vector<const MatrixD*> weights;
  for (const auto& p : params.entries())
    if (p.prunable) weights.push_back(&p.value);

  std::vector<Candidate> pool;
  if (scope == PruneScope::global) {
    for (std::size_t t = 0; t < weights.size(); ++t) collect(*weights[t], mask.entries[t].keep, t, pool);
    drop_smallest(pool, prune_count(t_iter, pool.size()), next);
  } else {
    for (std::size_t t = 0; t < weights.size(); ++t) {
      pool.clear();
      collect(*weights[t], mask.entries[t].keep, t, pool);
      drop_smallest(pool, prune_count(t_iter, pool.size()), next);
    }
  }
  return next;
}

double sparsity(const Mask& mask) {
  const Index total = mask.total();
  if (total == 0) return 0.0;
  return static_cast<double>(total - mask.surviving()) / static_cast<double>(total);
}

std::string fingerprint(const ParamSet& params) {
  std::string out;
  for (const auto& e : params.entries()) {
    if (!out.empty()) out += ';';
    out += e.name + '[';
    const auto shape = e.shape();
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) out += 'x';
      out += std::to_string(shape[i]);
    }
    out += ']';
    if (e.prunable) out += 'p';
  }
  return out;
}

void rewind(ParamSet& params, const InitSnapshot& snapshot, const Mask& mask, OptimizerState& state) {
  if (fingerprint(params) != snapshot.fingerprint())
    throw std::invalid_argument("snapshot fingerprint mismatch: " + snapshot.fingerprint() + " vs " +
                                fingerprint(params));
  check_congruent(params, mask);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& init = snapshot.params()[i].value;
    if (p.prunable) {
      p.value = (mask.find(p.name)->array() != 0.0).select(init, 0.0);
    } else {
      p.value = init;
    }
  }
  if (state.velocity.size() == 0) state = OptimizerState::for_params(params);
  state.reset();
}

}  // namespace sparse_lab
