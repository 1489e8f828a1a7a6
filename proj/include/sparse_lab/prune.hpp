#pragma once

#include "sparse_lab/optimizer.hpp"
#include "sparse_lab/params.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sparse_lab {

enum class PruneScope { layerwise, global };

std::string to_string(PruneScope scope);
PruneScope parse_prune_scope(const std::string& text);

class MaskExhausted : public std::runtime_error {
 public:
  MaskExhausted() : std::runtime_error("mask exhausted: every prunable weight is already pruned") {}
};

/// Masks out the floor(t_iter * surviving) smallest-magnitude surviving
/// weights, per tensor (layerwise) or pooled across tensors (global). Ties
/// go to the earlier tensor, then the lower flat index. The result never
/// revives a pruned weight.
Mask prune(const ParamSet& params, const Mask& mask, double t_iter, PruneScope scope);

/// Fraction of prunable weights that are masked out. Biases do not count.
double sparsity(const Mask& mask);

/// Names, flags and shapes, e.g. "fc1.weight[300x784]p;fc1.bias[300];..."
std::string fingerprint(const ParamSet& params);

/// Frozen copy of the parameters before the first training.
class InitSnapshot {
 public:
  InitSnapshot(ParamSet params, std::uint64_t seed)
      : params_(std::move(params)), seed_(seed), fingerprint_(sparse_lab::fingerprint(params_)) {}

  const ParamSet& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  ParamSet params_;
  std::uint64_t seed_;
  std::string fingerprint_;
};

/// Resets survivors (and all biases) to their snapshot values, zeroes
/// masked weights, and clears the optimizer state.
void rewind(ParamSet& params, const InitSnapshot& snapshot, const Mask& mask, OptimizerState& state);

}  // namespace sparse_lab
