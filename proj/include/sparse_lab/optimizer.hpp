#pragma once

#include "sparse_lab/params.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparse_lab {

struct TrainConfig {
  int epochs = 200;
  double lr = 0.1;
  double momentum = 0.0;
  double lambda = 0.0;  // l2 coefficient, weights only
  int batch_size = 128;
  std::vector<int> lr_milestones;
  double lr_gamma = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(lr_gamma > 0.0)) throw std::invalid_argument("lr_gamma must be > 0");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
      if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
        throw std::invalid_argument("lr milestones must be strictly increasing");
      if (lr_milestones[i] < 0 || lr_milestones[i] >= epochs)
        throw std::invalid_argument("lr milestone " + std::to_string(lr_milestones[i]) + " outside [0, epochs)");
    }
  }

  /// lr * gamma^(number of milestones <= epoch)
  double lr_at(int epoch) const {
    double rate = lr;
    for (int m : lr_milestones)
      if (m <= epoch) rate *= lr_gamma;
    return rate;
  }
};

template <typename Scalar>
struct BasicOptimizerState {
  BasicParamSet<Scalar> velocity;
  std::int64_t step_count = 0;

  static BasicOptimizerState for_params(const BasicParamSet<Scalar>& params) {
    return {params.zeros_like(), 0};
  }
  void reset() {
    for (auto& v : velocity.entries()) v.value.setZero();
    step_count = 0;
  }
};

/// One momentum-SGD step with coupled weight decay:
///   g' = grad + lambda * w   (prunable tensors only)
///   v  = momentum * v + g'
///   w  = w - lr(epoch) * v
/// Masked positions of w and v are exactly zero afterwards.
template <typename Scalar>
void sgd_step(BasicParamSet<Scalar>& params, const BasicParamSet<Scalar>& grads, BasicOptimizerState<Scalar>& state,
              const BasicMask<Scalar>* mask, const TrainConfig& cfg, int epoch) {
  if (!params.same_layout(grads)) throw std::invalid_argument("gradients are not congruent to parameters");
  if (state.velocity.size() == 0) state = BasicOptimizerState<Scalar>::for_params(params);
  if (!params.same_layout(state.velocity)) throw std::invalid_argument("optimizer state is not congruent to parameters");
  if (mask != nullptr) check_congruent(params, *mask);

  const Scalar rate = static_cast<Scalar>(cfg.lr_at(epoch));
  const Scalar mu = static_cast<Scalar>(cfg.momentum);
  const Scalar decay = static_cast<Scalar>(cfg.lambda);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value;
    auto& v = state.velocity[i].value;
    const auto& g = grads[i].value;
    if (params[i].prunable && decay != Scalar(0)) {
      v = mu * v + g + decay * w;
    } else {
      v = mu * v + g;
    }
    w -= rate * v;
    if (params[i].prunable && mask != nullptr) {
      const auto& keep = *mask->find(params[i].name);
      w = (keep.array() != Scalar(0)).select(w, Scalar(0));
      v = (keep.array() != Scalar(0)).select(v, Scalar(0));
    }
  }
  ++state.step_count;
}

using OptimizerState = BasicOptimizerState<double>;

}  // namespace sparse_lab
