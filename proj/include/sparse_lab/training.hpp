#pragma once

#include "sparse_lab/dataset.hpp"
#include "sparse_lab/mlp.hpp"
#include "sparse_lab/optimizer.hpp"

#include <vector>

namespace sparse_lab {

/// Intra-op thread cap from SPARSE_LAB_THREADS (default 1), applied to
/// Eigen's GEMM. Set once when the library loads.
int intra_op_threads();

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EpochMetrics {
  double train_loss = 0.0;  // mean over the epoch's mini-batches, pre-step
  double train_acc = 0.0;
};

/// Mean cross-entropy and argmax accuracy (ties to the lowest class), in
/// dataset order.
EvalResult evaluate(const ParamSet& params, const Mask* mask, const LabeledDataset& dataset);

/// Seed for the shuffle of `epoch` under run seed `seed`.
std::uint64_t epoch_shuffle_seed(std::uint64_t seed, int epoch);

/// cfg.epochs epochs of mini-batch momentum SGD with a fresh seeded shuffle
/// per epoch. The last batch of an epoch may be short.
std::vector<EpochMetrics> train(ParamSet& params, const Mask* mask, OptimizerState& state,
                                const LabeledDataset& train_set, const TrainConfig& cfg);

}  // namespace sparse_lab
