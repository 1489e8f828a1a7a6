#include "sparse_lab/training.hpp"

#include "sparse_lab/rng.hpp"

#include <algorithm>
#include <cstdlib>

namespace sparse_lab {

namespace {

constexpr Index kEvalChunk = 1000;

int threads_from_env() {
  const char* env = std::getenv("SPARSE_LAB_THREADS");
  int n = env != nullptr ? std::atoi(env) : 1;
  if (n < 1) n = 1;
  Eigen::setNbThreads(n);
  return n;
}

const int g_threads = threads_from_env();

}  // namespace

int intra_op_threads() { return g_threads; }

EvalResult evaluate(const ParamSet& params, const Mask* mask, const LabeledDataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("cannot evaluate on an empty dataset");
  const std::span<const int> labels(dataset.labels);
  double loss_sum = 0.0;
  Index correct = 0;
  for (Index start = 0; start < dataset.size(); start += kEvalChunk) {
    const Index rows = std::min(kEvalChunk, dataset.size() - start);
    const MatrixD logits = forward(params, mask, MatrixD(dataset.features.middleRows(start, rows)));
    const auto chunk_labels = labels.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(rows));
    loss_sum += cross_entropy_sum(logits, chunk_labels);
    for (Index r = 0; r < rows; ++r)
      if (argmax_lowest(logits.row(r)) == chunk_labels[static_cast<std::size_t>(r)]) ++correct;
  }
  const auto n = static_cast<double>(dataset.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

std::uint64_t epoch_shuffle_seed(std::uint64_t seed, int epoch) {
  return derive_seed(seed, static_cast<std::uint64_t>(epoch));
}

std::vector<EpochMetrics> train(ParamSet& params, const Mask* mask, OptimizerState& state,
                                const LabeledDataset& train_set, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<EpochMetrics> history;
  if (cfg.epochs == 0) return history;
  if (train_set.size() == 0) throw std::invalid_argument("cannot train on an empty dataset");
  if (state.velocity.size() == 0) state = OptimizerState::for_params(params);

  const auto n = static_cast<std::size_t>(train_set.size());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  MatrixD features;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = permutation(n, epoch_shuffle_seed(cfg.seed, epoch));
    double loss_sum = 0.0;
    Index correct = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t rows = std::min(batch, n - start);
      features.resize(static_cast<Index>(rows), train_set.dim());
      labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t src = order[start + r];
        features.row(static_cast<Index>(r)) = train_set.features.row(static_cast<Index>(src));
        labels[r] = train_set.labels[src];
      }
      auto step = loss_and_grad(params, mask, features, std::span<const int>(labels));
      loss_sum += step.loss * static_cast<double>(rows);
      correct += step.correct;
      sgd_step(params, step.grads, state, mask, cfg, epoch);
    }
    history.push_back({loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  return history;
}

}  // namespace sparse_lab
