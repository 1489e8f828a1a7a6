#pragma once

#include "sparse_lab/config.hpp"
#include "sparse_lab/phases.hpp"
#include "sparse_lab/prune.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sparse_lab {

struct RoundMetrics {
  int round = 0;  // 0 = dense
  double sparsity = 0.0;
  double train_loss = 0.0;  // on the noisy training labels
  double train_acc = 0.0;
  double test_loss = 0.0;  // on the clean test split
  double test_acc = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t train_seed = 0;  // shuffle stream used for this round's training

  friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

struct PhaseReport {
  bool detected = false;
  std::optional<double> dip_sparsity;
  std::optional<double> recovery_sparsity;
  std::optional<double> collapse_sparsity;
  double dip_depth = 0.0;  // accuracy points
  double delta = 1.0;
  PhaseIndices indices;
};

struct SketchRun {
  SketchConfig config;
  std::vector<RoundMetrics> rounds;
  std::optional<PhaseReport> phase_annotation;
};

/// Runs phase detection on test accuracy (in percentage points).
PhaseReport detect_phases(const SketchRun& run, double delta = 1.0);

class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SketchOptions {
  /// Checkpoint directory; with none the run stays in memory.
  std::optional<std::filesystem::path> run_dir;
  /// Stop (as if killed) once this round has been checkpointed.
  std::optional<int> stop_after_round;
  std::function<void(const RoundMetrics&)> on_round;
};

/// Dense training, then prune / rewind / retrain while sparsity < t_end.
/// With a run directory that already holds this config, continues from its
/// last complete round; a different config there is refused.
SketchRun run_sketch(const SketchConfig& cfg, const SketchOptions& options = {});

/// Continues the run stored in `run_dir` from its highest complete round.
SketchRun resume(const std::filesystem::path& run_dir, SketchOptions options = {});

/// Config and completed round metrics of a run directory, without training.
SketchRun load_run(const std::filesystem::path& run_dir);

/// Sparsity after each pruned round when every prune removes exactly
/// t_iter of the survivors: s_k = 1 - (1 - t_iter)^k, until s_k >= t_end.
std::vector<double> ideal_sparsity_schedule(double t_iter, double t_end);

/// "<base>-lam<lambda>-eps<epsilon>-s<seed>"
std::string sweep_run_id(const std::string& base, double lambda, double epsilon, std::uint64_t seed);

struct SweepOptions {
  std::filesystem::path out_root;  // each run writes out_root/<run_id>
  int jobs = 1;
  std::optional<int> stop_after_round;
  std::function<void(const std::string& run_id, const RoundMetrics&)> on_round;
};

/// Every (lambda, epsilon, seed) combination of base_cfg. Noise labels
/// depend on (noise_seed, seed) only, so runs that differ in lambda see
/// identical noisy labels.
std::vector<SketchConfig> sweep_configs(const SketchConfig& base_cfg, const std::vector<double>& lambdas,
                                        const std::vector<double>& epsilons, const std::vector<std::uint64_t>& seeds);

std::vector<SketchRun> sweep(const SketchConfig& base_cfg, const std::vector<double>& lambdas,
                             const std::vector<double>& epsilons, const std::vector<std::uint64_t>& seeds,
                             const SweepOptions& options);

// Run directory layout.
namespace run_layout {
std::filesystem::path config(const std::filesystem::path& run_dir);
std::filesystem::path manifest(const std::filesystem::path& run_dir);
std::filesystem::path snapshot(const std::filesystem::path& run_dir);
std::filesystem::path noise(const std::filesystem::path& run_dir);
std::filesystem::path metrics_csv(const std::filesystem::path& run_dir);
std::filesystem::path round_dir(const std::filesystem::path& run_dir, int round);
std::filesystem::path params(const std::filesystem::path& run_dir, int round);
std::filesystem::path mask(const std::filesystem::path& run_dir, int round);
std::filesystem::path round_metrics(const std::filesystem::path& run_dir, int round);
/// Number of consecutive complete rounds starting at round 0.
int completed_rounds(const std::filesystem::path& run_dir);
}  // namespace run_layout

std::string round_metrics_text(const RoundMetrics& m, std::uint64_t config_hash);
RoundMetrics parse_round_metrics(const std::string& text, std::uint64_t expected_hash);

}  // namespace sparse_lab
