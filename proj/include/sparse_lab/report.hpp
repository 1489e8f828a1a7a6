#pragma once

#include "sparse_lab/probe.hpp"
#include "sparse_lab/sketch.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sparse_lab {

inline constexpr const char* kMetricsHeader =
    "run_id,round,sparsity,epsilon,lambda,seed,train_loss,train_acc,test_loss,test_acc,y_exc_l1,wall_seconds";

/// One metrics.csv row. Absent optionals are written as empty fields.
struct MetricsRow {
  std::string run_id;
  int round = 0;
  double sparsity = 0.0;
  double epsilon = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  std::optional<double> y_exc_l1;
  std::optional<double> wall_seconds;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

std::vector<MetricsRow> metrics_rows(const SketchRun& run, const std::vector<ProbeResult>* probes = nullptr);
std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

/// Writes metrics.csv: the exact header, one LF-terminated row per round.
void emit_metrics_csv(const SketchRun& run, const std::vector<ProbeResult>* probes, const std::filesystem::path& path);

/// Columns other tools may plot against sparsity.
const std::vector<std::string>& curve_metrics();

/// One "<run_id>.<metric>.curve.csv" per run (rows sorted by sparsity) plus
/// pairs.txt listing "vanilla_run_id,l2_run_id" for runs matched on
/// (epsilon, seed). `probes`, when given, is aligned with `runs`.
void emit_curves(const std::vector<SketchRun>& runs, const std::string& metric, const std::filesystem::path& out_dir,
                 const std::vector<std::vector<ProbeResult>>* probes = nullptr);

struct RunManifest {
  std::string run_id;
  std::uint64_t config_hash = 0;
  std::string tool_version;
  std::string started;
  std::string finished;  // empty until the run completes
  std::string host;
};

std::string tool_version();
std::string manifest_text(const RunManifest& m);
RunManifest parse_manifest(const std::string& text);
std::string utc_timestamp();
std::string host_info();

/// Header line and metrics for the probe series written next to metrics.csv.
void emit_probe_csv(const std::string& run_id, const std::vector<ProbeResult>& probes,
                    const std::filesystem::path& path);

/// "%016x" of a config hash.
std::string hash_hex(std::uint64_t h);

}  // namespace sparse_lab
