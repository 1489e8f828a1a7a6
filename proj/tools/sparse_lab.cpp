// sparse-lab: iterative magnitude pruning sweeps with lottery-ticket rewinding.
//
//   sparse-lab sketch --dataset mnist --epsilon 0.1 --lambda 1e-4 --out runs/a
//   sparse-lab sweep --lambdas 0,1e-4 --epsilons 0.1,0.2,0.5 --seeds 0 --out runs/grid
//   sparse-lab probe --run runs/a
//   sparse-lab report --runs runs/grid --metric test_acc --out curves
//   sparse-lab selftest
//
// Exit status: 0 success, 1 usage or config error, 2 runtime failure.

#include "sparse_lab/config.hpp"
#include "sparse_lab/probe.hpp"
#include "sparse_lab/report.hpp"
#include "sparse_lab/selftest.hpp"
#include "sparse_lab/sketch.hpp"
#include "sparse_lab/tensor_io.hpp"
#include "sparse_lab/training.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#ifndef SPARSE_LAB_DEFAULT_MNIST_DIR
#define SPARSE_LAB_DEFAULT_MNIST_DIR "data/mnist-10k"
#endif

namespace fs = std::filesystem;
using namespace sparse_lab;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

// Every SketchConfig key is also a flag of the same name.
const std::vector<std::pair<std::string, std::string>> kConfigFlags = {
    {"run-id", "run identifier (letters, digits, - _ .)"},
    {"dataset", "mnist or blobs"},
    {"data-dir", "directory with train-*/t10k-* IDX files"},
    {"train-images", "IDX images file for the training pool"},
    {"train-labels", "IDX labels file for the training pool"},
    {"test-images", "IDX images file for testing (else the pool is split)"},
    {"test-labels", "IDX labels file for testing"},
    {"limit", "keep only the first N pool samples (0 = all)"},
    {"train-fraction", "train share when splitting the pool"},
    {"split-seed", "seed of the train/test split"},
    {"blob-per-class", "synthetic samples per class"},
    {"blob-classes", "synthetic class count"},
    {"blob-dim", "synthetic feature dimension"},
    {"blob-separation", "distance between synthetic class centers"},
    {"blob-seed", "seed of the synthetic data"},
    {"arch", "layer sizes, e.g. 784,300,100,10"},
    {"epochs", "epochs per round"},
    {"lr", "base learning rate"},
    {"momentum", "SGD momentum in [0, 1)"},
    {"lambda", "l2 weight decay on weights"},
    {"batch-size", "mini-batch size"},
    {"milestones", "comma-separated epochs where lr is multiplied by gamma"},
    {"gamma", "lr decay factor"},
    {"seed", "init and shuffle seed"},
    {"t-iter", "fraction of survivors pruned per round, in (0, 1)"},
    {"t-end", "target sparsity, in (0, 1)"},
    {"scope", "layerwise or global"},
    {"epsilon", "symmetric label-noise rate in [0, 1]"},
    {"noise-seed", "seed of the label-noise draw"},
};

struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  bool timing = false;
  CLI::Option* timing_flag = nullptr;
  std::map<std::string, CLI::Option*> options;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_file, "key = value config file (flags override it)")
      ->check(CLI::ExistingFile);
  for (const auto& [key, help] : kConfigFlags) flags.options[key] = cmd->add_option("--" + key, flags.values[key], help);
  flags.timing_flag = cmd->add_flag("--timing", flags.timing, "write wall_seconds to metrics.csv");
}

SketchConfig build_config(const ConfigFlags& flags) {
  std::map<std::string, std::string> merged;
  if (!flags.config_file.empty()) merged = parse_key_values(read_text_file(flags.config_file));
  for (const auto& [key, opt] : flags.options)
    if (opt->count() > 0) merged[key] = flags.values.at(key);
  if (flags.timing_flag->count() > 0) merged["timing"] = flags.timing ? "true" : "false";

  const std::string kind = merged.count("dataset") ? merged["dataset"] : "blobs";
  if (kind == "mnist" && !merged.count("data-dir") && !merged.count("train-images"))
    merged["data-dir"] = SPARSE_LAB_DEFAULT_MNIST_DIR;
  if (!merged.count("arch")) {
    if (kind == "blobs") {
      const std::string dim = merged.count("blob-dim") ? merged["blob-dim"] : "2";
      const std::string classes = merged.count("blob-classes") ? merged["blob-classes"] : "2";
      merged["arch"] = dim + "-32-" + classes;
    } else {
      merged["arch"] = "784-300-100-10";
    }
  }
  SketchConfig cfg = SketchConfig::from_map(merged);
  cfg.validate();
  return cfg;
}

template <typename T>
std::vector<T> parse_list(const std::string& flag, const std::string& text) {
  std::vector<T> out;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(std::stod(token, &used));
      } else {
        out.push_back(static_cast<T>(std::stoull(token, &used)));
      }
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ConfigError(flag + ": cannot parse '" + token + "'");
    }
  }
  return out;
}

void print_round(const std::string& run_id, const RoundMetrics& m) {
  std::fprintf(stderr, "[%s] round %d sparsity %.5f train_acc %.4f test_acc %.4f (%.1fs)\n", run_id.c_str(), m.round,
               m.sparsity, m.train_acc, m.test_acc, m.wall_seconds);
}

void print_phases(const SketchRun& run, double delta) {
  if (run.rounds.size() < 4) {
    std::cout << run.config.run_id << ": phase detection needs >= 4 rounds\n";
    return;
  }
  const PhaseReport p = detect_phases(run, delta);
  std::cout << run.config.run_id << ": double descent " << (p.detected ? "detected" : "not detected")
            << " (delta " << delta << " accuracy points, dip = drop below the best earlier round followed by a rise)";
  if (p.dip_sparsity)
    std::cout << ", dip at sparsity " << *p.dip_sparsity << " depth " << p.dip_depth << ", recovery at sparsity "
              << *p.recovery_sparsity;
  if (p.collapse_sparsity) std::cout << ", collapse from sparsity " << *p.collapse_sparsity;
  std::cout << '\n';
}

std::vector<fs::path> expand_run_dirs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> dirs;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::exists(run_layout::config(p))) {
      dirs.push_back(p);
      continue;
    }
    if (!fs::is_directory(p)) throw ConfigError("not a run directory: " + in);
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_directory() && fs::exists(run_layout::config(e.path()))) children.push_back(e.path());
    if (children.empty()) throw ConfigError("no run directories under " + in);
    std::sort(children.begin(), children.end());
    dirs.insert(dirs.end(), children.begin(), children.end());
  }
  return dirs;
}

std::vector<ProbeResult> read_probe_csv(const fs::path& path) {
  std::vector<ProbeResult> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() < 6) throw CheckpointError("malformed probe row in " + path.string());
    ProbeResult p;
    p.round = std::stoi(f[1]);
    p.y_exc_l1 = std::stod(f[2]);
    p.weight_l1_masked_out = std::stod(f[3]);
    p.condition1_score = std::stod(f[4]);
    p.condition2_score = std::stod(f[5]);
    out.push_back(p);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative magnitude pruning with lottery-ticket rewinding: trace test accuracy against sparsity."};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());

  ConfigFlags sketch_flags;
  auto* sketch_cmd = app.add_subcommand("sketch", "run one prune/rewind/retrain sketch");
  add_config_flags(sketch_cmd, sketch_flags);
  std::string sketch_out;
  std::optional<int> stop_after;
  bool resume_only = false;
  double delta = 1.0;
  sketch_cmd->add_option("--out", sketch_out, "run directory")->required();
  sketch_cmd->add_option("--stop-after-round", stop_after, "checkpoint this round, then stop");
  sketch_cmd->add_flag("--resume", resume_only, "continue the run stored in --out using its own config");
  sketch_cmd->add_option("--delta", delta, "phase-detection threshold in accuracy points");

  ConfigFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "run a lambda x epsilon x seed grid");
  add_config_flags(sweep_cmd, sweep_flags);
  std::string lambdas = "0,0.0001";
  std::string epsilons = "0.1,0.2,0.5";
  std::string seeds = "0";
  std::string sweep_out;
  int jobs = 1;
  sweep_cmd->add_option("--lambdas", lambdas, "comma-separated lambda grid")->capture_default_str();
  sweep_cmd->add_option("--epsilons", epsilons, "comma-separated epsilon grid")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seed grid")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "root directory, one subdirectory per run")->required();
  sweep_cmd->add_option("--jobs", jobs, "runs executed concurrently")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--stop-after-round", stop_after, "checkpoint this round in every run, then stop");

  auto* probe_cmd = app.add_subcommand("probe", "measure the excess-weight output perturbation per round");
  std::string probe_run;
  std::size_t probe_size = 256;
  std::uint64_t probe_seed = 0;
  probe_cmd->add_option("--run", probe_run, "run directory")->required();
  probe_cmd->add_option("--probe-size", probe_size, "test inputs in the probe batch")->capture_default_str();
  probe_cmd->add_option("--probe-seed", probe_seed, "seed choosing the probe inputs")->capture_default_str();

  auto* report_cmd = app.add_subcommand("report", "regenerate metrics.csv and curve files from checkpoints");
  std::vector<std::string> report_runs;
  std::string metric = "test_acc";
  std::string report_out;
  report_cmd->add_option("--runs", report_runs, "run directories or sweep roots")->required();
  report_cmd->add_option("--metric", metric, "curve metric or 'all'")->capture_default_str();
  report_cmd->add_option("--out", report_out, "curve output directory (default: first run's parent)/curves");
  report_cmd->add_option("--delta", delta, "phase-detection threshold in accuracy points");

  app.add_subcommand("selftest", "gradient check and prune-oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*sketch_cmd) {
      std::fprintf(stderr, "intra-op threads: %d\n", intra_op_threads());
      SketchOptions options;
      options.run_dir = sketch_out;
      options.stop_after_round = stop_after;
      SketchRun run;
      if (resume_only) {
        options.on_round = [&](const RoundMetrics& m) { print_round(sketch_out, m); };
        run = resume(sketch_out, options);
      } else {
        const SketchConfig cfg = build_config(sketch_flags);
        options.on_round = [&](const RoundMetrics& m) { print_round(cfg.run_id, m); };
        run = run_sketch(cfg, options);
      }
      std::cout << "wrote " << run.rounds.size() << " rounds to " << sketch_out << '\n';
      print_phases(run, delta);
    } else if (*sweep_cmd) {
      const SketchConfig base = build_config(sweep_flags);
      SweepOptions options;
      options.out_root = sweep_out;
      options.jobs = jobs;
      options.stop_after_round = stop_after;
      options.on_round = print_round;
      const auto runs = sweep(base, parse_list<double>("--lambdas", lambdas), parse_list<double>("--epsilons", epsilons),
                              parse_list<std::uint64_t>("--seeds", seeds), options);
      for (const auto& run : runs) print_phases(run, delta);
    } else if (*probe_cmd) {
      const SketchRun run = load_run(probe_run);
      const PreparedData data = prepare_data(run.config);
      const MatrixD batch = sample_probe_batch(data.test, probe_size, probe_seed);
      const auto probes = probe_along_run(probe_run, batch);
      emit_probe_csv(run.config.run_id, probes, fs::path(probe_run) / "probes.csv");
      emit_metrics_csv(run, &probes, run_layout::metrics_csv(probe_run));
      std::cout << "probed " << probes.size() << " pruned rounds of " << run.config.run_id
                << " (y_exc = forward(params) - forward(params * next mask))\n";
    } else if (*report_cmd) {
      const auto dirs = expand_run_dirs(report_runs);
      std::vector<SketchRun> runs;
      std::vector<std::vector<ProbeResult>> probes;
      for (const auto& dir : dirs) {
        runs.push_back(load_run(dir));
        probes.push_back(read_probe_csv(dir / "probes.csv"));
        emit_metrics_csv(runs.back(), &probes.back(), run_layout::metrics_csv(dir));
        print_phases(runs.back(), delta);
      }
      const fs::path out = report_out.empty() ? dirs.front().parent_path() / "curves" : fs::path(report_out);
      if (metric == "all") {
        for (const auto& m : curve_metrics()) emit_curves(runs, m, out, &probes);
      } else {
        try {
          emit_curves(runs, metric, out, &probes);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      }
      std::cout << "wrote curves for " << runs.size() << " runs to " << out << '\n';
    } else {
      std::string report;
      const bool ok = selftest::run_all(report);
      std::cout << report;
      return ok ? 0 : kExitRuntime;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigMismatch& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
