#include "sparse_lab/sketch.hpp"

#include "sparse_lab/report.hpp"
#include "sparse_lab/rng.hpp"
#include "sparse_lab/tensor_io.hpp"
#include "sparse_lab/training.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace sparse_lab {

namespace fs = std::filesystem;

namespace run_layout {

fs::path config(const fs::path& d) { return d / "config.txt"; }
fs::path manifest(const fs::path& d) { return d / "manifest.txt"; }
fs::path snapshot(const fs::path& d) { return d / "init.bin"; }
fs::path noise(const fs::path& d) { return d / "noise.txt"; }
fs::path metrics_csv(const fs::path& d) { return d / "metrics.csv"; }
fs::path round_dir(const fs::path& d, int round) { return d / ("round_" + std::to_string(round)); }
fs::path params(const fs::path& d, int round) { return round_dir(d, round) / "params.bin"; }
fs::path mask(const fs::path& d, int round) { return round_dir(d, round) / "mask.bin"; }
fs::path round_metrics(const fs::path& d, int round) { return round_dir(d, round) / "metrics.txt"; }

int completed_rounds(const fs::path& d) {
  int k = 0;
  while (fs::exists(round_metrics(d, k))) ++k;
  if (fs::exists(d)) {
    for (const auto& entry : fs::directory_iterator(d)) {
      const std::string name = entry.path().filename().string();
      if (!entry.is_directory() || name.rfind("round_", 0) != 0 || name.find('.') != std::string::npos) continue;
      const int r = std::atoi(name.c_str() + 6);
      if (r > k) throw CheckpointError("missing checkpoint for round " + std::to_string(k) + " in " + d.string());
    }
  }
  return k;
}

}  // namespace run_layout

std::string round_metrics_text(const RoundMetrics& m, std::uint64_t config_hash) {
  std::ostringstream out;
  out << "config-hash = " << hash_hex(config_hash) << '\n'
      << "round = " << m.round << '\n'
      << "sparsity = " << format_double(m.sparsity) << '\n'
      << "train-loss = " << format_double(m.train_loss) << '\n'
      << "train-acc = " << format_double(m.train_acc) << '\n'
      << "test-loss = " << format_double(m.test_loss) << '\n'
      << "test-acc = " << format_double(m.test_acc) << '\n'
      << "wall-seconds = " << format_double(m.wall_seconds) << '\n'
      << "train-seed = " << m.train_seed << '\n';
  return out.str();
}

RoundMetrics parse_round_metrics(const std::string& text, std::uint64_t expected_hash) {
  const auto kv = parse_key_values(text);
  const auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError(std::string("metrics missing '") + key + "'");
    return it->second;
  };
  if (get("config-hash") != hash_hex(expected_hash))
    throw ConfigMismatch("checkpoint config hash " + get("config-hash") + " does not match config " +
                         hash_hex(expected_hash));
  const auto num = [&](const char* key) {
    try {
      return std::stod(get(key));
    } catch (const std::invalid_argument&) {
      throw CheckpointError(std::string("metrics field '") + key + "' is not a number");
    }
  };
  RoundMetrics m;
  m.round = static_cast<int>(num("round"));
  m.sparsity = num("sparsity");
  m.train_loss = num("train-loss");
  m.train_acc = num("train-acc");
  m.test_loss = num("test-loss");
  m.test_acc = num("test-acc");
  m.wall_seconds = num("wall-seconds");
  m.train_seed = std::stoull(get("train-seed"));
  return m;
}

PhaseReport detect_phases(const SketchRun& run, double delta) {
  std::vector<double> acc;
  for (const auto& r : run.rounds) acc.push_back(100.0 * r.test_acc);
  PhaseReport report;
  report.delta = delta;
  report.indices = detect_phase_indices(acc, delta);
  report.detected = report.indices.detected;
  report.dip_depth = report.indices.dip_depth;
  const auto at = [&](const std::optional<std::size_t>& i) -> std::optional<double> {
    if (!i) return std::nullopt;
    return run.rounds[*i].sparsity;
  };
  report.dip_sparsity = at(report.indices.dip);
  report.recovery_sparsity = at(report.indices.recovery);
  report.collapse_sparsity = at(report.indices.collapse);
  return report;
}

std::vector<double> ideal_sparsity_schedule(double t_iter, double t_end) {
  if (!(t_iter > 0.0 && t_iter < 1.0) || !(t_end > 0.0 && t_end < 1.0))
    throw std::invalid_argument("t_iter and t_end must be in (0, 1)");
  std::vector<double> schedule;
  double density = 1.0;
  while (1.0 - density < t_end) {
    density *= 1.0 - t_iter;
    schedule.push_back(1.0 - density);
  }
  return schedule;
}

namespace {

std::uint64_t round_train_seed(std::uint64_t seed, int round) {
  return derive_seed(seed, static_cast<std::uint64_t>(round) + 1);
}

std::string noise_text(const NoiseRecord& noise, const LabeledDataset& noisy) {
  std::ostringstream out;
  out << "# index original noisy\n"
      << "epsilon = " << format_double(noise.epsilon) << '\n'
      << "noise-seed = " << noise.noise_seed << '\n'
      << "flips = " << noise.flipped_indices.size() << '\n';
  for (std::size_t i = 0; i < noise.flipped_indices.size(); ++i) {
    const std::size_t idx = noise.flipped_indices[i];
    out << idx << ' ' << noise.original_labels[i] << ' ' << noisy.labels[idx] << '\n';
  }
  return out.str();
}

template <typename F>
auto in_round(int round, F&& f) {
  try {
    return f();
  } catch (const ConfigMismatch&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError("round " + std::to_string(round) + ": " + e.what());
  }
}

void write_round_checkpoint(const fs::path& run_dir, const RoundMetrics& m, const ParamSet& params, const Mask& mask,
                            std::uint64_t hash) {
  const fs::path final_dir = run_layout::round_dir(run_dir, m.round);
  fs::path partial = final_dir;
  partial += ".partial";
  fs::remove_all(partial);
  fs::create_directories(partial);
  save_tensors(partial / "params.bin", params, hash);
  save_mask(partial / "mask.bin", mask, hash);
  write_file_atomic(partial / "metrics.txt", round_metrics_text(m, hash));
  fs::remove_all(final_dir);
  fs::rename(partial, final_dir);
}

}  // namespace

SketchRun run_sketch(const SketchConfig& cfg, const SketchOptions& options) {
  cfg.validate();
  const std::uint64_t hash = cfg.hash();
  const PreparedData data = prepare_data(cfg);

  SketchRun run{cfg, {}, std::nullopt};
  std::optional<InitSnapshot> snapshot;
  ParamSet params;
  Mask mask;
  OptimizerState state;
  const std::optional<fs::path>& dir = options.run_dir;

  if (dir && fs::exists(run_layout::config(*dir))) {
    const SketchConfig stored = SketchConfig::from_text(read_text_file(run_layout::config(*dir)));
    if (stored.hash() != hash)
      throw ConfigMismatch("run directory " + dir->string() + " holds config " + hash_hex(stored.hash()) +
                           ", refusing to continue with " + hash_hex(hash));
    if (fs::exists(run_layout::manifest(*dir))) {
      const RunManifest manifest = parse_manifest(read_text_file(run_layout::manifest(*dir)));
      if (manifest.config_hash != hash)
        throw ConfigMismatch("manifest config hash " + hash_hex(manifest.config_hash) + " does not match config " +
                             hash_hex(hash));
    }
    const int done = run_layout::completed_rounds(*dir);
    for (int r = 0; r < done; ++r) {
      run.rounds.push_back(in_round(r, [&] {
        RoundMetrics m = parse_round_metrics(read_text_file(run_layout::round_metrics(*dir, r)), hash);
        if (m.round != r) throw CheckpointError("metrics record round " + std::to_string(m.round));
        return m;
      }));
    }
    if (done > 0) {
      in_round(done - 1, [&] {
        TensorFile p = load_tensors(run_layout::params(*dir, done - 1));
        std::uint64_t mask_hash = 0;
        mask = load_mask(run_layout::mask(*dir, done - 1), &mask_hash);
        if (p.config_hash != hash || mask_hash != hash)
          throw ConfigMismatch("checkpoint config hash does not match config " + hash_hex(hash));
        params = std::move(p.tensors);
        check_congruent(params, mask);
        return 0;
      });
      TensorFile init = load_tensors(run_layout::snapshot(*dir));
      if (init.config_hash != hash) throw ConfigMismatch("snapshot config hash does not match config " + hash_hex(hash));
      snapshot.emplace(std::move(init.tensors), cfg.train.seed);
      if (snapshot->fingerprint() != fingerprint(params))
        throw CheckpointError("snapshot layout does not match round " + std::to_string(done - 1) + " params");
    }
  }

  if (run.rounds.empty()) {
    params = init_params(cfg.arch, cfg.train.seed);
    snapshot.emplace(params, cfg.train.seed);
    mask = Mask::full(params);
    if (dir) {
      fs::create_directories(*dir);
      write_file_atomic(run_layout::config(*dir), cfg.to_text());
      RunManifest manifest{cfg.run_id, hash, tool_version(), utc_timestamp(), "", host_info()};
      write_file_atomic(run_layout::manifest(*dir), manifest_text(manifest));
      save_tensors(run_layout::snapshot(*dir), snapshot->params(), hash);
      write_file_atomic(run_layout::noise(*dir), noise_text(data.noise, data.train));
    }
  }

  const auto train_round = [&](int round) {
    const auto start = std::chrono::steady_clock::now();
    TrainConfig tc = cfg.train;
    tc.seed = round_train_seed(cfg.train.seed, round);
    train(params, &mask, state, data.train, tc);
    const EvalResult on_train = evaluate(params, &mask, data.train);
    const EvalResult on_test = evaluate(params, &mask, data.test);
    RoundMetrics m;
    m.round = round;
    m.sparsity = sparsity(mask);
    m.train_loss = on_train.loss;
    m.train_acc = on_train.accuracy;
    m.test_loss = on_test.loss;
    m.test_acc = on_test.accuracy;
    m.train_seed = tc.seed;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (dir) write_round_checkpoint(*dir, m, params, mask, hash);
    run.rounds.push_back(m);
    if (dir) emit_metrics_csv(run, nullptr, run_layout::metrics_csv(*dir));
    if (options.on_round) options.on_round(m);
  };
  const auto should_stop = [&] { return options.stop_after_round && run.rounds.back().round >= *options.stop_after_round; };

  if (run.rounds.empty()) {
    train_round(0);
    if (should_stop()) return run;
  }
  while (sparsity(mask) < cfg.t_end) {
    if (should_stop()) return run;
    const double before = sparsity(mask);
    mask = prune(params, mask, cfg.t_iter, cfg.scope);
    if (!(sparsity(mask) > before))
      throw std::runtime_error("pruning stalled at sparsity " + format_double(before) + " below t_end " +
                               format_double(cfg.t_end));
    rewind(params, *snapshot, mask, state);
    train_round(run.rounds.back().round + 1);
  }

  if (dir) {
    emit_metrics_csv(run, nullptr, run_layout::metrics_csv(*dir));
    RunManifest manifest = parse_manifest(read_text_file(run_layout::manifest(*dir)));
    if (manifest.finished.empty()) {
      manifest.finished = utc_timestamp();
      write_file_atomic(run_layout::manifest(*dir), manifest_text(manifest));
    }
  }
  if (run.rounds.size() >= 4) run.phase_annotation = detect_phases(run);
  return run;
}

SketchRun resume(const fs::path& run_dir, SketchOptions options) {
  if (!fs::exists(run_layout::config(run_dir))) throw CheckpointError("no config.txt in " + run_dir.string());
  if (run_layout::completed_rounds(run_dir) == 0) throw CheckpointError("no completed round in " + run_dir.string());
  const SketchConfig cfg = SketchConfig::from_text(read_text_file(run_layout::config(run_dir)));
  options.run_dir = run_dir;
  return run_sketch(cfg, options);
}

SketchRun load_run(const fs::path& run_dir) {
  if (!fs::exists(run_layout::config(run_dir))) throw CheckpointError("no config.txt in " + run_dir.string());
  SketchRun run;
  run.config = SketchConfig::from_text(read_text_file(run_layout::config(run_dir)));
  const std::uint64_t hash = run.config.hash();
  if (fs::exists(run_layout::manifest(run_dir))) {
    const RunManifest manifest = parse_manifest(read_text_file(run_layout::manifest(run_dir)));
    if (manifest.config_hash != hash)
      throw ConfigMismatch(run_dir.string() + ": manifest hash " + hash_hex(manifest.config_hash) +
                           " does not match config.txt " + hash_hex(hash));
  }
  const int done = run_layout::completed_rounds(run_dir);
  for (int r = 0; r < done; ++r)
    run.rounds.push_back(
        in_round(r, [&] { return parse_round_metrics(read_text_file(run_layout::round_metrics(run_dir, r)), hash); }));
  if (run.rounds.size() >= 4) run.phase_annotation = detect_phases(run);
  return run;
}

std::string sweep_run_id(const std::string& base, double lambda, double epsilon, std::uint64_t seed) {
  const auto shortest = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  return base + "-lam" + shortest(lambda) + "-eps" + shortest(epsilon) + "-s" + std::to_string(seed);
}

std::vector<SketchConfig> sweep_configs(const SketchConfig& base, const std::vector<double>& lambdas,
                                        const std::vector<double>& epsilons, const std::vector<std::uint64_t>& seeds) {
  if (lambdas.empty() || epsilons.empty() || seeds.empty())
    throw ConfigError("sweep grids must be non-empty (lambdas, epsilons, seeds)");
  std::vector<SketchConfig> configs;
  std::set<std::string> ids;
  for (double lambda : lambdas) {
    for (double epsilon : epsilons) {
      for (std::uint64_t seed : seeds) {
        SketchConfig c = base;
        c.train.lambda = lambda;
        c.epsilon = epsilon;
        c.train.seed = seed;
        c.noise_seed = derive_seed(base.noise_seed, seed);
        c.run_id = sweep_run_id(base.run_id, lambda, epsilon, seed);
        if (!ids.insert(c.run_id).second) throw ConfigError("duplicate run_id in sweep: " + c.run_id);
        c.validate();
        configs.push_back(std::move(c));
      }
    }
  }
  return configs;
}

std::vector<SketchRun> sweep(const SketchConfig& base, const std::vector<double>& lambdas,
                             const std::vector<double>& epsilons, const std::vector<std::uint64_t>& seeds,
                             const SweepOptions& options) {
  const auto configs = sweep_configs(base, lambdas, epsilons, seeds);
  std::vector<SketchRun> runs(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  const auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        SketchOptions o;
        o.run_dir = options.out_root / configs[i].run_id;
        o.stop_after_round = options.stop_after_round;
        if (options.on_round) {
          o.on_round = [&, id = configs[i].run_id](const RoundMetrics& m) {
            std::lock_guard lock(callback_mutex);
            options.on_round(id, m);
          };
        }
        runs[i] = run_sketch(configs[i], o);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(configs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return runs;
}

}  // namespace sparse_lab
