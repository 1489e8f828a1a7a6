#include "oracles.hpp"

#include "sparse_lab/config.hpp"
#include "sparse_lab/phases.hpp"
#include "sparse_lab/report.hpp"
#include "sparse_lab/rng.hpp"
#include "sparse_lab/sketch.hpp"
#include "sparse_lab/tensor_io.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>

using namespace sparse_lab;
namespace fs = std::filesystem;

namespace {

// wall_seconds is measured, everything else must repeat exactly
std::vector<RoundMetrics> untimed(std::vector<RoundMetrics> rounds) {
  for (auto& r : rounds) r.wall_seconds = 0.0;
  return rounds;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sparse_lab_test_sketch_" + name);
  fs::remove_all(dir);
  return dir;
}

SketchConfig small_config() {
  SketchConfig cfg;
  cfg.run_id = "toy";
  cfg.dataset.blob_per_class = 30;
  cfg.dataset.blob_classes = 3;
  cfg.dataset.blob_dim = 4;
  cfg.dataset.blob_separation = 3.0;
  cfg.arch = MlpArchitecture{{4, 40, 3}};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.train.lambda = 1e-4;
  cfg.train.seed = 5;
  cfg.t_iter = 0.3;
  cfg.t_end = 0.8;
  cfg.epsilon = 0.2;
  return cfg;
}

}  // namespace

TEST_CASE("detect_phase_indices: worked example") {
  const std::vector<double> acc{90, 89, 80, 85, 88, 40};
  const PhaseIndices p = detect_phase_indices(acc, 2.0);
  CHECK(p.detected);
  CHECK(p.peak == 0u);
  CHECK(p.dip == 2u);
  CHECK(p.recovery == 4u);
  CHECK(p.collapse == 5u);
  CHECK(p.dip_depth == doctest::Approx(10.0));
}

TEST_CASE("detect_phase_indices: monotone curves have no dip") {
  const std::vector<double> up{10, 20, 30, 40, 50};
  const std::vector<double> down{90, 80, 70, 60, 50};
  CHECK_FALSE(detect_phase_indices(up, 1.0).detected);
  CHECK_FALSE(detect_phase_indices(up, 1.0).dip.has_value());
  CHECK_FALSE(detect_phase_indices(down, 1.0).detected);
}

TEST_CASE("detect_phase_indices: dip must clear delta on both sides") {
  const std::vector<double> shallow{90, 89, 90.5, 50};
  CHECK_FALSE(detect_phase_indices(shallow, 2.0).dip.has_value());
  CHECK(detect_phase_indices(shallow, 0.5).dip == 1u);
}

TEST_CASE("detect_phase_indices: plateau within delta is not a dip") {
  const std::vector<double> plateau{80, 80.5, 79.8, 80.2, 80.9, 80.1};
  CHECK_FALSE(detect_phase_indices(plateau, 1.0).detected);
}

TEST_CASE("detect_phase_indices: a wiggle inside the collapse does not outrank the real dip") {
  const std::vector<double> acc{60, 51, 70, 86, 60, 42, 44.5, 41, 40};
  const PhaseIndices p = detect_phase_indices(acc, 2.0);
  CHECK(p.dip == 1u);
  CHECK(p.recovery == 3u);
  CHECK(p.collapse == 4u);
}

TEST_CASE("detect_phase_indices: needs four points") {
  const std::vector<double> three{1, 2, 3};
  CHECK_THROWS_AS(detect_phase_indices(three, 1.0), std::invalid_argument);
}

TEST_CASE("detect_phase_indices agrees with exhaustive search on random curves") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> acc(4 + uniform_index(rng, 12));
    for (double& a : acc) a = static_cast<double>(uniform_index(rng, 20));  // integer ties
    const double delta = 1.0 + static_cast<double>(uniform_index(rng, 4));
    const PhaseIndices p = detect_phase_indices(acc, delta);
    const long want = oracle::exhaustive_dip(acc, delta);
    if (want < 0) {
      CHECK_FALSE(p.dip.has_value());
    } else {
      REQUIRE(p.dip.has_value());
      CHECK(static_cast<long>(*p.dip) == want);
      CHECK(*p.peak < *p.dip);
      CHECK(*p.recovery > *p.dip);
      CHECK(acc[*p.recovery] - acc[*p.dip] >= delta);
    }
    CHECK(p.detected == (want >= 0));
    if (p.collapse) {
      const double ref = p.detected ? acc[*p.recovery] : *std::max_element(acc.begin(), acc.end());
      for (std::size_t k = *p.collapse; k < acc.size(); ++k) CHECK(acc[k] <= ref - delta);
      CHECK(acc[*p.collapse - 1] > ref - delta);
    }
  }
}

TEST_CASE("config text round-trips and hashes stably") {
  SketchConfig cfg = small_config();
  cfg.train.lr_milestones = {1};
  cfg.scope = PruneScope::global;
  const SketchConfig back = SketchConfig::from_text(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.hash() == cfg.hash());
  SketchConfig other = cfg;
  other.train.lambda = 0.0;
  CHECK(other.hash() != cfg.hash());
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("config validation names the key") {
  SketchConfig cfg = small_config();
  cfg.t_iter = 1.5;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("t-iter"), ConfigError);
  cfg = small_config();
  cfg.epsilon = -0.1;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("epsilon"), ConfigError);
  cfg = small_config();
  cfg.train.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(SketchConfig::from_map({{"no-such-key", "1"}}), ConfigError);
}

TEST_CASE("parse_key_values: comments, sections, quotes") {
  const auto kv = parse_key_values("# top\n[run]\nrun-id = \"abc\"  # trailing\n  t-iter=0.25\n");
  CHECK(kv.at("run-id") == "abc");
  CHECK(kv.at("t-iter") == "0.25");
  CHECK(kv.size() == 2);
}

TEST_CASE("run_sketch: schedule, round-0 dense, sparsity strictly increasing") {
  const SketchConfig cfg = small_config();
  const SketchRun run = run_sketch(cfg);
  REQUIRE(run.rounds.size() >= 2);
  CHECK(run.rounds[0].round == 0);
  CHECK(run.rounds[0].sparsity == 0.0);
  for (std::size_t k = 1; k < run.rounds.size(); ++k) {
    CHECK(run.rounds[k].round == static_cast<int>(k));
    CHECK(run.rounds[k].sparsity > run.rounds[k - 1].sparsity);
  }
  CHECK(run.rounds.back().sparsity >= cfg.t_end);
  CHECK(run.rounds[run.rounds.size() - 2].sparsity < cfg.t_end);

  const auto expect = oracle::floor_recurrence({4 * 40, 40 * 3}, cfg.t_iter, cfg.t_end);
  REQUIRE(expect.size() == run.rounds.size() - 1);
  for (std::size_t k = 0; k < expect.size(); ++k) CHECK(run.rounds[k + 1].sparsity == doctest::Approx(expect[k]).epsilon(1e-15));
}

TEST_CASE("run_sketch is deterministic in memory") {
  const SketchRun a = run_sketch(small_config());
  const SketchRun b = run_sketch(small_config());
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t k = 0; k < a.rounds.size(); ++k) {
    CHECK(a.rounds[k].test_loss == b.rounds[k].test_loss);
    CHECK(a.rounds[k].train_acc == b.rounds[k].train_acc);
  }
}

TEST_CASE("run_sketch: stall below t_end is an error") {
  SketchConfig cfg = small_config();
  cfg.arch = MlpArchitecture{{4, 3}};  // 12 weights: floor(0.05 * 12) = 0
  cfg.t_iter = 0.05;
  CHECK_THROWS_WITH(run_sketch(cfg), doctest::Contains("stalled"));
}

TEST_CASE("checkpoint layout, stop and resume") {
  const fs::path full_dir = scratch("full");
  const fs::path cut_dir = scratch("cut");
  const SketchConfig cfg = small_config();
  const SketchRun full = run_sketch(cfg, {full_dir, std::nullopt, {}});

  CHECK(fs::exists(run_layout::config(full_dir)));
  CHECK(fs::exists(run_layout::snapshot(full_dir)));
  CHECK(fs::exists(run_layout::noise(full_dir)));
  CHECK(run_layout::completed_rounds(full_dir) == static_cast<int>(full.rounds.size()));
  CHECK(parse_manifest(read_text_file(run_layout::manifest(full_dir))).finished != "");

  const SketchRun partial = run_sketch(cfg, {cut_dir, 1, {}});
  CHECK(partial.rounds.size() == 2);
  CHECK(run_layout::completed_rounds(cut_dir) == 2);
  CHECK(parse_manifest(read_text_file(run_layout::manifest(cut_dir))).finished == "");

  const SketchRun resumed = resume(cut_dir);
  CHECK(untimed(resumed.rounds) == untimed(full.rounds));
  CHECK(read_text_file(run_layout::metrics_csv(cut_dir)) == read_text_file(run_layout::metrics_csv(full_dir)));
  CHECK(untimed(load_run(cut_dir).rounds) == untimed(full.rounds));
}

TEST_CASE("resume refuses a different config and a missing round") {
  const fs::path dir = scratch("mismatch");
  const SketchConfig cfg = small_config();
  run_sketch(cfg, {dir, 0, {}});
  SketchConfig changed = cfg;
  changed.train.lambda = 0.0;
  CHECK_THROWS_AS(run_sketch(changed, {dir, std::nullopt, {}}), ConfigMismatch);

  const fs::path gap = scratch("gap");
  run_sketch(cfg, {gap, 2, {}});
  fs::remove_all(run_layout::round_dir(gap, 1));
  CHECK_THROWS_WITH(resume(gap), doctest::Contains("missing checkpoint"));
}

TEST_CASE("tensor files reject corruption") {
  const fs::path dir = scratch("tensor");
  fs::create_directories(dir);
  const ParamSet p = init_params(MlpArchitecture{{3, 2}}, 1);
  save_tensors(dir / "p.bin", p, 0xabc);
  const TensorFile back = load_tensors(dir / "p.bin");
  CHECK(back.tensors == p);
  CHECK(back.config_hash == 0xabc);

  std::string bytes = read_text_file(dir / "p.bin");
  write_file_atomic(dir / "trunc.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_tensors(dir / "trunc.bin"), CheckpointError);
  bytes[0] = 'X';
  write_file_atomic(dir / "magic.bin", bytes);
  CHECK_THROWS_AS(load_tensors(dir / "magic.bin"), CheckpointError);

  const Mask m = Mask::full(p);
  save_mask(dir / "m.bin", m, 7);
  std::uint64_t h = 0;
  CHECK(load_mask(dir / "m.bin", &h) == m);
  CHECK(h == 7);
  CHECK_THROWS_AS(load_mask(dir / "p.bin"), CheckpointError);  // non-binary values
}

TEST_CASE("sweep: run ids, shared noise across lambda, resume after a cut") {
  SketchConfig base = small_config();
  base.run_id = "grid";
  const auto cfgs = sweep_configs(base, {0.0, 1e-4}, {0.2}, {0, 1});
  REQUIRE(cfgs.size() == 4);
  CHECK(sweep_run_id("grid", 1e-4, 0.2, 1) == "grid-lam1e-04-eps0.2-s1");
  for (const auto& a : cfgs)
    for (const auto& b : cfgs)
      if (a.train.seed == b.train.seed) CHECK(prepare_data(a).train.labels == prepare_data(b).train.labels);
  CHECK_THROWS_AS(sweep_configs(base, {}, {0.2}, {0}), ConfigError);
  CHECK_THROWS_AS(sweep_configs(base, {0.0, 0.0}, {0.2}, {0}), ConfigError);

  const fs::path full_root = scratch("sweep_full");
  const fs::path cut_root = scratch("sweep_cut");
  sweep(base, {0.0, 1e-4}, {0.2}, {0}, {full_root, 2, std::nullopt, {}});
  sweep(base, {0.0, 1e-4}, {0.2}, {0}, {cut_root, 1, 1, {}});
  sweep(base, {0.0, 1e-4}, {0.2}, {0}, {cut_root, 1, std::nullopt, {}});
  for (const auto& c : sweep_configs(base, {0.0, 1e-4}, {0.2}, {0}))
    CHECK(read_text_file(run_layout::metrics_csv(cut_root / c.run_id)) ==
          read_text_file(run_layout::metrics_csv(full_root / c.run_id)));
}
