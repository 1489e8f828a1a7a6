#include "oracles.hpp"

#include "sparse_lab/probe.hpp"
#include "sparse_lab/report.hpp"
#include "sparse_lab/rng.hpp"
#include "sparse_lab/sketch.hpp"
#include "sparse_lab/tensor_io.hpp"

#include <doctest.h>

#include <filesystem>

using namespace sparse_lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sparse_lab_test_report_" + name);
  fs::remove_all(dir);
  return dir;
}

ParamSet linear(std::initializer_list<double> w) {
  ParamSet p;
  MatrixD m(1, static_cast<Index>(w.size()));
  Index i = 0;
  for (double v : w) m(0, i++) = v;
  p.add("fc1.weight", m, true, 2);
  p.add("fc1.bias", MatrixD::Zero(1, 1), false, 1);
  return p;
}

SketchConfig tiny(const std::string& id, double lambda) {
  SketchConfig cfg;
  cfg.run_id = id;
  cfg.dataset.blob_per_class = 20;
  cfg.arch = MlpArchitecture{{2, 10, 2}};
  cfg.train.epochs = 1;
  cfg.train.batch_size = 8;
  cfg.train.lambda = lambda;
  cfg.t_iter = 0.5;
  cfg.t_end = 0.7;
  cfg.epsilon = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("excess_output: hand example") {
  const ParamSet p = linear({1.0, 2.0});
  Mask m = Mask::full(p);
  m.entries[0].keep(0, 0) = 0.0;
  const MatrixD x = MatrixD::Ones(1, 2);
  const ProbeResult r = excess_output(p, m, x);
  CHECK(r.y_exc_l1 == 1.0);
  CHECK(r.weight_l1_masked_out == 1.0);
  CHECK(r.condition1_score == 1.0);
  CHECK(r.per_layer_amplification.empty());
  CHECK(excess_logits(p, m, x)(0, 0) == 1.0);
}

TEST_CASE("excess_logits matches the naive oracle per coordinate") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamSet p = init_params(MlpArchitecture{{5, 6, 4, 3}}, rng());
    Mask m = Mask::full(p);
    for (auto& e : m.entries)
      for (Index i = 0; i < e.keep.size(); ++i) e.keep.data()[i] = uniform01(rng) < 0.5 ? 0.0 : 1.0;
    MatrixD x(3, 5);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
    const MatrixD y = excess_logits(p, m, x);
    for (Index r = 0; r < 3; ++r) {
      const std::vector<double> row(x.row(r).data(), x.row(r).data() + 5);
      const auto full = oracle::naive_forward(p, row);
      const auto masked = oracle::naive_forward(p, row, &m);
      for (Index c = 0; c < 3; ++c) CHECK(std::abs(y(r, c) - (full[c] - masked[c])) <= 1e-12);
    }
    CHECK(excess_logits(p, Mask::full(p), x).isZero(0.0));
  }
}

TEST_CASE("amplification_check: identity, contraction, dead layer") {
  const auto net = [](double scale, double bias) {
    ParamSet p;
    p.add("fc1.weight", MatrixD::Identity(2, 2), true, 2);
    p.add("fc1.bias", MatrixD::Constant(1, 2, bias), false, 1);
    p.add("fc2.weight", MatrixD::Identity(2, 2) * scale, true, 2);
    p.add("fc2.bias", MatrixD::Zero(1, 2), false, 1);
    return p;
  };
  const MatrixD x = MatrixD::Ones(4, 2);
  CHECK(amplification_check(net(1.0, 0.0), x) == std::vector<double>{1.0});
  CHECK(amplification_check(net(0.5, 0.0), x)[0] == doctest::Approx(0.5));
  CHECK(amplification_check(net(0.0, 0.0), x)[0] == 0.0);
  CHECK(excess_output(net(2.0, 0.0), Mask::full(net(2.0, 0.0)), x).condition2_score == doctest::Approx(2.0));
}

TEST_CASE("sample_probe_batch draws distinct rows deterministically") {
  const LabeledDataset ds = synth_blobs(10, 2, 3, 2.0, 1);
  const MatrixD a = sample_probe_batch(ds, 7, 3);
  CHECK(a.rows() == 7);
  CHECK(a == sample_probe_batch(ds, 7, 3));
  CHECK(sample_probe_batch(ds, 100, 3).rows() == 20);
}

TEST_CASE("metrics.csv: exact header, row per round, round trip") {
  const fs::path dir = scratch("csv");
  const SketchRun run = run_sketch(tiny("csvrun", 0.0), {dir, std::nullopt, {}});
  const std::string text = read_text_file(run_layout::metrics_csv(dir));
  CHECK(text.substr(0, text.find('\n')) == kMetricsHeader);
  CHECK(text.back() == '\n');
  const auto rows = parse_metrics_csv(text);
  REQUIRE(rows.size() == run.rounds.size());
  CHECK(rows == metrics_rows(run));
  CHECK(format_metrics_csv(rows) == text);
  for (const auto& r : rows) {
    CHECK(r.run_id == "csvrun");
    CHECK_FALSE(r.wall_seconds.has_value());
    CHECK_FALSE(r.y_exc_l1.has_value());
  }

  SketchConfig timed = tiny("timed", 0.0);
  timed.record_timing = true;
  for (const auto& r : metrics_rows(run_sketch(timed))) CHECK(r.wall_seconds.has_value());
}

TEST_CASE("probe series attaches y_exc to the round it was measured on") {
  const fs::path dir = scratch("probe");
  const SketchConfig cfg = tiny("probed", 0.0);
  const SketchRun run = run_sketch(cfg, {dir, std::nullopt, {}});
  const MatrixD batch = sample_probe_batch(prepare_data(cfg).test, 16, 0);
  const auto probes = probe_along_run(dir, batch);
  REQUIRE(probes.size() == run.rounds.size() - 1);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    CHECK(probes[i].round == static_cast<int>(i));
    CHECK(probes[i].weight_l1_masked_out > 0.0);
  }
  const auto rows = metrics_rows(run, &probes);
  CHECK(rows[0].y_exc_l1 == probes[0].y_exc_l1);
  CHECK_FALSE(rows.back().y_exc_l1.has_value());
}

TEST_CASE("emit_curves: files per run, vanilla/l2 pairs, metric validation") {
  const fs::path out = scratch("curves");
  const std::vector<SketchRun> runs{run_sketch(tiny("v", 0.0)), run_sketch(tiny("r", 1e-4))};
  emit_curves(runs, "test_acc", out);
  CHECK(fs::exists(out / "v.test_acc.curve.csv"));
  CHECK(fs::exists(out / "r.test_acc.curve.csv"));
  CHECK(read_text_file(out / "pairs.txt") == "v,r\n");
  CHECK_THROWS_WITH_AS(emit_curves(runs, "speed", out), doctest::Contains("test_acc"), std::invalid_argument);

  SketchRun other = runs[1];
  other.config.dataset.blob_seed = 9;
  CHECK_THROWS(emit_curves({runs[0], other}, "test_acc", out));
}

TEST_CASE("manifest text round-trips") {
  const RunManifest m{"id", 0x1234, tool_version(), utc_timestamp(), "", host_info()};
  const RunManifest back = parse_manifest(manifest_text(m));
  CHECK(back.run_id == "id");
  CHECK(back.config_hash == 0x1234);
  CHECK(back.finished.empty());
  CHECK(hash_hex(0x1234) == "0000000000001234");
}
