#include "sparse_lab/report.hpp"

#include "sparse_lab/tensor_io.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <map>
#include <sstream>

#ifndef SPARSE_LAB_VERSION
#define SPARSE_LAB_VERSION "0.0.0"
#endif

namespace sparse_lab {

namespace fs = std::filesystem;

std::string hash_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<MetricsRow> metrics_rows(const SketchRun& run, const std::vector<ProbeResult>* probes) {
  if (run.rounds.empty()) throw std::invalid_argument("run " + run.config.run_id + " has no rounds");
  std::map<int, double> excess;
  if (probes != nullptr)
    for (const auto& p : *probes) excess[p.round] = p.y_exc_l1;
  std::vector<MetricsRow> rows;
  for (const auto& r : run.rounds) {
    MetricsRow row;
    row.run_id = run.config.run_id;
    row.round = r.round;
    row.sparsity = r.sparsity;
    row.epsilon = run.config.epsilon;
    row.lambda = run.config.train.lambda;
    row.seed = run.config.train.seed;
    row.train_loss = r.train_loss;
    row.train_acc = r.train_acc;
    row.test_loss = r.test_loss;
    row.test_acc = r.test_acc;
    if (const auto it = excess.find(r.round); it != excess.end()) row.y_exc_l1 = it->second;
    if (run.config.record_timing) row.wall_seconds = r.wall_seconds;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out += r.run_id + ',' + std::to_string(r.round) + ',' + format_double(r.sparsity) + ',' +
           format_double(r.epsilon) + ',' + format_double(r.lambda) + ',' + std::to_string(r.seed) + ',' +
           format_double(r.train_loss) + ',' + format_double(r.train_acc) + ',' + format_double(r.test_loss) + ',' +
           format_double(r.test_acc) + ',' + opt(r.y_exc_l1) + ',' + opt(r.wall_seconds) + '\n';
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw std::runtime_error("metrics.csv: unexpected header");
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 12) throw std::runtime_error("metrics.csv line " + std::to_string(lineno) + ": expected 12 fields");
    try {
      const auto opt = [](const std::string& s) { return s.empty() ? std::optional<double>() : std::stod(s); };
      MetricsRow r;
      r.run_id = f[0];
      r.round = std::stoi(f[1]);
      r.sparsity = std::stod(f[2]);
      r.epsilon = std::stod(f[3]);
      r.lambda = std::stod(f[4]);
      r.seed = std::stoull(f[5]);
      r.train_loss = std::stod(f[6]);
      r.train_acc = std::stod(f[7]);
      r.test_loss = std::stod(f[8]);
      r.test_acc = std::stod(f[9]);
      r.y_exc_l1 = opt(f[10]);
      r.wall_seconds = opt(f[11]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error("metrics.csv line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

void emit_metrics_csv(const SketchRun& run, const std::vector<ProbeResult>* probes, const fs::path& path) {
  write_file_atomic(path, format_metrics_csv(metrics_rows(run, probes)));
}

const std::vector<std::string>& curve_metrics() {
  static const std::vector<std::string> names{"train_loss", "train_acc", "test_loss", "test_acc", "y_exc_l1"};
  return names;
}

namespace {

std::optional<double> metric_value(const MetricsRow& r, const std::string& metric) {
  if (metric == "train_loss") return r.train_loss;
  if (metric == "train_acc") return r.train_acc;
  if (metric == "test_loss") return r.test_loss;
  if (metric == "test_acc") return r.test_acc;
  return r.y_exc_l1;
}

}  // namespace

void emit_curves(const std::vector<SketchRun>& runs, const std::string& metric, const fs::path& out_dir,
                 const std::vector<std::vector<ProbeResult>>* probes) {
  const auto& valid = curve_metrics();
  if (std::find(valid.begin(), valid.end(), metric) == valid.end()) {
    std::string list;
    for (const auto& m : valid) list += (list.empty() ? "" : ", ") + m;
    throw std::invalid_argument("unknown metric '" + metric + "' (valid: " + list + ")");
  }
  if (probes != nullptr && probes->size() != runs.size()) throw std::invalid_argument("probe series not aligned with runs");
  for (const auto& run : runs)
    if (!(run.config.dataset == runs.front().config.dataset))
      throw std::invalid_argument("runs " + runs.front().config.run_id + " and " + run.config.run_id +
                                  " use different datasets");

  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto rows = metrics_rows(runs[i], probes ? &(*probes)[i] : nullptr);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.sparsity < b.sparsity; });
    std::string text = "sparsity," + metric + '\n';
    for (const auto& r : rows)
      if (const auto v = metric_value(r, metric)) text += format_double(r.sparsity) + ',' + format_double(*v) + '\n';
    write_file_atomic(out_dir / (runs[i].config.run_id + '.' + metric + ".curve.csv"), text);
  }

  std::string pairs;
  for (const auto& vanilla : runs) {
    if (vanilla.config.train.lambda != 0.0) continue;
    for (const auto& l2 : runs) {
      if (l2.config.train.lambda > 0.0 && l2.config.epsilon == vanilla.config.epsilon &&
          l2.config.train.seed == vanilla.config.train.seed)
        pairs += vanilla.config.run_id + ',' + l2.config.run_id + '\n';
    }
  }
  write_file_atomic(out_dir / "pairs.txt", pairs);
}

std::string tool_version() { return SPARSE_LAB_VERSION; }

std::string manifest_text(const RunManifest& m) {
  std::ostringstream out;
  out << "run-id = " << m.run_id << '\n'
      << "config-hash = " << hash_hex(m.config_hash) << '\n'
      << "tool-version = " << m.tool_version << '\n'
      << "started = " << m.started << '\n'
      << "finished = " << m.finished << '\n'
      << "host = " << m.host << '\n';
  return out.str();
}

RunManifest parse_manifest(const std::string& text) {
  const auto kv = parse_key_values(text);
  const auto get = [&](const char* key) {
    const auto it = kv.find(key);
    return it == kv.end() ? std::string() : it->second;
  };
  RunManifest m;
  m.run_id = get("run-id");
  const std::string hash = get("config-hash");
  if (hash.empty()) throw CheckpointError("manifest has no config-hash");
  m.config_hash = std::stoull(hash, nullptr, 16);
  m.tool_version = get("tool-version");
  m.started = get("started");
  m.finished = get("finished");
  m.host = get("host");
  return m;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string host_info() {
  char name[256] = {};
  if (gethostname(name, sizeof name - 1) != 0) return "unknown";
  return name;
}

void emit_probe_csv(const std::string& run_id, const std::vector<ProbeResult>& probes, const fs::path& path) {
  std::string out =
      "run_id,round,y_exc_l1,weight_l1_masked_out,condition1_score,condition2_score,per_layer_amplification\n";
  for (const auto& p : probes) {
    std::string amps;
    for (double a : p.per_layer_amplification) amps += (amps.empty() ? "" : ";") + format_double(a);
    out += run_id + ',' + std::to_string(p.round) + ',' + format_double(p.y_exc_l1) + ',' +
           format_double(p.weight_l1_masked_out) + ',' + format_double(p.condition1_score) + ',' +
           format_double(p.condition2_score) + ',' + amps + '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace sparse_lab
