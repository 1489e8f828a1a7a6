#include "sparse_lab/config.hpp"

#include "sparse_lab/rng.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

namespace sparse_lab {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long u = std::stoull(v, &used);
      if (used == v.size()) return u;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::string body = v;
  if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::istringstream in(body);
  std::string token;
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (!token.empty()) out.push_back(static_cast<int>(to_int(key, token)));
  }
  return out;
}

std::string join(const std::vector<int>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(values[i]);
  }
  return s;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // blank or section header
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    out[key] = value;
  }
  return out;
}

void SketchConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run-id: must not be empty");
  for (char c : run_id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
      throw ConfigError("run-id: only letters, digits, '-', '_' and '.' are allowed");
  if (dataset.kind != "mnist" && dataset.kind != "blobs")
    throw ConfigError("dataset: expected mnist or blobs, got '" + dataset.kind + "'");
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0))
    throw ConfigError("train-fraction: must be in (0, 1)");
  if (dataset.kind == "blobs" && (dataset.blob_per_class < 1 || dataset.blob_classes < 1 || dataset.blob_dim < 1))
    throw ConfigError("blob-per-class, blob-classes, blob-dim: must be >= 1");
  try {
    arch.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(t_iter > 0.0 && t_iter < 1.0)) throw ConfigError("t-iter: must be in (0, 1), got " + format_double(t_iter));
  if (!(t_end > 0.0 && t_end < 1.0)) throw ConfigError("t-end: must be in (0, 1), got " + format_double(t_end));
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon: must be in [0, 1], got " + format_double(epsilon));
}

std::string SketchConfig::to_text() const {
  std::ostringstream out;
  const auto line = [&](const char* key, const std::string& value) { out << key << " = " << value << '\n'; };
  line("run-id", run_id);
  line("dataset", dataset.kind);
  line("data-dir", dataset.data_dir);
  line("train-images", dataset.train_images);
  line("train-labels", dataset.train_labels);
  line("test-images", dataset.test_images);
  line("test-labels", dataset.test_labels);
  line("limit", std::to_string(dataset.limit));
  line("train-fraction", format_double(dataset.train_fraction));
  line("split-seed", std::to_string(dataset.split_seed));
  line("blob-per-class", std::to_string(dataset.blob_per_class));
  line("blob-classes", std::to_string(dataset.blob_classes));
  line("blob-dim", std::to_string(dataset.blob_dim));
  line("blob-separation", format_double(dataset.blob_separation));
  line("blob-seed", std::to_string(dataset.blob_seed));
  line("arch", arch.to_string());
  line("epochs", std::to_string(train.epochs));
  line("lr", format_double(train.lr));
  line("momentum", format_double(train.momentum));
  line("lambda", format_double(train.lambda));
  line("batch-size", std::to_string(train.batch_size));
  line("milestones", join(train.lr_milestones));
  line("gamma", format_double(train.lr_gamma));
  line("seed", std::to_string(train.seed));
  line("t-iter", format_double(t_iter));
  line("t-end", format_double(t_end));
  line("scope", to_string(scope));
  line("epsilon", format_double(epsilon));
  line("noise-seed", std::to_string(noise_seed));
  line("timing", record_timing ? "true" : "false");
  return out.str();
}

SketchConfig SketchConfig::from_map(const std::map<std::string, std::string>& values) {
  SketchConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"run-id", [&](auto&, auto& v) { c.run_id = v; }},
      {"dataset", [&](auto&, auto& v) { c.dataset.kind = v; }},
      {"data-dir", [&](auto&, auto& v) { c.dataset.data_dir = v; }},
      {"train-images", [&](auto&, auto& v) { c.dataset.train_images = v; }},
      {"train-labels", [&](auto&, auto& v) { c.dataset.train_labels = v; }},
      {"test-images", [&](auto&, auto& v) { c.dataset.test_images = v; }},
      {"test-labels", [&](auto&, auto& v) { c.dataset.test_labels = v; }},
      {"limit", [&](auto& k, auto& v) { c.dataset.limit = to_u64(k, v); }},
      {"train-fraction", [&](auto& k, auto& v) { c.dataset.train_fraction = to_double(k, v); }},
      {"split-seed", [&](auto& k, auto& v) { c.dataset.split_seed = to_u64(k, v); }},
      {"blob-per-class", [&](auto& k, auto& v) { c.dataset.blob_per_class = to_u64(k, v); }},
      {"blob-classes", [&](auto& k, auto& v) { c.dataset.blob_classes = static_cast<int>(to_int(k, v)); }},
      {"blob-dim", [&](auto& k, auto& v) { c.dataset.blob_dim = static_cast<Index>(to_int(k, v)); }},
      {"blob-separation", [&](auto& k, auto& v) { c.dataset.blob_separation = to_double(k, v); }},
      {"blob-seed", [&](auto& k, auto& v) { c.dataset.blob_seed = to_u64(k, v); }},
      {"arch",
       [&](auto& k, auto& v) {
         try {
           c.arch = MlpArchitecture::parse(v);
         } catch (const std::exception& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"epochs", [&](auto& k, auto& v) { c.train.epochs = static_cast<int>(to_int(k, v)); }},
      {"lr", [&](auto& k, auto& v) { c.train.lr = to_double(k, v); }},
      {"momentum", [&](auto& k, auto& v) { c.train.momentum = to_double(k, v); }},
      {"lambda", [&](auto& k, auto& v) { c.train.lambda = to_double(k, v); }},
      {"batch-size", [&](auto& k, auto& v) { c.train.batch_size = static_cast<int>(to_int(k, v)); }},
      {"milestones", [&](auto& k, auto& v) { c.train.lr_milestones = to_int_list(k, v); }},
      {"gamma", [&](auto& k, auto& v) { c.train.lr_gamma = to_double(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.train.seed = to_u64(k, v); }},
      {"t-iter", [&](auto& k, auto& v) { c.t_iter = to_double(k, v); }},
      {"t-end", [&](auto& k, auto& v) { c.t_end = to_double(k, v); }},
      {"scope",
       [&](auto& k, auto& v) {
         try {
           c.scope = parse_prune_scope(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"epsilon", [&](auto& k, auto& v) { c.epsilon = to_double(k, v); }},
      {"noise-seed", [&](auto& k, auto& v) { c.noise_seed = to_u64(k, v); }},
      {"timing", [&](auto& k, auto& v) { c.record_timing = to_bool(k, v); }},
  };
  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  return c;
}

SketchConfig SketchConfig::from_text(const std::string& text) { return from_map(parse_key_values(text)); }

std::uint64_t SketchConfig::hash() const { return fnv1a64(to_text()); }

namespace {

fs::path resolve(const std::string& explicit_path, const std::string& dir, const char* default_name) {
  if (!explicit_path.empty()) return explicit_path;
  if (dir.empty()) return {};
  return fs::path(dir) / default_name;
}

}  // namespace

PreparedData prepare_data(const SketchConfig& cfg) {
  const DatasetSpec& spec = cfg.dataset;
  LabeledDataset train;
  LabeledDataset test;
  if (spec.kind == "mnist") {
    const auto limit = spec.limit > 0 ? std::optional<std::size_t>(spec.limit) : std::nullopt;
    const fs::path train_images = resolve(spec.train_images, spec.data_dir, "train-images-idx3-ubyte");
    const fs::path train_labels = resolve(spec.train_labels, spec.data_dir, "train-labels-idx1-ubyte");
    const fs::path test_images = resolve(spec.test_images, spec.data_dir, "t10k-images-idx3-ubyte");
    const fs::path test_labels = resolve(spec.test_labels, spec.data_dir, "t10k-labels-idx1-ubyte");
    if (train_images.empty() || train_labels.empty())
      throw ConfigError("dataset mnist needs data-dir or train-images/train-labels");
    LabeledDataset pool = load_idx(train_images, train_labels, limit);
    if (!test_images.empty() && fs::exists(test_images) && fs::exists(test_labels)) {
      train = std::move(pool);
      train.role = SplitRole::train;
      test = load_idx(test_images, test_labels);
      test.role = SplitRole::test;
    } else {
      std::tie(train, test) = split(pool, spec.train_fraction, spec.split_seed);
    }
  } else {
    const LabeledDataset pool = synth_blobs(spec.blob_per_class, spec.blob_classes, spec.blob_dim,
                                            spec.blob_separation, spec.blob_seed);
    std::tie(train, test) = split(pool, spec.train_fraction, spec.split_seed);
  }
  if (train.dim() != cfg.arch.input_dim())
    throw ConfigError("arch: input width " + std::to_string(cfg.arch.input_dim()) + " does not match data width " +
                      std::to_string(train.dim()));
  if (train.num_classes > cfg.arch.num_classes())
    throw ConfigError("arch: " + std::to_string(cfg.arch.num_classes()) + " outputs for " +
                      std::to_string(train.num_classes) + " classes");
  auto [noisy, record] = inject_symmetric_noise(train, cfg.epsilon, cfg.noise_seed);
  return {std::move(noisy), std::move(test), std::move(record)};
}

}  // namespace sparse_lab
