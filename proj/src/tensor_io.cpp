#include "sparse_lab/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace sparse_lab {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'L', 'T', 'N'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(std::string data, fs::path path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw CheckpointError("corrupt tensor file " + path_.string() + ": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("unexpected end of file");
  }
  std::string data_;
  fs::path path_;
  std::size_t pos_ = 0;
};

std::string encode(const ParamSet& tensors, std::uint64_t config_hash) {
  std::string out(kMagic, 4);
  put<std::uint8_t>(out, kTensorFileVersion);
  put<std::uint64_t>(out, config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& e : tensors.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, e.prunable ? 1 : 0);
    const auto shape = e.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (Index d : shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < e.value.size(); ++i) put<double>(out, e.value.data()[i]);
  }
  return out;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_tensors(const fs::path& path, const ParamSet& tensors, std::uint64_t config_hash) {
  write_file_atomic(path, encode(tensors, config_hash));
}

TensorFile load_tensors(const fs::path& path) {
  std::string data;
  try {
    data = read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw CheckpointError(e.what());
  }
  Reader in(std::move(data), path);
  if (in.bytes(4) != std::string(kMagic, 4)) in.fail("bad magic");
  const auto version = in.get<std::uint8_t>();
  if (version != kTensorFileVersion) in.fail("unsupported version " + std::to_string(version));

  TensorFile file;
  file.config_hash = in.get<std::uint64_t>();
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name = in.bytes(name_len);
    const bool prunable = in.get<std::uint8_t>() != 0;
    const auto rank = in.get<std::uint32_t>();
    if (rank != 1 && rank != 2) in.fail("unsupported rank " + std::to_string(rank) + " for " + name);
    Index rows = 1;
    Index cols = 0;
    if (rank == 2) rows = static_cast<Index>(in.get<std::uint64_t>());
    cols = static_cast<Index>(in.get<std::uint64_t>());
    if (rows < 0 || cols < 0 || (rows > 0 && cols > (1LL << 40) / rows)) in.fail("implausible shape for " + name);
    MatrixD value(rows, cols);
    for (Index i = 0; i < value.size(); ++i) value.data()[i] = in.get<double>();
    try {
      file.tensors.add(std::move(name), std::move(value), prunable, static_cast<int>(rank));
    } catch (const std::invalid_argument& e) {
      in.fail(e.what());
    }
  }
  if (!in.at_end()) in.fail("trailing bytes");
  return file;
}

void save_mask(const fs::path& path, const Mask& mask, std::uint64_t config_hash) {
  ParamSet tensors;
  for (const auto& e : mask.entries) tensors.add(e.name, e.keep, true, 2);
  save_tensors(path, tensors, config_hash);
}

Mask load_mask(const fs::path& path, std::uint64_t* config_hash) {
  TensorFile file = load_tensors(path);
  Mask mask;
  for (auto& e : file.tensors.entries()) {
    if (!((e.value.array() == 0.0) || (e.value.array() == 1.0)).all())
      throw CheckpointError("corrupt mask file " + path.string() + ": non-binary entry in " + e.name);
    mask.entries.push_back({e.name, std::move(e.value)});
  }
  if (config_hash != nullptr) *config_hash = file.config_hash;
  return mask;
}

}  // namespace sparse_lab
