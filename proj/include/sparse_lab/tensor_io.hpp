#pragma once

#include "sparse_lab/params.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace sparse_lab {

// Binary tensor file:
//   "SLTN" | version u8 | config_hash u64 | record_count u32 |
//   records: name_len u32 | name | prunable u8 | rank u32 | dims u64[rank] | f64 payload
// All integers and floats little-endian; payload in row-major order.

inline constexpr std::uint8_t kTensorFileVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorFile {
  ParamSet tensors;
  std::uint64_t config_hash = 0;
};

void save_tensors(const std::filesystem::path& path, const ParamSet& tensors, std::uint64_t config_hash);
TensorFile load_tensors(const std::filesystem::path& path);

void save_mask(const std::filesystem::path& path, const Mask& mask, std::uint64_t config_hash);
/// Returns the mask and writes the stored hash to `config_hash`.
Mask load_mask(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);

/// Writes `contents` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace sparse_lab
