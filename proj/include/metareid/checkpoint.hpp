#pragma once

// Binary checkpoint:
//   "CRID" | u32 version (1) | u32 array count
//   per array: u16 name length | name | u8 dtype (0 f32, 1 f64) | u8 rank |
//              rank x u32 dims | row-major payload
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "metareid/model.hpp"

namespace metareid {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct CheckpointArray {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;  // little-endian element bytes

  [[nodiscard]] std::size_t numel() const;
  bool operator==(const CheckpointArray&) const = default;
};

struct Checkpoint {
  std::vector<CheckpointArray> arrays;

  [[nodiscard]] const CheckpointArray& at(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws ValidationError on bad magic, version, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Weights under their ParamSet names followed by "mlr.running_mean" and
/// "mlr.running_var".
template <typename T>
Checkpoint to_checkpoint(const ModelParams<T>& params);

/// Converts between f32 and f64 storage as needed.
template <typename T>
ModelParams<T> params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace metareid
