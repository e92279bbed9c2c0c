#pragma once

#include <cstdint>
#include <filesystem>

#include "diffetm/model.hpp"

namespace diffetm::trainer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian):
//   "DETMCKPT" u32 version
//   config: u32 K, u32 E, u32 H, u32 T, f64 beta_0, f64 beta_T, f64 lambda,
//           u32 mode, u64 seed
//   u32 V, u32 param_count
//   per parameter: u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f32
void save_checkpoint(const model::DiffEtm& model, const std::filesystem::path& path);

/// Throws CorruptCheckpoint on bad magic, unsupported version, truncation or
/// a parameter set that does not match the stored config.
model::DiffEtm load_checkpoint(const std::filesystem::path& path);

}  // namespace diffetm::trainer
