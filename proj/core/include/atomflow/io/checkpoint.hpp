#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "atomflow/nn/params.hpp"

namespace atomflow::io {

inline constexpr const char* kCheckpointFormat = "atomflow-checkpoint";
inline constexpr const char* kCheckpointVersion = "1.0";

struct CheckpointMeta {
  std::string version = kCheckpointVersion;
  nlohmann::json config = nlohmann::json::object();  // full model/run configuration
  bool ema = false;
  std::int64_t step = 0;
  nlohmann::json stamp = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();  // task-specific state, e.g. property statistics
};

/// Writes <dir>/manifest.json and <dir>/tensors.bin (little-endian float32, tensors in
/// layout order). The manifest records dtype, shape, byte offset and CRC-32 per tensor.
void save_checkpoint(const std::filesystem::path& dir, const nn::ParameterStore<float>& params,
                     const CheckpointMeta& meta);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  nn::ParameterStore<float> params;
};

/// Verifies format version, blob size and every checksum, then matches tensors against
/// `expected`. Shape or name differences raise ConfigMismatch listing each offending tensor.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const nn::ParameterLayout& expected);

/// Tensor table (name, shape, count) straight from the manifest.
nlohmann::json checkpoint_tensor_table(const std::filesystem::path& dir);

}  // namespace atomflow::io
