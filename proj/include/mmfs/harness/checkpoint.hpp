#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>

#include "mmfs/harness/config.hpp"
#include "mmfs/harness/model.hpp"

namespace mmfs {

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'F', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything besides the parameter values that a checkpoint records.
struct CheckpointHeader {
  ModelConfig model{};
  std::uint64_t seed = 0;
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;
  Precision precision = Precision::Float32;
  std::size_t epoch = 0;
};

struct LoadedCheckpoint {
  CheckpointHeader header;
  std::unique_ptr<MultiModalModel> model;
};

/// Binary layout (little endian): magic "MMFSCKPT", u32 version, u64 d,
/// u64 header length + JSON header, u64 parameter count, then per parameter
/// in registry order: u64 name length + name, u64 rank, rank × u64 dims,
/// numel × f64 values.
void save_checkpoint(const std::filesystem::path& path, const MultiModalModel& model, const CheckpointHeader& header);

/// Rebuilds the model from the header and restores every parameter bitwise.
/// Throws DataError on a malformed or incompatible file.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmfs
