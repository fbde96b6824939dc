#pragma once

#include <cstdint>
#include <filesystem>

#include "memesent/model.hpp"

namespace memesent {

/// Single-file parameter archive:
///
///   bytes 0..3   magic "MSCK"
///   bytes 4..7   format version, uint32 little-endian (currently 1)
///   bytes 8..15  header length H, uint64 little-endian
///   next H bytes UTF-8 JSON header: variant, dims, hidden_size, mask_pads,
///                seed, epoch and the ordered tensor list {name, rows, cols}
///   remainder    every tensor's entries as float64 little-endian, column
///                major, in header order
struct Checkpoint {
  ModelParams params;
  int epoch = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, int epoch);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace memesent
