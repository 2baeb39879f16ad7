#pragma once

#include <filesystem>
#include <string>

#include "ig3d/grid.hpp"

namespace ig3d {

/// On-disk grid layout:
///
///   offset 0   "IG3D"
///   offset 4   version byte (1)
///   offset 5   header length L, uint32 little-endian
///   offset 9   L bytes of UTF-8 JSON: resolution, bbox, activations
///   then       density_raw, one float32 LE per vertex (x-fastest)
///   then       color_raw, three float32 LE per vertex, interleaved r,g,b
///
/// Values are stored as float32; loading widens them back to double, so a
/// load/save cycle is bit-stable.
inline constexpr char kCheckpointMagic[4] = {'I', 'G', '3', 'D'};
inline constexpr unsigned char kCheckpointVersion = 1;

void save_checkpoint(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid load_checkpoint(const std::filesystem::path& path);

/// Serialized bytes of a checkpoint, for in-memory comparisons.
std::string checkpoint_bytes(const VoxelGrid& grid);
VoxelGrid checkpoint_from_bytes(const std::string& bytes);

/// Round every value through float32, matching what a save/load cycle yields.
VoxelGrid quantize_to_f32(const VoxelGrid& grid);

}  // namespace ig3d
