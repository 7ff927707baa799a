#pragma once

// Self-describing container formats.
//
// .evv volume: one ASCII header line "EVV1 H W D sx sy sz dtype\n"
//   followed by H*W*D raw intensity bytes (row-major within slice, slices
//   outermost). Only dtype "u8" is defined.
//
// .evm mask: ASCII header "EVM1 H W D\n" followed, for each slice t in
//   [0, D), by a little-endian u32 run count and that many (start, len)
//   u32 pairs of in-slice linear pixel indices.

#include <filesystem>

#include "evanchor/mask.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

void write_volume(const Volume& vol, const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);

void write_mask(const VoxelMask& mask, const std::filesystem::path& path);
VoxelMask read_mask(const std::filesystem::path& path);

}  // namespace evanchor
