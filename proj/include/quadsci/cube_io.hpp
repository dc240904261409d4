#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "quadsci/video_cube.hpp"

namespace quadsci {

// VCUBE layout:
//   bytes 0-3  magic "VCUB"
//   byte  4    version (1)
//   byte  5    dtype code (0 = float32, 1 = float64)
//   byte  6    ndim (1-4)
//   byte  7    reserved, 0
//   ndim x u32 little-endian extents
//   payload, row-major, last extent fastest, little-endian
enum class CubeDtype : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

std::vector<std::uint8_t> encode_cube(const VideoCube& cube, CubeDtype dtype = CubeDtype::kFloat64);
VideoCube decode_cube(const std::vector<std::uint8_t>& bytes);

void save_cube(const VideoCube& cube, const std::filesystem::path& path,
               CubeDtype dtype = CubeDtype::kFloat64);
VideoCube load_cube(const std::filesystem::path& path);

/// Writes frame `t` of an H x W x C x T cube (C = 1 or 3) as binary PPM (P6,
/// maxval 255). Values are clamped to [0, 1] before scaling; single-channel
/// frames are replicated to gray.
void write_ppm_frame(const VideoCube& cube, std::size_t t, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace quadsci
