#include "quadsci/cube_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "quadsci/error.hpp"
#include "quadsci/le_bytes.hpp"

namespace quadsci {
namespace {

constexpr char kMagic[4] = {'V', 'C', 'U', 'B'};
constexpr std::uint8_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_cube(const VideoCube& cube, CubeDtype dtype) {
  if (cube.rank() < 1 || cube.rank() > 4) throw ShapeError("VCUBE supports rank 1-4");
  std::vector<std::uint8_t> out;
  const std::size_t width = dtype == CubeDtype::kFloat32 ? 4 : 8;
  out.reserve(8 + 4 * cube.rank() + width * cube.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(dtype));
  out.push_back(static_cast<std::uint8_t>(cube.rank()));
  out.push_back(0);
  for (std::size_t d : cube.dims()) le::put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : cube.data()) {
    if (dtype == CubeDtype::kFloat32) {
      le::put_f32(out, static_cast<float>(v));
    } else {
      le::put_f64(out, v);
    }
  }
  return out;
}

VideoCube decode_cube(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a VCUBE file (bad magic)");
  }
  if (bytes[4] != kVersion) {
    throw FormatError("unsupported VCUBE version " + std::to_string(bytes[4]));
  }
  const std::uint8_t dtype = bytes[5];
  if (dtype > 1) throw FormatError("unknown VCUBE dtype code " + std::to_string(dtype));
  const std::size_t ndim = bytes[6];
  if (ndim < 1 || ndim > 4) throw FormatError("VCUBE ndim must be 1-4, got " + std::to_string(ndim));
  if (bytes[7] != 0) throw FormatError("VCUBE reserved byte must be 0");
  if (bytes.size() < 8 + 4 * ndim) throw TruncationError("VCUBE header truncated");

  le::Reader rd(bytes, 8);
  VideoCube::Dims dims(ndim);
  for (auto& d : dims) {
    d = rd.u32();
    if (d == 0) throw FormatError("VCUBE extent of 0 in header");
  }
  const std::size_t count = product(dims);
  const std::size_t width = dtype == 0 ? 4 : 8;
  const std::size_t payload = bytes.size() - rd.offset();
  if (payload != count * width) {
    throw TruncationError("VCUBE header declares " + dims_to_string(dims) + " = " +
                          std::to_string(count) + " values but payload holds " +
                          std::to_string(payload / width) + (payload % width ? "+" : "") +
                          " values");
  }
  std::vector<double> values(count);
  for (auto& v : values) {
    v = dtype == 0 ? static_cast<double>(rd.f32()) : rd.f64();
    if (!std::isfinite(v)) throw DataError("VCUBE payload contains a non-finite value");
  }
  return VideoCube(std::move(dims), std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void save_cube(const VideoCube& cube, const std::filesystem::path& path, CubeDtype dtype) {
  write_file_bytes(path, encode_cube(cube, dtype));
}

VideoCube load_cube(const std::filesystem::path& path) { return decode_cube(read_file_bytes(path)); }

void write_ppm_frame(const VideoCube& cube, std::size_t t, const std::filesystem::path& path) {
  const auto d = as_rank4(cube.dims());
  const std::size_t h = d[0], w = d[1], c = d[2], frames = d[3];
  if (c != 1 && c != 3) throw ShapeError("PPM export needs 1 or 3 channels, got " + std::to_string(c));
  if (t >= frames) throw ShapeError("frame index out of range");
  std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + h * w * 3);
  const auto& v = cube.values();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t ch = c == 1 ? 0 : k;
        const double val = std::clamp(v[((y * w + x) * c + ch) * frames + t], 0.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(val * 255.0)));
      }
    }
  }
  write_file_bytes(path, bytes);
}

}  // namespace quadsci
