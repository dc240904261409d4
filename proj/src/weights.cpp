#include "quadsci/weights.hpp"

#include <cmath>
#include <cstring>

#include "quadsci/cube_io.hpp"
#include "quadsci/error.hpp"
#include "quadsci/le_bytes.hpp"

namespace quadsci {
namespace {
constexpr char kMagic[4] = {'V', 'W', 'T', 'S'};
constexpr std::uint8_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_weights(const WeightMap& weights) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  le::put_u32(out, static_cast<std::uint32_t>(weights.size()));
  for (const auto& [key, value] : weights) {
    if (key.size() > 0xFFFF) throw FormatError("weight key too long: " + key.substr(0, 64));
    le::put_u16(out, static_cast<std::uint16_t>(key.size()));
    out.insert(out.end(), key.begin(), key.end());
    out.push_back(static_cast<std::uint8_t>(value.rank()));
    for (std::size_t d : value.dims()) le::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : value.data()) le::put_f64(out, v);
  }
  return out;
}

WeightMap decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a VWTS file (bad magic)");
  }
  if (bytes[4] != kVersion) throw FormatError("unsupported VWTS version " + std::to_string(bytes[4]));
  le::Reader rd(bytes, 5);
  const std::uint32_t count = rd.u32();
  WeightMap weights;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string key = rd.str(rd.u16());
    const std::size_t ndim = rd.u8();
    if (ndim < 1 || ndim > 4) throw FormatError("VWTS entry '" + key + "' has ndim " + std::to_string(ndim));
    VideoCube::Dims dims(ndim);
    for (auto& d : dims) {
      d = rd.u32();
      if (d == 0) throw FormatError("VWTS entry '" + key + "' has a zero extent");
    }
    std::vector<double> values(product(dims));
    if (rd.remaining() < values.size() * 8) {
      throw TruncationError("VWTS entry '" + key + "' payload truncated");
    }
    for (auto& v : values) {
      v = rd.f64();
      if (!std::isfinite(v)) throw DataError("VWTS entry '" + key + "' holds a non-finite value");
    }
    if (!weights.emplace(key, VideoCube(std::move(dims), std::move(values))).second) {
      throw FormatError("duplicate VWTS key '" + key + "'");
    }
  }
  if (rd.remaining() != 0) throw FormatError("trailing bytes after VWTS entries");
  return weights;
}

void save_weight_file(const WeightMap& weights, const std::filesystem::path& path) {
  write_file_bytes(path, encode_weights(weights));
}

WeightMap load_weight_file(const std::filesystem::path& path) {
  return decode_weights(read_file_bytes(path));
}

std::size_t count_elements(const WeightMap& weights) {
  std::size_t n = 0;
  for (const auto& [key, value] : weights) n += value.size();
  return n;
}

const VideoCube& ParamBinder::value(const std::string& key) const {
  auto it = weights_.find(key);
  if (it == weights_.end()) throw CompletenessError("missing weight '" + key + "'");
  return it->second;
}

ad::Var ParamBinder::operator()(const std::string& key) {
  if (auto it = bound_.find(key); it != bound_.end()) return it->second;
  ad::Var v = tape_.parameter(key, value(key));
  bound_.emplace(key, v);
  return v;
}

}  // namespace quadsci
