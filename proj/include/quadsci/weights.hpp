#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "quadsci/autodiff.hpp"
#include "quadsci/video_cube.hpp"

namespace quadsci {

/// Learnable arrays keyed by canonical dotted path (e.g. "enc1.block1.proj.weight").
using WeightMap = std::map<std::string, VideoCube>;

// VWTS layout: magic "VWTS"; u8 version 1; u32 entry count; per entry u16 key
// length, UTF-8 key, u8 ndim, ndim x u32 extents, float64 payload row-major.
// All integers and floats little-endian. Entries are written in key order.
std::vector<std::uint8_t> encode_weights(const WeightMap& weights);
WeightMap decode_weights(const std::vector<std::uint8_t>& bytes);
void save_weight_file(const WeightMap& weights, const std::filesystem::path& path);
WeightMap load_weight_file(const std::filesystem::path& path);

std::size_t count_elements(const WeightMap& weights);

/// Hands out tape parameters for named weights, one node per key.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, const WeightMap& weights) : tape_(tape), weights_(weights) {}

  /// Throws CompletenessError when the key is absent.
  ad::Var operator()(const std::string& key);
  ad::Tape& tape() { return tape_; }
  const WeightMap& weights() const { return weights_; }
  const VideoCube& value(const std::string& key) const;

 private:
  ad::Tape& tape_;
  const WeightMap& weights_;
  std::map<std::string, ad::Var> bound_;
};

}  // namespace quadsci
