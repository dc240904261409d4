#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "quadsci/blocks.hpp"
#include "quadsci/weights.hpp"

namespace quadsci {

enum class Variant { kT, kS, kB };

/// Accepts t/s/b in either case; throws ConfigError otherwise.
Variant parse_variant(const std::string& name);
char variant_letter(Variant v);
std::size_t variant_channels(Variant v);  // 8, 10, 16

struct NetworkConfig {
  Variant variant = Variant::kT;
  std::size_t base_channels = 8;
  std::array<std::size_t, 4> blocks{2, 4, 4, 6};  // encoder stages 1-3, bottleneck
  std::size_t d_state = 16;
  std::size_t expand = 2;
  std::size_t d_conv = 4;
  std::size_t mlp_ratio = 4;
  std::size_t frames = 4;
  std::size_t height = 32;
  std::size_t width = 32;

  static NetworkConfig for_variant(Variant v, std::size_t frames, std::size_t height,
                                   std::size_t width);

  /// Throws ConfigError unless height and width are positive multiples of 8,
  /// every stage has at least one block and the widths are positive.
  void validate() const;

  std::size_t stage_channels(std::size_t stage) const { return base_channels << stage; }
  BlockDims block_dims(std::size_t in, std::size_t out) const;
};

struct Model {
  NetworkConfig config;
  WeightMap weights;
};

Model build(const NetworkConfig& config, std::uint64_t seed);

/// Every weight key with its shape, as `build` would create it.
std::map<std::string, VideoCube::Dims> weight_shapes(const NetworkConfig& config);

/// Module a weight key belongs to: "enc2.block3", "bottleneck.block1",
/// "dec1", "head" or "stem".
std::string weight_module(const std::string& key);

/// Feature dims after each stage, in token layout (T, H, W, C).
using ShapeLadder = std::vector<std::pair<std::string, VideoCube::Dims>>;

/// x_in is H x W x 1 x T; returns H x W x 3 x T. Throws NumericError naming
/// the layer whose output first contains a non-finite value.
ad::Var forward(ParamBinder& p, const NetworkConfig& config, ad::Var x_in,
                ShapeLadder* ladder = nullptr);
VideoCube forward(const Model& model, const VideoCube& x_in, ShapeLadder* ladder = nullptr);

std::size_t count_params(const Model& model);
std::size_t count_params(const NetworkConfig& config);

struct FlopCount {
  std::uint64_t scan = 0;   // selective scans only
  std::uint64_t other = 0;  // everything else
  std::uint64_t total() const { return scan + other; }
};

/// Closed-form FLOPs of one forward pass at H x W x T, using the same
/// per-op costs the tape records.
FlopCount count_flops(const NetworkConfig& config, std::size_t height, std::size_t width,
                      std::size_t frames);

/// 8 HWTCN + 2 HWTCN^2.
std::uint64_t attention_complexity(std::uint64_t height, std::uint64_t width, std::uint64_t frames,
                                   std::uint64_t channels, std::uint64_t state_size);

void save_weights(const Model& model, const std::filesystem::path& path);
/// Validates the file against `config`: an unknown key throws DataError,
/// a shape mismatch ShapeError naming the key, absent keys CompletenessError
/// listing them.
Model load_weights(const std::filesystem::path& path, const NetworkConfig& config);
Model model_from_weights(WeightMap weights, const NetworkConfig& config);

}  // namespace quadsci
