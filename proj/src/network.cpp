#include "quadsci/network.hpp"

#include <cctype>
#include <cmath>

#include "quadsci/error.hpp"
#include "quadsci/flops.hpp"
#include "quadsci/ops.hpp"
#include "quadsci/rng.hpp"

namespace quadsci {
namespace {

using ad::Var;

std::string block_prefix(const std::string& stage, std::size_t k) {
  return stage + ".block" + std::to_string(k) + ".";
}

std::string enc_name(std::size_t i) { return "enc" + std::to_string(i); }
std::string dec_name(std::size_t i) { return "dec" + std::to_string(i); }

void put_uniform(WeightMap& w, const std::string& key, VideoCube::Dims dims, std::size_t fan_in,
                 std::uint64_t seed) {
  VideoCube v(std::move(dims));
  rng::Stream s(rng::derive(seed, key));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : v.values()) x = s.uniform(-bound, bound);
  w[key] = std::move(v);
}

void put_projection(WeightMap& w, const std::string& key, VideoCube::Dims dims,
                    std::uint64_t seed) {
  VideoCube v(std::move(dims));
  rng::Stream s(rng::derive(seed, key));
  for (auto& x : v.values()) x = s.truncated_normal(kProjectionInitSigma);
  w[key] = std::move(v);
}

void put_zero(WeightMap& w, const std::string& key, VideoCube::Dims dims) {
  w[key] = VideoCube(std::move(dims));
}

// Encoder stage i (1-based) runs at width C * 2^(i-1); its last block
// doubles the width.
std::pair<std::size_t, std::size_t> enc_block_io(const NetworkConfig& c, std::size_t stage,
                                                 std::size_t k) {
  const std::size_t in = c.stage_channels(stage - 1);
  return {in, k == c.blocks[stage - 1] ? in * 2 : in};
}

Var checked(Var v, const std::string& layer, ShapeLadder* ladder) {
  if (!v.value().all_finite()) throw NumericError("non-finite activation after " + layer);
  if (ladder != nullptr) ladder->emplace_back(layer, v.dims());
  return v;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name.size() == 1) {
    switch (std::tolower(static_cast<unsigned char>(name[0]))) {
      case 't': return Variant::kT;
      case 's': return Variant::kS;
      case 'b': return Variant::kB;
      default: break;
    }
  }
  throw ConfigError("unknown variant '" + name + "' (expected t, s or b)");
}

char variant_letter(Variant v) {
  switch (v) {
    case Variant::kT: return 'T';
    case Variant::kS: return 'S';
    case Variant::kB: return 'B';
  }
  return '?';
}

std::size_t variant_channels(Variant v) {
  switch (v) {
    case Variant::kT: return 8;
    case Variant::kS: return 10;
    case Variant::kB: return 16;
  }
  return 8;
}

NetworkConfig NetworkConfig::for_variant(Variant v, std::size_t frames, std::size_t height,
                                         std::size_t width) {
  NetworkConfig c;
  c.variant = v;
  c.base_channels = variant_channels(v);
  c.frames = frames;
  c.height = height;
  c.width = width;
  c.validate();
  return c;
}

void NetworkConfig::validate() const {
  if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("spatial dims " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be positive multiples of 8");
  }
  if (frames == 0) throw ConfigError("frames must be >= 1");
  for (std::size_t b : blocks) {
    if (b == 0) throw ConfigError("every stage needs at least one block");
  }
  if (base_channels == 0 || d_state == 0 || expand == 0 || d_conv == 0 || mlp_ratio == 0) {
    throw ConfigError("network widths must be positive");
  }
}

BlockDims NetworkConfig::block_dims(std::size_t in, std::size_t out) const {
  BlockDims d;
  d.input_dim = in;
  d.output_dim = out;
  d.d_state = d_state;
  d.d_conv = d_conv;
  d.expand = expand;
  d.mlp_ratio = mlp_ratio;
  return d;
}

std::string weight_module(const std::string& key) {
  const auto first = key.find('.');
  if (first == std::string::npos) return key;
  if (key.compare(first + 1, 5, "block") == 0) return key.substr(0, key.find('.', first + 1));
  return key.substr(0, first);
}

Model build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Model m{config, {}};
  WeightMap& w = m.weights;
  const std::size_t c = config.base_channels;

  put_uniform(w, "stem.dwconv.weight", {1, 27}, 27, seed);
  put_zero(w, "stem.dwconv.bias", {1});
  put_uniform(w, "stem.pw.weight", {1, 1, c}, 1, seed);
  put_zero(w, "stem.pw.bias", {c});

  for (std::size_t i = 1; i <= 3; ++i) {
    for (std::size_t k = 1; k <= config.blocks[i - 1]; ++k) {
      const auto [in, out] = enc_block_io(config, i, k);
      init_block_weights(w, block_prefix(enc_name(i), k), config.block_dims(in, out), seed);
    }
  }
  const std::size_t deep = config.stage_channels(3);
  for (std::size_t k = 1; k <= config.blocks[3]; ++k) {
    init_block_weights(w, block_prefix("bottleneck", k), config.block_dims(deep, deep), seed);
  }
  for (std::size_t i = 1; i <= 3; ++i) {
    const std::size_t ch = config.stage_channels(4 - i);
    const std::string d = dec_name(i) + ".";
    put_uniform(w, d + "dw.weight", {ch, 27}, 27, seed);
    put_zero(w, d + "dw.bias", {ch});
    put_uniform(w, d + "pw.weight", {1, ch, ch}, ch, seed);
    put_zero(w, d + "pw.bias", {ch});
    put_projection(w, d + "up.weight", {ch / 2, ch}, seed);
    put_zero(w, d + "up.bias", {ch / 2});
  }
  put_uniform(w, "head.conv1.weight", {27, c, c}, 27 * c, seed);
  put_zero(w, "head.conv1.bias", {c});
  put_uniform(w, "head.conv2.weight", {27, c, c}, 27 * c, seed);
  put_zero(w, "head.conv2.bias", {c});
  put_uniform(w, "head.conv3.weight", {1, c, 3}, c, seed);
  put_zero(w, "head.conv3.bias", {3});
  return m;
}

std::map<std::string, VideoCube::Dims> weight_shapes(const NetworkConfig& config) {
  std::map<std::string, VideoCube::Dims> shapes;
  for (const auto& [key, value] : build(config, 0).weights) shapes[key] = value.dims();
  return shapes;
}

Var forward(ParamBinder& p, const NetworkConfig& config, Var x_in, ShapeLadder* ladder) {
  const VideoCube& xv = x_in.value();
  if (xv.rank() != 4 || xv.dim(2) != 1) {
    throw ShapeError("network input must be H x W x 1 x T, got " + dims_to_string(xv.dims()));
  }
  const std::size_t h = xv.dim(0), w = xv.dim(1), t = xv.dim(3);
  if (h % 8 != 0 || w % 8 != 0) {
    throw ShapeError("network input " + dims_to_string(xv.dims()) +
                     " needs H and W divisible by 8");
  }
  if (t != config.frames) {
    throw ShapeError("network input has " + std::to_string(t) + " frames, config expects " +
                     std::to_string(config.frames));
  }

  Var f = ad::permute(x_in, {3, 0, 1, 2});
  f = ad::conv3d_depthwise(f, p("stem.dwconv.weight"), p("stem.dwconv.bias"));
  f = checked(ad::conv3d(f, p("stem.pw.weight"), p("stem.pw.bias")), "stem", ladder);

  std::array<Var, 3> skips;
  for (std::size_t i = 1; i <= 3; ++i) {
    for (std::size_t k = 1; k <= config.blocks[i - 1]; ++k) {
      const std::string pre = block_prefix(enc_name(i), k);
      f = checked(blocks::residual_mamba_block(p, pre, f), pre + "out", ladder);
    }
    f = checked(ad::max_pool2(f), enc_name(i), ladder);
    skips[i - 1] = f;
  }
  for (std::size_t k = 1; k <= config.blocks[3]; ++k) {
    const std::string pre = block_prefix("bottleneck", k);
    f = checked(blocks::residual_mamba_block(p, pre, f), pre + "out", ladder);
  }

  for (std::size_t i = 1; i <= 3; ++i) {
    const std::string d = dec_name(i);
    const Var skip = skips[3 - i];
    if (skip.dims() != f.dims()) {
      throw ShapeError(d + ": skip feature " + dims_to_string(skip.dims()) +
                       " does not match decoder feature " + dims_to_string(f.dims()));
    }
    f = ad::add(f, skip);
    Var conv = ad::conv3d_depthwise(f, p(d + ".dw.weight"), p(d + ".dw.bias"));
    conv = ad::conv3d(conv, p(d + ".pw.weight"), p(d + ".pw.bias"));
    f = ad::gelu(ad::add(f, conv));
    f = ad::upsample2(ad::linear(f, p(d + ".up.weight"), p(d + ".up.bias")));
    f = checked(f, d, ladder);
  }

  f = ad::gelu(ad::conv3d(f, p("head.conv1.weight"), p("head.conv1.bias")));
  f = ad::gelu(ad::conv3d(f, p("head.conv2.weight"), p("head.conv2.bias")));
  f = checked(ad::conv3d(f, p("head.conv3.weight"), p("head.conv3.bias")), "head", ladder);
  return ad::permute(f, {1, 2, 3, 0});
}

VideoCube forward(const Model& model, const VideoCube& x_in, ShapeLadder* ladder) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  ParamBinder p(tape, model.weights);
  return forward(p, model.config, tape.constant(x_in), ladder).value();
}

std::size_t count_params(const Model& model) { return count_elements(model.weights); }

std::size_t count_params(const NetworkConfig& config) {
  std::size_t n = 0;
  for (const auto& [key, dims] : weight_shapes(config)) n += product(dims);
  return n;
}

namespace {

void block_flops(FlopCount& fc, const BlockDims& d, std::uint64_t tokens) {
  using namespace flops;
  const u64 c = d.input_dim, co = d.output_dim, sc = d.scan_channels(), hid = d.hidden_dim();
  const u64 cr = d.attention_dim(), lsc = tokens * sc;
  u64 o = 0;
  o += layer_norm(tokens, c);
  o += 2 * (linear(tokens, c, sc) + elementwise(lsc));
  for (int b = 0; b < 3; ++b) {
    o += conv1d_causal(tokens, sc, d.d_conv) + elementwise(lsc) + layer_norm(tokens, sc);
    fc.scan += selective_scan(tokens, sc, d.d_state);
  }
  o += 3 * elementwise(lsc);  // two branch sums and the gate
  o += linear(tokens, sc, c);
  o += 2 * elementwise(tokens * c);
  o += layer_norm(tokens, c);
  o += linear(tokens, c, hid) + elementwise(tokens * hid);
  o += conv3d_depthwise(tokens, 27, hid) + elementwise(tokens * hid);
  o += linear(tokens, hid, c);
  o += 2 * elementwise(tokens * c);
  o += linear(tokens, c, co);
  o += layer_norm(tokens, co);
  o += reduction(tokens * co) + linear(1, co, cr) + elementwise(cr) + linear(1, cr, co) +
       elementwise(co);
  o += elementwise(tokens * co) + conv3d(tokens, 27, co, co);
  o += 2 * elementwise(tokens * co);
  fc.other += o;
}

}  // namespace

FlopCount count_flops(const NetworkConfig& config, std::size_t height, std::size_t width,
                      std::size_t frames) {
  using namespace flops;
  NetworkConfig c = config;
  c.height = height;
  c.width = width;
  c.frames = frames;
  c.validate();
  FlopCount fc;
  const u64 base = c.base_channels;
  u64 tokens = static_cast<u64>(height) * width * frames;
  fc.other += conv3d_depthwise(tokens, 27, 1) + conv3d(tokens, 1, 1, base);

  for (std::size_t i = 1; i <= 3; ++i) {
    u64 out = 0;
    for (std::size_t k = 1; k <= c.blocks[i - 1]; ++k) {
      const auto [in, o] = enc_block_io(c, i, k);
      block_flops(fc, c.block_dims(in, o), tokens);
      out = o;
    }
    tokens /= 4;
    fc.other += max_pool2(tokens * out);
  }
  const std::size_t deep = c.stage_channels(3);
  for (std::size_t k = 1; k <= c.blocks[3]; ++k) block_flops(fc, c.block_dims(deep, deep), tokens);

  for (std::size_t i = 1; i <= 3; ++i) {
    const u64 ch = c.stage_channels(4 - i);
    fc.other += elementwise(tokens * ch) + conv3d_depthwise(tokens, 27, ch) +
                conv3d(tokens, 1, ch, ch) + 2 * elementwise(tokens * ch) +
                linear(tokens, ch, ch / 2);
    tokens *= 4;
  }
  fc.other += 2 * (conv3d(tokens, 27, base, base) + elementwise(tokens * base)) +
              conv3d(tokens, 1, base, 3);
  return fc;
}

std::uint64_t attention_complexity(std::uint64_t height, std::uint64_t width, std::uint64_t frames,
                                   std::uint64_t channels, std::uint64_t state_size) {
  const std::uint64_t hwtc = height * width * frames * channels;
  return 8 * hwtc * state_size + 2 * hwtc * state_size * state_size;
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  save_weight_file(model.weights, path);
}

Model model_from_weights(WeightMap weights, const NetworkConfig& config) {
  const auto shapes = weight_shapes(config);
  for (const auto& [key, value] : weights) {
    auto it = shapes.find(key);
    if (it == shapes.end()) throw DataError("unknown weight key '" + key + "'");
    if (it->second != value.dims()) {
      throw ShapeError("weight '" + key + "' has shape " + dims_to_string(value.dims()) +
                       ", expected " + dims_to_string(it->second));
    }
  }
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& [key, dims] : shapes) {
    if (weights.count(key) != 0) continue;
    if (n_missing++ < 20) missing += (missing.empty() ? "" : ", ") + key;
  }
  if (n_missing > 0) {
    if (n_missing > 20) missing += ", ... (" + std::to_string(n_missing) + " total)";
    throw CompletenessError("missing weights: " + missing);
  }
  return Model{config, std::move(weights)};
}

Model load_weights(const std::filesystem::path& path, const NetworkConfig& config) {
  return model_from_weights(load_weight_file(path), config);
}

}  // namespace quadsci
