#include "quadsci/blocks.hpp"

#include <cmath>

#include "quadsci/error.hpp"
#include "quadsci/ops.hpp"
#include "quadsci/rng.hpp"
#include "quadsci/ssm.hpp"

namespace quadsci {
namespace {

using ad::Var;

constexpr const char* kBranches[] = {"sf", "sb", "t"};

struct Initializer {
  WeightMap& weights;
  const std::string& prefix;
  std::uint64_t seed;

  rng::Stream stream(const std::string& key) const { return rng::Stream(rng::derive(seed, prefix + key)); }

  void put(const std::string& key, VideoCube v) { weights[prefix + key] = std::move(v); }

  void projection(const std::string& key, VideoCube::Dims dims) {
    VideoCube v(std::move(dims));
    auto s = stream(key);
    for (auto& x : v.values()) x = s.truncated_normal(kProjectionInitSigma);
    put(key, std::move(v));
  }
  void conv(const std::string& key, VideoCube::Dims dims, std::size_t fan_in) {
    VideoCube v(std::move(dims));
    auto s = stream(key);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : v.values()) x = s.uniform(-bound, bound);
    put(key, std::move(v));
  }
  void constant(const std::string& key, VideoCube::Dims dims, double value) {
    put(key, VideoCube(std::move(dims), value));
  }
  void norm(const std::string& key, std::size_t c) {
    constant(key + ".weight", {c}, 1.0);
    constant(key + ".bias", {c}, 0.0);
  }
};

void require_channels(Var f, std::size_t c, const std::string& where) {
  if (f.value().rank() != 4 || f.dims()[3] != c) {
    throw ShapeError(where + ": feature " + dims_to_string(f.dims()) + " does not have " +
                     std::to_string(c) + " channels");
  }
}

Var scan_branch(ParamBinder& p, const std::string& pre, Var seq, ScanDirection dir) {
  Var conv = ad::conv1d_causal(seq, p(pre + "conv.weight"), p(pre + "conv.bias"));
  Var act = ad::silu(conv);
  ad::ScanVars sv{p(pre + "ssm.a_log"), p(pre + "ssm.w_delta"), p(pre + "ssm.b_delta"),
                  p(pre + "ssm.w_b"), p(pre + "ssm.w_c")};
  Var scanned = ad::selective_scan(act, sv, dir);
  return ad::layer_norm(scanned, p(pre + "norm.weight"), p(pre + "norm.bias"));
}

}  // namespace

void init_block_weights(WeightMap& weights, const std::string& prefix, const BlockDims& d,
                        std::uint64_t seed) {
  Initializer in{weights, prefix, seed};
  const std::size_t c = d.input_dim, co = d.output_dim, sc = d.scan_channels(), n = d.d_state;
  const std::size_t hid = d.hidden_dim(), cr = d.attention_dim();

  in.norm("norm1", c);
  in.projection("stmamba.in_x.weight", {sc, c});
  in.constant("stmamba.in_x.bias", {sc}, 0.0);
  in.projection("stmamba.in_z.weight", {sc, c});
  in.constant("stmamba.in_z.bias", {sc}, 0.0);
  for (const char* br : kBranches) {
    const std::string b = std::string("stmamba.") + br + ".";
    in.conv(b + "conv.weight", {sc, d.d_conv}, d.d_conv);
    in.constant(b + "conv.bias", {sc}, 0.0);
    auto s = in.stream(b + "ssm");
    SsmParams ssm = SsmParams::init(sc, n, s);
    in.put(b + "ssm.a_log", ssm.a_log);
    in.put(b + "ssm.w_delta", ssm.w_delta);
    in.put(b + "ssm.b_delta", ssm.b_delta);
    in.put(b + "ssm.w_b", ssm.w_b);
    in.put(b + "ssm.w_c", ssm.w_c);
    in.norm(b + "norm", sc);
  }
  in.projection("stmamba.out.weight", {c, sc});
  in.constant("stmamba.out.bias", {c}, 0.0);

  in.norm("norm2", c);
  in.projection("edr.fc1.weight", {hid, c});
  in.constant("edr.fc1.bias", {hid}, 0.0);
  in.conv("edr.dwconv.weight", {hid, 27}, 27);
  in.constant("edr.dwconv.bias", {hid}, 0.0);
  in.projection("edr.fc2.weight", {c, hid});
  in.constant("edr.fc2.bias", {c}, 0.0);

  in.projection("proj.weight", {co, c});
  in.constant("proj.bias", {co}, 0.0);

  in.norm("norm3", co);
  in.projection("ca.fc1.weight", {cr, co});
  in.constant("ca.fc1.bias", {cr}, 0.0);
  in.projection("ca.fc2.weight", {co, cr});
  in.constant("ca.fc2.bias", {co}, 0.0);
  in.conv("ca.fuse.weight", {27, co, co}, 27 * co);
  in.constant("ca.fuse.bias", {co}, 0.0);

  in.constant("scale1", {1}, 1.0);
  in.constant("scale2", {1}, 1.0);
  in.constant("scale3", {1}, 1.0);
}

void zero_block_weights(WeightMap& weights, const std::string& prefix, const BlockDims& dims,
                        bool identity_projection, double scale) {
  WeightMap fresh;
  init_block_weights(fresh, prefix, dims, 0);
  for (auto& [key, value] : fresh) {
    value.fill(0.0);
    weights[key] = value;
  }
  if (identity_projection) {
    if (dims.input_dim != dims.output_dim) {
      throw ConfigError("identity projection needs input_dim == output_dim");
    }
    VideoCube& w = weights[prefix + "proj.weight"];
    for (std::size_t i = 0; i < dims.input_dim; ++i) w[i * dims.input_dim + i] = 1.0;
  }
  for (const char* s : {"scale1", "scale2", "scale3"}) weights[prefix + s] = VideoCube({1}, scale);
}

BlockDims block_dims_from(const WeightMap& weights, const std::string& prefix) {
  const auto get = [&](const std::string& key) -> const VideoCube& {
    auto it = weights.find(prefix + key);
    if (it == weights.end()) throw CompletenessError("missing weight '" + prefix + key + "'");
    return it->second;
  };
  BlockDims d;
  d.input_dim = get("norm1.weight").size();
  d.output_dim = get("proj.weight").dim(0);
  const VideoCube& in_x = get("stmamba.in_x.weight");
  d.expand = in_x.dim(0) / d.input_dim;
  d.d_state = get("stmamba.sf.ssm.a_log").dim(1);
  d.d_conv = get("stmamba.sf.conv.weight").dim(1);
  d.mlp_ratio = get("edr.fc1.weight").dim(0) / d.input_dim;
  return d;
}

namespace blocks {

Var stmamba(ParamBinder& p, const std::string& prefix, Var f) {
  const std::string pre = prefix + "stmamba.";
  if (f.value().rank() != 4) throw ShapeError("stmamba expects a (T, H, W, C) feature");
  const auto dims = f.dims();
  const std::size_t t = dims[0], h = dims[1], w = dims[2], c = dims[3];
  require_channels(f, p.value(pre + "in_x.weight").dim(1), pre);
  const std::size_t len = t * h * w;

  Var tokens = ad::reshape(f, {len, c});
  Var x = ad::silu(ad::linear(tokens, p(pre + "in_x.weight"), p(pre + "in_x.bias")));
  Var z = ad::silu(ad::linear(tokens, p(pre + "in_z.weight"), p(pre + "in_z.bias")));
  const std::size_t sc = x.dims()[1];

  // Frame-major sequence X_s is the token order itself.
  Var sf = scan_branch(p, pre + "sf.", x, ScanDirection::kForward);
  Var sb = scan_branch(p, pre + "sb.", x, ScanDirection::kBackward);

  // Pixel-major X_t: each pixel's T frames are contiguous.
  Var xt = ad::reshape(ad::permute(ad::reshape(x, {t, h, w, sc}), {1, 2, 0, 3}), {len, sc});
  Var st = scan_branch(p, pre + "t.", xt, ScanDirection::kForward);
  Var st_frame = ad::reshape(ad::permute(ad::reshape(st, {h, w, t, sc}), {2, 0, 1, 3}), {len, sc});

  Var gated = ad::mul(ad::add(ad::add(sf, sb), st_frame), z);
  Var out = ad::linear(gated, p(pre + "out.weight"), p(pre + "out.bias"));
  return ad::reshape(out, {t, h, w, c});
}

Var edr(ParamBinder& p, const std::string& prefix, Var tokens, std::size_t frames,
        std::size_t height, std::size_t width) {
  const std::string pre = prefix + "edr.";
  if (tokens.value().rank() != 2 || tokens.dims()[0] != frames * height * width) {
    throw ShapeError("edr: token sequence " + dims_to_string(tokens.dims()) + " does not match " +
                     std::to_string(frames) + "x" + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  const std::size_t len = tokens.dims()[0];
  Var up = ad::gelu(ad::linear(tokens, p(pre + "fc1.weight"), p(pre + "fc1.bias")));
  const std::size_t hid = up.dims()[1];
  Var grid = ad::reshape(up, {frames, height, width, hid});
  Var conv = ad::gelu(ad::conv3d_depthwise(grid, p(pre + "dwconv.weight"), p(pre + "dwconv.bias")));
  return ad::linear(ad::reshape(conv, {len, hid}), p(pre + "fc2.weight"), p(pre + "fc2.bias"));
}

ChannelAttention ca(ParamBinder& p, const std::string& prefix, Var f) {
  const std::string pre = prefix + "ca.";
  if (f.value().rank() != 4) throw ShapeError("ca expects a (T, H, W, C) feature");
  const std::size_t c = f.dims()[3];
  Var pooled = ad::reshape(ad::global_avg_pool(f), {1, c});
  Var squeezed = ad::gelu(ad::linear(pooled, p(pre + "fc1.weight"), p(pre + "fc1.bias")));
  Var weights = ad::reshape(
      ad::sigmoid(ad::linear(squeezed, p(pre + "fc2.weight"), p(pre + "fc2.bias"))), {c});
  Var scaled = ad::mul_channels(f, weights);
  return {weights, ad::conv3d(scaled, p(pre + "fuse.weight"), p(pre + "fuse.bias"))};
}

Var residual_mamba_block(ParamBinder& p, const std::string& prefix, Var f) {
  const BlockDims d = block_dims_from(p.weights(), prefix);
  require_channels(f, d.input_dim, prefix.empty() ? "residual_mamba_block" : prefix);
  const auto dims = f.dims();
  const std::size_t t = dims[0], h = dims[1], w = dims[2], len = t * h * w;

  Var n1 = ad::layer_norm(f, p(prefix + "norm1.weight"), p(prefix + "norm1.bias"));
  Var f1 = ad::add(stmamba(p, prefix, n1), ad::scale(f, p(prefix + "scale1")));

  Var f1_tokens = ad::reshape(f1, {len, d.input_dim});
  Var n2 = ad::layer_norm(f1_tokens, p(prefix + "norm2.weight"), p(prefix + "norm2.bias"));
  Var mixed = ad::add(edr(p, prefix, n2, t, h, w), ad::scale(f1_tokens, p(prefix + "scale2")));
  Var f2 = ad::reshape(ad::linear(mixed, p(prefix + "proj.weight"), p(prefix + "proj.bias")),
                       {t, h, w, d.output_dim});

  Var n3 = ad::layer_norm(f2, p(prefix + "norm3.weight"), p(prefix + "norm3.bias"));
  return ad::add(ca(p, prefix, n3).out, ad::scale(f2, p(prefix + "scale3")));
}

}  // namespace blocks

VideoCube residual_mamba_block(const VideoCube& f, const WeightMap& weights,
                               const std::string& prefix) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  ParamBinder p(tape, weights);
  Var out = blocks::residual_mamba_block(p, prefix, tape.constant(f));
  return out.value();
}

}  // namespace quadsci
