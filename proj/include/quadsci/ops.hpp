#pragma once

#include <array>

#include "quadsci/autodiff.hpp"
#include "quadsci/ssm.hpp"

// Differentiable primitives on a Tape. Feature maps use the token layout
// (T, H, W, C): frame-major, row-major spatial raster, channels fastest.
// Anything with a trailing channel axis is treated as tokens x channels.
namespace quadsci::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// x * s for a one-element s.
Var scale(Var x, Var s);
/// x[..., c] * w[c].
Var mul_channels(Var x, Var w);

Var silu(Var x);
Var gelu(Var x);  // exact erf form
Var sigmoid(Var x);
Var softplus(Var x);

/// y = x W^T + b with W: (out, in), b: (out) or an invalid Var for no bias.
Var linear(Var x, Var w, Var b);

/// Per-token normalization over the channel axis with affine gamma/beta.
inline constexpr double kLayerNormEps = 1e-5;
Var layer_norm(Var x, Var gamma, Var beta, double eps = kLayerNormEps);

/// Depthwise causal convolution along the sequence axis of x: (L, C);
/// w: (C, K), b: (C); left zero padding of K - 1.
Var conv1d_causal(Var x, Var w, Var b);

/// Depthwise 3x3x3 convolution over (T, H, W) with zero padding.
/// w: (C, 27) with taps ordered (dt, dh, dw); b: (C).
Var conv3d_depthwise(Var x, Var w, Var b);

/// Full 3-D convolution, w: (taps, C_in, C_out) with taps 27 (3x3x3, zero
/// padded) or 1 (pointwise); b: (C_out).
Var conv3d(Var x, Var w, Var b);

/// 2x2 spatial max-pool on (T, H, W, C); ties resolve to the first maximum
/// in raster order, so the gradient is only defined away from ties.
Var max_pool2(Var x);
/// Nearest-neighbour 2x spatial upsample on (T, H, W, C).
Var upsample2(Var x);
/// Mean over all tokens: (..., C) -> (C).
Var global_avg_pool(Var x);

/// Rank-4 axis permutation: out.dims[i] = in.dims[perm[i]].
Var permute(Var x, std::array<int, 4> perm);
Var reshape(Var x, VideoCube::Dims dims);

struct ScanVars {
  Var a_log, w_delta, b_delta, w_b, w_c;
};
/// Selective scan of x: (L, channels) with gradients through every parameter.
Var selective_scan(Var x, const ScanVars& params, ScanDirection dir);

/// mean((a - b)^2) as a one-element result.
Var mse(Var a, Var b);
Var sum(Var x);
/// sum(x * weights) for constant weights.
Var weighted_sum(Var x, const VideoCube& weights);

}  // namespace quadsci::ad
