#pragma once

#include <cstdint>
#include <string>

#include "quadsci/autodiff.hpp"
#include "quadsci/weights.hpp"

namespace quadsci {

/// Hyperparameters of one Residual-Mamba-Block.
struct BlockDims {
  std::size_t input_dim = 8;
  std::size_t output_dim = 8;
  std::size_t d_state = 16;
  std::size_t d_conv = 4;
  std::size_t expand = 2;
  std::size_t mlp_ratio = 4;

  std::size_t scan_channels() const { return expand * input_dim; }
  std::size_t hidden_dim() const { return mlp_ratio * input_dim; }
  std::size_t attention_dim() const { return output_dim / 2 > 0 ? output_dim / 2 : 1; }
};

/// Weight-init scale for linear projections (truncated normal).
inline constexpr double kProjectionInitSigma = 0.02;

/// Adds every weight of a block under `prefix` ("enc1.block1." style, with
/// the trailing dot). Linear projections draw truncated N(0, 0.02^2),
/// convolutions draw U(-1/sqrt(fan_in), 1/sqrt(fan_in)), norms start at
/// (1, 0), scales at 1, biases at 0.
void init_block_weights(WeightMap& weights, const std::string& prefix, const BlockDims& dims,
                        std::uint64_t seed);

/// Same key set with every entry zero, except `proj.weight` which is the
/// identity when `identity_projection` (requires input_dim == output_dim)
/// and the scales, which are set to `scale`.
void zero_block_weights(WeightMap& weights, const std::string& prefix, const BlockDims& dims,
                        bool identity_projection, double scale);

/// Block dims recovered from stored weight shapes.
BlockDims block_dims_from(const WeightMap& weights, const std::string& prefix);

namespace blocks {

// All features are tape variables in the (T, H, W, C) token layout.

/// Spatial forward, spatial backward and temporal forward selective scans,
/// each gated by the shared SiLU gate Z, summed and projected back to C.
ad::Var stmamba(ParamBinder& p, const std::string& prefix, ad::Var f);

/// Linear up (mlp_ratio x) -> GELU -> depthwise 3x3x3 conv -> GELU -> linear
/// down, over a token sequence of length T*H*W.
ad::Var edr(ParamBinder& p, const std::string& prefix, ad::Var tokens, std::size_t frames,
            std::size_t height, std::size_t width);

/// Returns the attention weights sigmoid(fc2(GELU(fc1(avgpool(F))))) and
/// the fused output conv3d(F * weights).
struct ChannelAttention {
  ad::Var weights;
  ad::Var out;
};
ChannelAttention ca(ParamBinder& p, const std::string& prefix, ad::Var f);

/// F1 = STMamba(LN(F)) + s1 F
/// F2 = Proj(EDR(LN(F1)) + s2 F1)
/// out = CA(LN(F2)) + s3 F2
ad::Var residual_mamba_block(ParamBinder& p, const std::string& prefix, ad::Var f);

}  // namespace blocks

/// Value-level convenience: runs `residual_mamba_block` without recording
/// gradients. f is (T, H, W, C).
VideoCube residual_mamba_block(const VideoCube& f, const WeightMap& weights,
                               const std::string& prefix = "");

}  // namespace quadsci
