#pragma once

#include <cstdint>

#include "quadsci/ssm.hpp"

// FLOP conventions shared by the tape counters and the closed-form walker:
// one multiply-add is 2 FLOPs, a bias add or elementwise op is 1 FLOP per
// element, layer norm is 8 FLOPs per element, transcendental functions count
// as 1. Reshapes, permutations and nearest upsampling are free.
namespace quadsci::flops {

using u64 = std::uint64_t;

constexpr u64 linear(u64 tokens, u64 in, u64 out, bool bias = true) {
  return 2 * tokens * in * out + (bias ? tokens * out : 0);
}
constexpr u64 conv3d(u64 tokens, u64 taps, u64 in, u64 out) {
  return 2 * tokens * taps * in * out + tokens * out;
}
constexpr u64 conv3d_depthwise(u64 tokens, u64 taps, u64 channels) {
  return 2 * tokens * taps * channels + tokens * channels;
}
constexpr u64 conv1d_causal(u64 length, u64 channels, u64 width) {
  return 2 * length * channels * width + length * channels;
}
constexpr u64 layer_norm(u64 tokens, u64 channels) { return 8 * tokens * channels; }
constexpr u64 elementwise(u64 n) { return n; }
constexpr u64 max_pool2(u64 outputs) { return 3 * outputs; }
constexpr u64 reduction(u64 inputs) { return inputs; }

/// Selective scan: 2 FLOPs per counted multiply-add plus the delta softplus
/// and the exp of each discretized state coefficient.
inline u64 selective_scan(u64 length, u64 channels, u64 state_size) {
  return 2 * scan_multiply_adds(length, channels, state_size) + length * channels +
         length * channels * state_size;
}

}  // namespace quadsci::flops
