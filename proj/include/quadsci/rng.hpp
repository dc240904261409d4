#pragma once

#include <cstdint>
#include <string_view>

namespace quadsci::rng {

// Counter-based SplitMix64: draw i of stream `seed` is
//   mix(seed + (i + 1) * 0x9E3779B97F4A7C15)
// with the SplitMix64 finalizer. Any draw can be produced independently of
// the others, so results do not depend on evaluation order or thread count.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t draw_u64(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed + (index + 1) * kGolden);
}

/// Uniform in [0, 1) with 53 bits.
inline double uniform(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(draw_u64(seed, index) >> 11) * 0x1.0p-53;
}

/// Bernoulli(0.5): the top bit of the draw.
constexpr int bit(std::uint64_t seed, std::uint64_t index) {
  return static_cast<int>(draw_u64(seed, index) >> 63);
}

/// Standard normal via Box-Muller on draws 2i and 2i+1.
double normal(std::uint64_t seed, std::uint64_t index);

/// Independent stream for a named purpose: seed ^ mix64(FNV-1a(tag)).
std::uint64_t derive(std::uint64_t seed, std::string_view tag);
std::uint64_t derive(std::uint64_t seed, std::uint64_t tag);

/// Sequential convenience wrapper over the counter-based draws.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t next_u64() { return draw_u64(seed_, counter_++); }
  double uniform() { return rng::uniform(seed_, counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return rng::normal(seed_, counter_++); }
  // Normal truncated to +-2 standard deviations by rejection.
  double truncated_normal(double sigma);
  int integer(int lo, int hi);  // inclusive range

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace quadsci::rng
