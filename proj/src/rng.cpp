#include "quadsci/rng.hpp"

#include <cmath>
#include <numbers>

namespace quadsci::rng {

double normal(std::uint64_t seed, std::uint64_t index) {
  // u1 in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform(seed, 2 * index);
  const double u2 = uniform(seed, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return seed ^ mix64(h);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) { return seed ^ mix64(tag + kGolden); }

double Stream::truncated_normal(double sigma) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return sigma * z;
  }
}

int Stream::integer(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(next_u64() % span);
}

}  // namespace quadsci::rng
