#pragma once

// Little-endian byte packing shared by the VCUBE and VWTS containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

#include "quadsci/error.hpp"

namespace quadsci::le {

inline void put_uint(std::vector<std::uint8_t>& out, std::uint64_t v, int nbytes) {
  for (int i = 0; i < nbytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) { put_uint(out, v, 2); }
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) { put_uint(out, v, 4); }
inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_uint(out, std::bit_cast<std::uint32_t>(v), 4);
}
inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_uint(out, std::bit_cast<std::uint64_t>(v), 8);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

  std::uint64_t uint(int nbytes) {
    if (pos_ + static_cast<std::size_t>(nbytes) > bytes_.size()) {
      throw TruncationError("unexpected end of data at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < nbytes; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(nbytes);
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(uint(4))); }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string str(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw TruncationError("unexpected end of data in string");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
};

}  // namespace quadsci::le
