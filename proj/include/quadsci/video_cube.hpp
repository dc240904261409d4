#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace quadsci {

/// Dense row-major array of doubles with up to four extents, last extent
/// fastest. Carries video (H, W, C, T), raw mosaics, masks, network features
/// and weights.
class VideoCube {
 public:
  using Dims = std::vector<std::size_t>;
  static constexpr std::size_t kMaxRank = 4;

  VideoCube() = default;
  explicit VideoCube(Dims dims, double fill = 0.0);
  VideoCube(Dims dims, std::vector<double> values);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  // Four-index access for rank-4 cubes.
  double& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
    return data_[((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3];
  }
  double at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) const {
    return data_[((i0 * dims_[1] + i1) * dims_[2] + i2) * dims_[3] + i3];
  }
  // Two-index access for planes.
  double& at(std::size_t i0, std::size_t i1) { return data_[i0 * dims_[1] + i1]; }
  double at(std::size_t i0, std::size_t i1) const { return data_[i0 * dims_[1] + i1]; }

  /// Same data, new extents; the element count must be unchanged.
  void reshape(Dims dims);
  VideoCube reshaped(Dims dims) const;

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const VideoCube& a, const VideoCube& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_;
  std::vector<double> data_;
};

std::size_t product(const VideoCube::Dims& dims);
std::string dims_to_string(const VideoCube::Dims& dims);

/// Pads dims on the right with 1s up to rank 4 (H, W -> H, W, 1, 1).
VideoCube::Dims as_rank4(const VideoCube::Dims& dims);

// Throws ShapeError naming `what` when the two dims differ.
void require_same_dims(const VideoCube& a, const VideoCube& b, const char* what);

}  // namespace quadsci
