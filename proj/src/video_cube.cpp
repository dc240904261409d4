#include "quadsci/video_cube.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "quadsci/error.hpp"

namespace quadsci {
namespace {

void validate_dims(const VideoCube::Dims& dims) {
  if (dims.empty() || dims.size() > VideoCube::kMaxRank) {
    throw ShapeError("cube rank must be 1-4, got " + std::to_string(dims.size()));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("cube extents must be >= 1, got " + dims_to_string(dims));
  }
}

}  // namespace

std::size_t product(const VideoCube::Dims& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string dims_to_string(const VideoCube::Dims& dims) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ')';
  return os.str();
}

VideoCube::Dims as_rank4(const VideoCube::Dims& dims) {
  VideoCube::Dims out = dims;
  while (out.size() < 4) out.push_back(1);
  return out;
}

void require_same_dims(const VideoCube& a, const VideoCube& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": dimension mismatch " + dims_to_string(a.dims()) +
                     " vs " + dims_to_string(b.dims()));
  }
}

VideoCube::VideoCube(Dims dims, double fill) : dims_(std::move(dims)) {
  validate_dims(dims_);
  data_.assign(product(dims_), fill);
}

VideoCube::VideoCube(Dims dims, std::vector<double> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  validate_dims(dims_);
  if (data_.size() != product(dims_)) {
    throw ShapeError("cube " + dims_to_string(dims_) + " needs " + std::to_string(product(dims_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

void VideoCube::reshape(Dims dims) {
  validate_dims(dims);
  if (product(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
  }
  dims_ = std::move(dims);
}

VideoCube VideoCube::reshaped(Dims dims) const {
  VideoCube out = *this;
  out.reshape(std::move(dims));
  return out;
}

void VideoCube::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool VideoCube::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace quadsci
