#include "quadsci/metrics.hpp"

#include <cmath>

#include "quadsci/error.hpp"

namespace quadsci {
namespace {

struct Layout {
  std::size_t h, w, c, t;
};

Layout checked_layout(const VideoCube& reference, const VideoCube& test) {
  const auto a = as_rank4(reference.dims());
  const auto b = as_rank4(test.dims());
  if (a != b) {
    throw ShapeError("metric inputs differ in shape: " + dims_to_string(reference.dims()) + " vs " +
                     dims_to_string(test.dims()));
  }
  return {a[0], a[1], a[2], a[3]};
}

std::vector<double> gaussian_1d() {
  std::vector<double> g(kSsimWindow);
  const int half = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - half;
    g[i] = std::exp(-(x * x) / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Valid-mode separable filtering of one H x W plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t k = g.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * plane[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, std::size_t h,
                  std::size_t w, const std::vector<double>& g) {
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  std::vector<double> xx(x.size()), yy(y.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, g);
  const auto my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g);
  const auto syy = filter_valid(yy, h, w, g);
  const auto sxy = filter_valid(xy, h, w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * (mx[i] * my[i]) + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

std::vector<double> ssim_window() {
  const auto g = gaussian_1d();
  std::vector<double> win(kSsimWindow * kSsimWindow);
  for (int i = 0; i < kSsimWindow; ++i)
    for (int j = 0; j < kSsimWindow; ++j) win[i * kSsimWindow + j] = g[i] * g[j];
  return win;
}

std::vector<double> psnr_per_frame(const VideoCube& reference, const VideoCube& test) {
  const Layout l = checked_layout(reference, test);
  const auto& a = reference.values();
  const auto& b = test.values();
  std::vector<double> out(l.t);
  const std::size_t per_frame = l.h * l.w * l.c;
  for (std::size_t t = 0; t < l.t; ++t) {
    double sse = 0.0;
    for (std::size_t p = 0; p < per_frame; ++p) {
      const double d = a[p * l.t + t] - b[p * l.t + t];
      sse += d * d;
    }
    const double mse = sse / static_cast<double>(per_frame);
    out[t] = mse < kPsnrMseFloor ? kPsnrCapDb : std::min(kPsnrCapDb, -10.0 * std::log10(mse));
  }
  return out;
}

double psnr(const VideoCube& reference, const VideoCube& test) {
  const auto frames = psnr_per_frame(reference, test);
  double s = 0.0;
  for (double v : frames) s += v;
  return s / static_cast<double>(frames.size());
}

std::vector<double> ssim_per_frame(const VideoCube& reference, const VideoCube& test) {
  const Layout l = checked_layout(reference, test);
  if (l.h < static_cast<std::size_t>(kSsimWindow) || l.w < static_cast<std::size_t>(kSsimWindow)) {
    throw ConfigError("SSIM needs frames of at least 11x11, got " + std::to_string(l.h) + "x" +
                      std::to_string(l.w));
  }
  const auto g = gaussian_1d();
  const auto& a = reference.values();
  const auto& b = test.values();
  std::vector<double> out(l.t);
  std::vector<double> x(l.h * l.w), y(l.h * l.w);
  for (std::size_t t = 0; t < l.t; ++t) {
    double acc = 0.0;
    for (std::size_t c = 0; c < l.c; ++c) {
      for (std::size_t p = 0; p < l.h * l.w; ++p) {
        x[p] = a[(p * l.c + c) * l.t + t];
        y[p] = b[(p * l.c + c) * l.t + t];
      }
      acc += ssim_plane(x, y, l.h, l.w, g);
    }
    out[t] = acc / static_cast<double>(l.c);
  }
  return out;
}

double ssim(const VideoCube& reference, const VideoCube& test) {
  const auto frames = ssim_per_frame(reference, test);
  double s = 0.0;
  for (double v : frames) s += v;
  return s / static_cast<double>(frames.size());
}

QualityReport quality_report(const VideoCube& reference, const VideoCube& test) {
  QualityReport r;
  r.psnr_per_frame = psnr_per_frame(reference, test);
  r.ssim_per_frame = ssim_per_frame(reference, test);
  for (double v : r.psnr_per_frame) r.psnr_db += v;
  for (double v : r.ssim_per_frame) r.ssim += v;
  r.psnr_db /= static_cast<double>(r.psnr_per_frame.size());
  r.ssim /= static_cast<double>(r.ssim_per_frame.size());
  return r;
}

}  // namespace quadsci
