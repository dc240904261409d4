#include "quadsci/baseline.hpp"

#include <algorithm>

#include "quadsci/error.hpp"
#include "quadsci/parallel.hpp"

namespace quadsci {
namespace {

void require_raw(const VideoCube& raw, const char* what) {
  if (raw.rank() != 4 || raw.dim(2) != 1) {
    throw ShapeError(std::string(what) + ": expected H x W x 1 x T, got " +
                     dims_to_string(raw.dims()));
  }
}

void require_period(std::size_t h, std::size_t w, CfaPattern pattern, const char* what) {
  if (h % pattern.period() != 0 || w % pattern.period() != 0) {
    throw ShapeError(std::string(what) + ": " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not a multiple of the CFA period " + std::to_string(pattern.period()));
  }
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Linear interpolation at `x` from samples at sorted positions `pos`,
// holding the end values outside the sampled range.
double interp(const std::vector<std::size_t>& pos, const std::vector<double>& val, std::size_t x) {
  auto it = std::lower_bound(pos.begin(), pos.end(), x);
  if (it == pos.begin()) return val.front();
  if (it == pos.end()) return val.back();
  const auto i = static_cast<std::size_t>(it - pos.begin());
  if (*it == x) return val[i];
  const double x0 = static_cast<double>(pos[i - 1]), x1 = static_cast<double>(pos[i]);
  const double f = (static_cast<double>(x) - x0) / (x1 - x0);
  return val[i - 1] + f * (val[i] - val[i - 1]);
}

}  // namespace

void GapConfig::validate() const {
  if (iterations < 1) throw ConfigError("GAP needs at least one iteration");
  if (!(tv_weight >= 0.0)) throw ConfigError("TV weight must be >= 0");
  if (!(tv_step > 0.0)) throw ConfigError("TV step must be positive");
}

double measurement_residual(const Measurement& meas, const MaskSet& masks, const VideoCube& raw) {
  const auto phi_x = apply_phi(masks, vectorize(raw));
  if (meas.y.size() != phi_x.size()) {
    throw ShapeError("measurement " + dims_to_string(meas.y.dims()) + " does not match masks " +
                     dims_to_string(masks.masks.dims()));
  }
  double r = 0.0;
  for (std::size_t p = 0; p < phi_x.size(); ++p) {
    const double d = meas.y[p] - phi_x[p];
    r += d * d;
  }
  return r;
}

VideoCube tv_denoise(const VideoCube& raw, double weight, std::size_t steps, double step) {
  require_raw(raw, "tv_denoise");
  if (weight == 0.0) return raw;
  const std::size_t h = raw.dim(0), w = raw.dim(1), t = raw.dim(3);
  VideoCube x = raw;
  std::vector<double> grad(h * w * t);
  for (std::size_t it = 0; it < steps; ++it) {
    parallel_for(t, [&](std::size_t k) {
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double v = x.at(i, j, 0, k);
          double g = v - raw.at(i, j, 0, k);
          double tv = 0.0;
          if (i + 1 < h) tv += sign(v - x.at(i + 1, j, 0, k));
          if (i > 0) tv += sign(v - x.at(i - 1, j, 0, k));
          if (j + 1 < w) tv += sign(v - x.at(i, j + 1, 0, k));
          if (j > 0) tv += sign(v - x.at(i, j - 1, 0, k));
          grad[(k * h + i) * w + j] = g + weight * tv;
        }
    });
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t k = 0; k < t; ++k) x.at(i, j, 0, k) -= step * grad[(k * h + i) * w + j];
  }
  return x;
}

VideoCube gap_tv(const Measurement& meas, const MaskSet& masks, const GapConfig& cfg,
                 std::vector<double>* residuals, const VideoCube* start) {
  cfg.validate();
  const std::size_t h = masks.height(), w = masks.width(), t = masks.frames();
  if (meas.y.size() != h * w) {
    throw ShapeError("measurement " + dims_to_string(meas.y.dims()) + " does not match masks " +
                     dims_to_string(masks.masks.dims()));
  }
  if (std::all_of(masks.sum_t.values().begin(), masks.sum_t.values().end(),
                  [](double s) { return s == 0.0; })) {
    throw DegenerateSensingError("every mask is zero; the measurement carries no signal");
  }
  VideoCube x = start != nullptr ? *start : initialize(meas, masks);
  require_same_dims(x, masks.masks, "gap_tv start");
  if (residuals != nullptr) residuals->assign(1, measurement_residual(meas, masks, x));

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto phi_x = apply_phi(masks, vectorize(x));
    std::vector<double> r(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
      r[p] = (meas.y[p] - phi_x[p]) / (masks.sum_sq_t[p] + kInitEpsilon);
    }
    const auto back = apply_phi_transpose(masks, r);
    auto xv = vectorize(x);
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += back[i];
    x = tv_denoise(unvectorize(xv, h, w, t), cfg.tv_weight, cfg.tv_inner_steps, cfg.tv_step);
    if (residuals != nullptr) residuals->push_back(measurement_residual(meas, masks, x));
  }
  return x;
}

VideoCube expand_cfa(const VideoCube& raw, CfaPattern pattern) {
  require_raw(raw, "expand_cfa");
  const std::size_t h = raw.dim(0), w = raw.dim(1), t = raw.dim(3);
  require_period(h, w, pattern, "expand_cfa");
  VideoCube out({h, w, 3, t});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const auto c = static_cast<std::size_t>(pattern.channel_at(i, j));
      for (std::size_t k = 0; k < t; ++k) out.at(i, j, c, k) = raw.at(i, j, 0, k);
    }
  return out;
}

VideoCube demosaic_bilinear(const VideoCube& sparse, CfaPattern pattern) {
  if (sparse.rank() != 4 || sparse.dim(2) != 3) {
    throw ShapeError("demosaic_bilinear: expected H x W x 3 x T, got " +
                     dims_to_string(sparse.dims()));
  }
  const std::size_t h = sparse.dim(0), w = sparse.dim(1), t = sparse.dim(3);
  require_period(h, w, pattern, "demosaic_bilinear");
  VideoCube out(sparse.dims());

  for (int ch = 0; ch < 3; ++ch) {
    const auto c = static_cast<std::size_t>(ch);
    const auto site = [&](std::size_t i, std::size_t j) { return pattern.channel_at(i, j) == ch; };
    std::vector<std::size_t> rows, cols;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        if (site(i, j)) {
          if (rows.empty() || rows.back() != i) rows.push_back(i);
        }
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t i = 0; i < h; ++i)
        if (site(i, j)) {
          cols.push_back(j);
          break;
        }
    bool grid = true;
    for (std::size_t i = 0; i < h && grid; ++i)
      for (std::size_t j = 0; j < w && grid; ++j) {
        const bool in_grid = std::binary_search(rows.begin(), rows.end(), i) &&
                             std::binary_search(cols.begin(), cols.end(), j);
        grid = in_grid == site(i, j);
      }

    parallel_for(t, [&](std::size_t k) {
      const auto at = [&](std::size_t i, std::size_t j) { return sparse.at(i, j, c, k); };
      std::vector<double> val;
      std::vector<std::size_t> pos;
      if (grid) {
        // Along sampled rows first, then down every column.
        std::vector<double> filled(rows.size() * w);
        val.resize(cols.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          for (std::size_t q = 0; q < cols.size(); ++q) val[q] = at(rows[r], cols[q]);
          for (std::size_t j = 0; j < w; ++j) filled[r * w + j] = interp(cols, val, j);
        }
        val.resize(rows.size());
        for (std::size_t j = 0; j < w; ++j) {
          for (std::size_t r = 0; r < rows.size(); ++r) val[r] = filled[r * w + j];
          for (std::size_t i = 0; i < h; ++i) {
            out.at(i, j, c, k) = site(i, j) ? at(i, j) : interp(rows, val, i);
          }
        }
        return;
      }
      std::vector<double> horiz(h * w), vert(h * w);
      for (std::size_t i = 0; i < h; ++i) {
        pos.clear();
        val.clear();
        for (std::size_t j = 0; j < w; ++j)
          if (site(i, j)) {
            pos.push_back(j);
            val.push_back(at(i, j));
          }
        for (std::size_t j = 0; j < w; ++j) horiz[i * w + j] = pos.empty() ? 0.0 : interp(pos, val, j);
      }
      for (std::size_t j = 0; j < w; ++j) {
        pos.clear();
        val.clear();
        for (std::size_t i = 0; i < h; ++i)
          if (site(i, j)) {
            pos.push_back(i);
            val.push_back(at(i, j));
          }
        for (std::size_t i = 0; i < h; ++i) vert[i * w + j] = pos.empty() ? 0.0 : interp(pos, val, i);
      }
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          out.at(i, j, c, k) = site(i, j) ? at(i, j) : 0.5 * (horiz[i * w + j] + vert[i * w + j]);
        }
    });
  }
  return out;
}

}  // namespace quadsci
