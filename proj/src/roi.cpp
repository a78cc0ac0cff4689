#include "safeood/roi.hpp"

#include <algorithm>
#include <cmath>

#include "safeood/error.hpp"

namespace safeood {

namespace {

// Bilinear interpolation of one channel at continuous map coordinates,
// coordinates clamped to [0, w-1] x [0, h-1].
inline double sample_clamped(const double* ch, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  int y0 = std::min(static_cast<int>(y), h - 2 >= 0 ? h - 2 : 0);
  int x0 = std::min(static_cast<int>(x), w - 2 >= 0 ? w - 2 : 0);
  int y1 = std::min(y0 + 1, h - 1);
  int x1 = std::min(x0 + 1, w - 1);
  double fy = y - y0;
  double fx = x - x0;
  double v00 = ch[y0 * w + x0];
  double v01 = ch[y0 * w + x1];
  double v10 = ch[y1 * w + x0];
  double v11 = ch[y1 * w + x1];
  return v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) + v11 * fy * fx;
}

// Segment endpoints of [lo, hi] split at every integer coordinate, so each
// segment lies within a single bilinear patch (or a clamped border zone).
std::vector<double> patch_breaks(double lo, double hi) {
  std::vector<double> b;
  b.push_back(lo);
  for (double k = std::floor(lo) + 1.0; k < hi; k += 1.0)
    if (k > lo) b.push_back(k);
  b.push_back(hi);
  return b;
}

}  // namespace

std::vector<double> roi_pool_vector(const FeatureMap& map, const BoundingBox& box,
                                    const RoiPoolConfig& cfg) {
  require(map.stride > 0, ErrorCode::precondition, "roi_pool_vector: stride must be positive");
  require(box.width() >= 1.0 && box.height() >= 1.0, ErrorCode::degenerate_box,
          "roi_pool_vector: box degenerate after clipping (needs >= 1 pixel on each axis)");

  const double scale = 1.0 / map.stride;
  const double shift = cfg.aligned ? 0.5 : 0.0;
  const double rx0 = box.x1 * scale - shift;
  const double rx1 = box.x2 * scale - shift;
  const double ry0 = box.y1 * scale - shift;
  const double ry1 = box.y2 * scale - shift;

  const int C = map.channels();
  const int H = map.height();
  const int W = map.width();
  std::vector<double> out(static_cast<size_t>(C), 0.0);

  if (cfg.sampling_ratio >= 1) {
    const int n = cfg.sampling_ratio;
    for (int c = 0; c < C; ++c) {
      const double* ch = map.tensor.ptr() + static_cast<size_t>(c) * H * W;
      double first = 0.0, acc = 0.0;
      for (int iy = 0; iy < n; ++iy) {
        double y = ry0 + (iy + 0.5) * (ry1 - ry0) / n;
        for (int ix = 0; ix < n; ++ix) {
          double x = rx0 + (ix + 0.5) * (rx1 - rx0) / n;
          double v = sample_clamped(ch, H, W, y, x);
          if (iy == 0 && ix == 0) first = v;
          acc += v - first;  // shift keeps constant maps exact
        }
      }
      out[static_cast<size_t>(c)] = first + acc / (n * n);
    }
    return out;
  }

  // Exact average: within one patch the surface is bilinear, so the mean over
  // an axis-aligned sub-rectangle equals the value at its center. Splitting
  // the box at integer coordinates therefore gives a closed-form integral.
  std::vector<double> bx = patch_breaks(rx0, rx1);
  std::vector<double> by = patch_breaks(ry0, ry1);
  for (int c = 0; c < C; ++c) {
    const double* ch = map.tensor.ptr() + static_cast<size_t>(c) * H * W;
    double first = sample_clamped(ch, H, W, 0.5 * (by[0] + by[1]), 0.5 * (bx[0] + bx[1]));
    double acc = 0.0, wsum = 0.0;
    for (size_t j = 0; j + 1 < by.size(); ++j) {
      double yc = 0.5 * (by[j] + by[j + 1]);
      double wy = by[j + 1] - by[j];
      for (size_t i = 0; i + 1 < bx.size(); ++i) {
        double xc = 0.5 * (bx[i] + bx[i + 1]);
        double wx = bx[i + 1] - bx[i];
        double v = sample_clamped(ch, H, W, yc, xc);
        acc += (v - first) * (wx * wy);
        wsum += wx * wy;
      }
    }
    out[static_cast<size_t>(c)] = first + acc / wsum;
  }
  return out;
}

SafeVector build_safe_vector(const std::vector<FeatureMap>& maps, const BoundingBox& box,
                             const RoiPoolConfig& cfg) {
  require(!maps.empty(), ErrorCode::precondition, "build_safe_vector: maps must be non-empty");
  SafeVector v;
  for (const FeatureMap& map : maps) {
    std::vector<double> pooled = roi_pool_vector(map, box, cfg);
    LayerOffset off;
    off.layer_id = map.layer_id;
    off.start = static_cast<int>(v.values.size());
    off.length = static_cast<int>(pooled.size());
    v.layer_offsets.push_back(std::move(off));
    v.values.insert(v.values.end(), pooled.begin(), pooled.end());
  }
  return v;
}

}  // namespace safeood
