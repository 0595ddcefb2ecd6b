#pragma once
// image.hpp - ImageTensor, the float image every pipeline stage agrees on.
//
// H x W x C, row-major, values in [0,1]. Integer formats convert at the IO
// boundary; everything in between stays on this one numeric contract.

#include <cmath>
#include <cstddef>
#include <vector>

#include "clfa/common.hpp"

namespace clfa {

struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;  // height*width*channels

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {
    require_arg(h > 0 && w > 0 && c > 0, "ImageTensor dims must be positive");
  }

  std::size_t size() const { return data.size(); }

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  // bilinear sample with zero fill outside the canvas
  double sample_bilinear(double y, double x, int c) const {
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    double acc = 0.0;
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const int yy = y0 + dy, xx = x0 + dx;
        if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
        const double w = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
        if (w != 0.0) acc += w * at(yy, xx, c);
      }
    }
    return acc;
  }

  void clip01() {
    for (double& v : data) v = clamp01(v);
  }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

inline double luminance(const ImageTensor& img, int y, int x) {
  if (img.channels == 1) return img.at(y, x, 0);
  // ITU-R 601 weights, matching the usual L-mode conversion
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

inline double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// bilinear resize to a square target; used at the decode boundary
inline ImageTensor resize_bilinear(const ImageTensor& src, int out_h, int out_w) {
  require_arg(out_h > 0 && out_w > 0, "resize target must be positive");
  if (src.height == out_h && src.width == out_w) return src;
  ImageTensor out(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      // center-aligned source coordinates, clamped to the valid range
      double fy = (y + 0.5) * sy - 0.5;
      double fx = (x + 0.5) * sx - 0.5;
      fy = std::min(std::max(fy, 0.0), static_cast<double>(src.height - 1));
      fx = std::min(std::max(fx, 0.0), static_cast<double>(src.width - 1));
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.sample_bilinear(fy, fx, c);
    }
  }
  return out;
}

}  // namespace clfa
