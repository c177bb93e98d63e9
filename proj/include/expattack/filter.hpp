#pragma once

#include <cmath>
#include <vector>

#include "expattack/image.hpp"

namespace expattack {

/// Mirror index into [0, n) without repeating the edge sample: -1 -> 1, n -> n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

enum class Border { Reflect, Zero };

/// Normalized 1-D Gaussian taps of odd `size`.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ConfigError("gaussian kernel size must be odd and positive");
  if (!(sigma > 0)) throw ConfigError("gaussian sigma must be positive");
  std::vector<double> k(size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Correlates `src` with the outer product of `taps` (same size output).
inline PlaneD separable_filter(const PlaneD& src, const std::vector<double>& taps, Border border) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  const int r = static_cast<int>(taps.size()) / 2;
  PlaneD tmp = PlaneD::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        int xx = x + k;
        if (xx < 0 || xx >= w) {
          if (border == Border::Zero) continue;
          xx = reflect_index(xx, w);
        }
        acc += taps[k + r] * src(y, xx);
      }
      tmp(y, x) = acc;
    }
  PlaneD out = PlaneD::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int k = -r; k <= r; ++k) {
      int yy = y + k;
      if (yy < 0 || yy >= h) {
        if (border == Border::Zero) continue;
        yy = reflect_index(yy, h);
      }
      out.row(y) += taps[k + r] * tmp.row(yy);
    }
  return out;
}

}  // namespace expattack
