#pragma once

#include <Eigen/SparseCore>

#include <string>
#include <utility>
#include <vector>

#include "expattack/filter.hpp"
#include "expattack/image.hpp"

namespace expattack {

/// Laplacian pyramid of one image. `levels[0]` is the finest band, the last
/// entry is the low-pass residual; level l is ceil(H / 2^l) x ceil(W / 2^l).
template <typename Scalar>
struct PyramidT {
  std::vector<ImageT<Scalar>> levels;

  int level_count() const { return static_cast<int>(levels.size()); }
  const ImageT<Scalar>& operator[](int l) const { return levels[l]; }
  ImageT<Scalar>& operator[](int l) { return levels[l]; }
};

using Pyramid = PyramidT<float>;
using PyramidD = PyramidT<double>;

namespace pyramid_detail {

using SparseD = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

inline int half_ceil(int n) { return (n + 1) / 2; }

// Blur with the 5-tap binomial, then keep even samples: ceil(n/2) x n.
inline SparseD reduce_operator(int n) {
  const int m = half_ceil(n);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(5 * m);
  for (int i = 0; i < m; ++i)
    for (int k = -2; k <= 2; ++k) t.emplace_back(i, reflect_index(2 * i + k, n), kBinomial[k + 2]);
  SparseD op(m, n);
  op.setFromTriplets(t.begin(), t.end());
  return op;
}

// Zero-insert to `fine` samples, then blur with the binomial scaled by 2:
// fine x ceil(fine/2). Reflection preserves parity, so constants map to
// constants.
inline SparseD expand_operator(int fine) {
  const int coarse = half_ceil(fine);
  SparseD op(fine, coarse);
  if (fine == 1) {
    op.insert(0, 0) = 1.0;
    return op;
  }
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(5 * fine);
  for (int j = 0; j < fine; ++j)
    for (int k = -2; k <= 2; ++k) {
      const int src = reflect_index(j + k, fine);
      if (src % 2 == 0) t.emplace_back(j, src / 2, 2.0 * kBinomial[k + 2]);
    }
  op.setFromTriplets(t.begin(), t.end());
  return op;
}

// Row/column operator pair for one pyramid step of an h x w plane.
struct StepOperators {
  SparseD reduce_rows, reduce_cols;  // applied as R_r * P * R_c^T
  SparseD expand_rows, expand_cols;  // applied as E_r * P * E_c^T

  StepOperators(int h, int w)
      : reduce_rows(reduce_operator(h)),
        reduce_cols(reduce_operator(w)),
        expand_rows(expand_operator(h)),
        expand_cols(expand_operator(w)) {}
};

inline std::vector<std::pair<int, int>> level_sizes(int h, int w, int levels) {
  std::vector<std::pair<int, int>> sizes;
  sizes.reserve(levels);
  for (int l = 0; l < levels; ++l) {
    sizes.emplace_back(h, w);
    h = half_ceil(h);
    w = half_ceil(w);
  }
  return sizes;
}

inline void check_level_count(int h, int w, int levels) {
  if (levels < 1) throw DimensionError("pyramid level count must be >= 1");
  const long long need = 1LL << (levels - 1);
  if (std::min(h, w) < need)
    throw DimensionError("image of " + std::to_string(h) + "x" + std::to_string(w) + " cannot hold " +
                         std::to_string(levels) + " pyramid levels");
}

}  // namespace pyramid_detail

/// Low-pass then decimate one image by 2 per axis.
template <typename Scalar>
ImageT<Scalar> pyramid_reduce(const ImageT<Scalar>& img) {
  const pyramid_detail::StepOperators ops(img.height(), img.width());
  return map_planes(img, [&](const auto& p) -> PlaneT<Scalar> {
    Eigen::MatrixXd m = p.template cast<double>().matrix();
    Eigen::MatrixXd r = ops.reduce_rows * m * ops.reduce_cols.transpose();
    return r.array().template cast<Scalar>();
  });
}

/// Upsample to the explicit finer size (fine_h, fine_w).
template <typename Scalar>
ImageT<Scalar> pyramid_expand(const ImageT<Scalar>& img, int fine_h, int fine_w) {
  if (pyramid_detail::half_ceil(fine_h) != img.height() || pyramid_detail::half_ceil(fine_w) != img.width())
    throw DimensionError("pyramid_expand: coarse size does not match target");
  const auto er = pyramid_detail::expand_operator(fine_h);
  const auto ec = pyramid_detail::expand_operator(fine_w);
  return map_planes(img, [&](const auto& p) -> PlaneT<Scalar> {
    Eigen::MatrixXd m = p.template cast<double>().matrix();
    Eigen::MatrixXd r = er * m * ec.transpose();
    return r.array().template cast<Scalar>();
  });
}

/// Transpose of pyramid_expand: maps a fine-size image to the coarse grid.
template <typename Scalar>
ImageT<Scalar> pyramid_expand_adjoint(const ImageT<Scalar>& fine) {
  const auto er = pyramid_detail::expand_operator(fine.height());
  const auto ec = pyramid_detail::expand_operator(fine.width());
  return map_planes(fine, [&](const auto& p) -> PlaneT<Scalar> {
    Eigen::MatrixXd m = p.template cast<double>().matrix();
    Eigen::MatrixXd r = er.transpose() * m * ec;
    return r.array().template cast<Scalar>();
  });
}

/// Laplacian decomposition into `levels` bands (the last is the Gaussian residual).
template <typename Scalar>
PyramidT<Scalar> decompose(const ImageT<Scalar>& img, int levels) {
  pyramid_detail::check_level_count(img.height(), img.width(), levels);
  PyramidT<Scalar> pyr;
  pyr.levels.reserve(levels);
  ImageT<Scalar> gauss = img;
  for (int l = 0; l + 1 < levels; ++l) {
    ImageT<Scalar> coarser = pyramid_reduce(gauss);
    pyr.levels.push_back(gauss - pyramid_expand(coarser, gauss.height(), gauss.width()));
    gauss = std::move(coarser);
  }
  pyr.levels.push_back(std::move(gauss));
  return pyr;
}

/// Checks that consecutive levels halve (ceil) in size and share channel count.
template <typename Scalar>
void check_pyramid_shape(const PyramidT<Scalar>& pyr) {
  if (pyr.levels.empty()) throw DimensionError("pyramid has no levels");
  const auto sizes = pyramid_detail::level_sizes(pyr[0].height(), pyr[0].width(), pyr.level_count());
  for (int l = 0; l < pyr.level_count(); ++l) {
    if (pyr[l].height() != sizes[l].first || pyr[l].width() != sizes[l].second ||
        pyr[l].channels() != pyr[0].channels())
      throw DimensionError("pyramid level " + std::to_string(l) + " has inconsistent size");
  }
}

/// Collapses the pyramid: X = B1 + expand(B2 + expand(...)). Not clamped.
template <typename Scalar>
ImageT<Scalar> reconstruct(const PyramidT<Scalar>& pyr) {
  check_pyramid_shape(pyr);
  ImageT<Scalar> acc = pyr.levels.back();
  for (int l = pyr.level_count() - 2; l >= 0; --l)
    acc = pyr[l] + pyramid_expand(acc, pyr[l].height(), pyr[l].width());
  return acc;
}

/// Adjoint of `reconstruct` as a linear map: gradient of <reconstruct(P), g> w.r.t. every band.
template <typename Scalar>
PyramidT<Scalar> reconstruct_adjoint(const ImageT<Scalar>& grad_out, int levels) {
  pyramid_detail::check_level_count(grad_out.height(), grad_out.width(), levels);
  PyramidT<Scalar> out;
  out.levels.reserve(levels);
  out.levels.push_back(grad_out);
  for (int l = 1; l < levels; ++l) out.levels.push_back(pyramid_expand_adjoint(out.levels.back()));
  return out;
}

template <typename Scalar>
double dot(const PyramidT<Scalar>& a, const PyramidT<Scalar>& b) {
  if (a.level_count() != b.level_count()) throw DimensionError("dot: pyramid level counts differ");
  double acc = 0.0;
  for (int l = 0; l < a.level_count(); ++l) acc += dot(a[l], b[l]);
  return acc;
}

}  // namespace expattack
