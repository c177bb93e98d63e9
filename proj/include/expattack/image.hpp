#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "expattack/error.hpp"

namespace expattack {

template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W x C image with one row-major plane per channel.
///
/// Attack and fusion code works channel by channel, so the planar layout keeps
/// every per-channel operation a plain Eigen array expression.
template <typename Scalar>
class ImageT {
 public:
  using Plane = PlaneT<Scalar>;

  ImageT() = default;

  ImageT(int height, int width, int channels, Scalar fill = Scalar(0))
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0)
      throw DimensionError("image dimensions must be non-negative");
    planes_.assign(channels, Plane::Constant(height, width, fill));
  }

  explicit ImageT(std::vector<Plane> planes) : planes_(std::move(planes)) {
    channels_ = static_cast<int>(planes_.size());
    if (channels_ > 0) {
      height_ = static_cast<int>(planes_[0].rows());
      width_ = static_cast<int>(planes_[0].cols());
    }
    for (const auto& p : planes_)
      if (p.rows() != height_ || p.cols() != width_)
        throw DimensionError("image planes differ in size");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Eigen::Index size() const { return Eigen::Index(height_) * width_ * channels_; }
  bool empty() const { return size() == 0; }

  Plane& plane(int c) { return planes_[c]; }
  const Plane& plane(int c) const { return planes_[c]; }
  std::vector<Plane>& planes() { return planes_; }
  const std::vector<Plane>& planes() const { return planes_; }

  Scalar& operator()(int y, int x, int c) { return planes_[c](y, x); }
  Scalar operator()(int y, int x, int c) const { return planes_[c](y, x); }

  bool same_shape(const ImageT& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  template <typename Other>
  ImageT<Other> cast() const {
    std::vector<PlaneT<Other>> out;
    out.reserve(planes_.size());
    for (const auto& p : planes_) out.push_back(p.template cast<Other>());
    ImageT<Other> img(std::move(out));
    return img;
  }

  bool operator==(const ImageT& other) const {
    if (!same_shape(other)) return false;
    for (int c = 0; c < channels_; ++c)
      if ((planes_[c] != other.planes_[c]).any()) return false;
    return true;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<Plane> planes_;
};

using Image = ImageT<float>;
using ImageD = ImageT<double>;
using Plane = PlaneT<float>;
using PlaneD = PlaneT<double>;

/// A labelled image of a dataset split; `id` is the source filename.
struct LabeledSample {
  Image image;
  int label = 0;
  std::string id;
};

template <typename Scalar>
void require_same_shape(const ImageT<Scalar>& a, const ImageT<Scalar>& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": image shapes differ");
}

/// Applies `f(plane)` to every channel.
template <typename Scalar, typename F>
ImageT<Scalar> map_planes(const ImageT<Scalar>& a, F&& f) {
  std::vector<PlaneT<Scalar>> out;
  out.reserve(a.channels());
  for (int c = 0; c < a.channels(); ++c) out.emplace_back(f(a.plane(c)));
  return ImageT<Scalar>(std::move(out));
}

/// Applies `f(plane_a, plane_b)` to every channel pair.
template <typename Scalar, typename F>
ImageT<Scalar> map_planes(const ImageT<Scalar>& a, const ImageT<Scalar>& b, F&& f) {
  require_same_shape(a, b, "map_planes");
  std::vector<PlaneT<Scalar>> out;
  out.reserve(a.channels());
  for (int c = 0; c < a.channels(); ++c) out.emplace_back(f(a.plane(c), b.plane(c)));
  return ImageT<Scalar>(std::move(out));
}

template <typename Scalar>
ImageT<Scalar> clamp01(const ImageT<Scalar>& img) {
  return map_planes(img, [](const auto& p) { return p.max(Scalar(0)).min(Scalar(1)); });
}

template <typename Scalar>
ImageT<Scalar> operator+(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  return map_planes(a, b, [](const auto& x, const auto& y) { return x + y; });
}

template <typename Scalar>
ImageT<Scalar> operator-(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  return map_planes(a, b, [](const auto& x, const auto& y) { return x - y; });
}

template <typename Scalar>
ImageT<Scalar> operator*(const ImageT<Scalar>& a, Scalar s) {
  return map_planes(a, [s](const auto& x) { return x * s; });
}

template <typename Scalar>
ImageT<Scalar> operator*(Scalar s, const ImageT<Scalar>& a) {
  return a * s;
}

template <typename Scalar>
ImageT<Scalar> hadamard(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  return map_planes(a, b, [](const auto& x, const auto& y) { return x * y; });
}

template <typename Scalar>
ImageT<Scalar> sign(const ImageT<Scalar>& a) {
  return map_planes(a, [](const auto& x) { return x.sign(); });
}

/// Inner product with double accumulation.
template <typename Scalar>
double dot(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    acc += (a.plane(c).template cast<double>() * b.plane(c).template cast<double>()).sum();
  return acc;
}

template <typename Scalar>
double max_abs(const ImageT<Scalar>& a) {
  double m = 0.0;
  for (const auto& p : a.planes())
    if (p.size() > 0) m = std::max(m, static_cast<double>(p.abs().maxCoeff()));
  return m;
}

template <typename Scalar>
double max_abs_diff(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    if (a.plane(c).size() > 0)
      m = std::max(m, static_cast<double>((a.plane(c) - b.plane(c)).abs().maxCoeff()));
  return m;
}

template <typename Scalar>
double min_value(const ImageT<Scalar>& a) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : a.planes()) m = std::min(m, static_cast<double>(p.minCoeff()));
  return m;
}

template <typename Scalar>
double max_value(const ImageT<Scalar>& a) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : a.planes()) m = std::max(m, static_cast<double>(p.maxCoeff()));
  return m;
}

/// Luma 0.299 R + 0.587 G + 0.114 B in double; single-channel images pass through.
template <typename Scalar>
PlaneD luminance(const ImageT<Scalar>& img) {
  if (img.channels() == 1) return img.plane(0).template cast<double>();
  if (img.channels() != 3) throw DimensionError("luminance needs 1 or 3 channels");
  return 0.299 * img.plane(0).template cast<double>() + 0.587 * img.plane(1).template cast<double>() +
         0.114 * img.plane(2).template cast<double>();
}

}  // namespace expattack
