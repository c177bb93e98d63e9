#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "expattack/image.hpp"

namespace expattack {

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows of the luma
/// channel; K1 = 0.01, K2 = 0.03, dynamic range 1. Symmetric in (a, b).
double ssim(const Image& a, const Image& b);

/// Mean-subtracted contrast-normalized coefficients of the luma channel on the
/// 0..255 scale: (X - mu) / (sigma + 1) with a 7x7 Gaussian (sigma 7/6) window.
ImageD mscn(const Image& img);

struct GgdFit {
  double shape = 2.0;
  double variance = 0.0;
};

struct AggdFit {
  double shape = 2.0;
  double mean = 0.0;
  double left_variance = 0.0;
  double right_variance = 0.0;
};

/// Moment-matching fits over the shape grid 0.2:0.001:10.
GgdFit fit_ggd(std::span<const double> samples);
AggdFit fit_aggd(std::span<const double> samples);

inline constexpr int kBrisqueFeatureCount = 36;
using BrisqueFeatures = Eigen::Matrix<double, kBrisqueFeatureCount, 1>;

/// Per scale (full, half): GGD (shape, variance) of MSCN, then AGGD
/// (shape, mean, left var, right var) of its horizontal, vertical and two
/// diagonal neighbour products. Needs min(H, W) >= 32.
BrisqueFeatures brisque_features(const Image& img);

/// Gaussian fit of clean-corpus features; scores are Mahalanobis distances
/// (lower = closer to the corpus). Covariance is shrunk toward its diagonal.
class NaturalnessModel {
 public:
  static constexpr std::size_t kMinCorpus = 30;

  NaturalnessModel() = default;

  static NaturalnessModel fit(std::span<const BrisqueFeatures> corpus, double shrinkage = 0.25);

  bool fitted() const { return fitted_; }
  double score(const BrisqueFeatures& features) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  std::uint64_t corpus_hash() const { return corpus_hash_; }
  std::uint32_t corpus_size() const { return corpus_size_; }

  /// Layout: "EXNM", u32 version, u32 dim, u32 corpus size, u64 corpus hash,
  /// float32 mean[dim], float32 covariance[dim * dim] row-major.
  void save(const std::string& path) const;
  static NaturalnessModel load(const std::string& path);

 private:
  void factorize();

  bool fitted_ = false;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd inverse_;
  std::uint64_t corpus_hash_ = 0;
  std::uint32_t corpus_size_ = 0;
};

double naturalness_score(const BrisqueFeatures& features, const NaturalnessModel& model);

struct QualityReport {
  double ssim = 1.0;
  BrisqueFeatures brisque_features = BrisqueFeatures::Zero();
  double naturalness = 0.0;
};

QualityReport assess_quality(const Image& clean, const Image& adversarial, const NaturalnessModel& model);

}  // namespace expattack
