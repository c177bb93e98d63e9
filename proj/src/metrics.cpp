#include "expattack/metrics.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "expattack/filter.hpp"
#include "expattack/pyramid.hpp"

namespace expattack {

namespace {

// Correlation with the outer product of `taps`, keeping only positions where
// the window fits entirely inside the plane.
PlaneD valid_filter(const PlaneD& src, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int h = static_cast<int>(src.rows()) - k + 1;
  const int w = static_cast<int>(src.cols()) - k + 1;
  PlaneD rows = PlaneD::Zero(src.rows(), w);
  for (int t = 0; t < k; ++t) rows += taps[t] * src.middleCols(t, w);
  PlaneD out = PlaneD::Zero(h, w);
  for (int t = 0; t < k; ++t) out += taps[t] * rows.middleRows(t, h);
  return out;
}

// Shape grid shared by the GGD/AGGD fits.
struct ShapeGrid {
  std::vector<double> shape;
  std::vector<double> ggd_ratio;   // G(1/a) G(3/a) / G(2/a)^2
  std::vector<double> aggd_ratio;  // G(2/a)^2 / (G(1/a) G(3/a))

  ShapeGrid() {
    for (int i = 0; i <= 9800; ++i) {
      const double a = 0.2 + 0.001 * i;
      const double g1 = std::lgamma(1.0 / a), g2 = std::lgamma(2.0 / a), g3 = std::lgamma(3.0 / a);
      shape.push_back(a);
      ggd_ratio.push_back(std::exp(g1 + g3 - 2.0 * g2));
      aggd_ratio.push_back(std::exp(2.0 * g2 - g1 - g3));
    }
  }
};

const ShapeGrid& grid() {
  static const ShapeGrid g;
  return g;
}

std::vector<double> flatten(const PlaneD& p) { return {p.data(), p.data() + p.size()}; }

std::vector<double> neighbour_products(const PlaneD& m, int dy, int dx) {
  std::vector<double> out;
  const int h = static_cast<int>(m.rows());
  const int w = static_cast<int>(m.cols());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int yy = y + dy, xx = x + dx;
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      out.push_back(m(y, x) * m(yy, xx));
    }
  return out;
}

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const BrisqueFeatures> corpus) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& f : corpus)
    for (int i = 0; i < f.size(); ++i) {
      const float v = static_cast<float>(f(i));
      const auto* bytes = reinterpret_cast<const unsigned char*>(&v);
      for (std::size_t b = 0; b < sizeof(float); ++b) {
        h ^= bytes[b];
        h *= 1099511628211ULL;
      }
    }
  return h;
}

constexpr char kMagic[5] = "EXNM";
constexpr std::uint32_t kVersion = 1;

PlaneD mscn_plane(const PlaneD& luma255) {
  static const std::vector<double> taps = gaussian_kernel(7, 7.0 / 6.0);
  const int h = static_cast<int>(luma255.rows());
  const int w = static_cast<int>(luma255.cols());
  PlaneD out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double center = luma255(y, x);
      // Mean subtraction as a weighted sum of differences: exactly zero on flat regions.
      double diff = 0.0, mu = 0.0;
      for (int ky = -3; ky <= 3; ++ky)
        for (int kx = -3; kx <= 3; ++kx) {
          const double wgt = taps[ky + 3] * taps[kx + 3];
          const double v = luma255(reflect_index(y + ky, h), reflect_index(x + kx, w));
          diff += wgt * (center - v);
          mu += wgt * v;
        }
      double var = 0.0;
      for (int ky = -3; ky <= 3; ++ky)
        for (int kx = -3; kx <= 3; ++kx) {
          const double d = luma255(reflect_index(y + ky, h), reflect_index(x + kx, w)) - mu;
          var += taps[ky + 3] * taps[kx + 3] * d * d;
        }
      out(y, x) = diff / (std::sqrt(var) + 1.0);
    }
  return out;
}

void scale_features(const PlaneD& luma255, BrisqueFeatures& f, int offset) {
  const PlaneD m = mscn_plane(luma255);
  const GgdFit g = fit_ggd(flatten(m));
  f(offset + 0) = g.shape;
  f(offset + 1) = g.variance;
  constexpr int shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (int s = 0; s < 4; ++s) {
    const AggdFit a = fit_aggd(neighbour_products(m, shifts[s][0], shifts[s][1]));
    f(offset + 2 + 4 * s + 0) = a.shape;
    f(offset + 2 + 4 * s + 1) = a.mean;
    f(offset + 2 + 4 * s + 2) = a.left_variance;
    f(offset + 2 + 4 * s + 3) = a.right_variance;
  }
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.height() < 11 || a.width() < 11) throw DimensionError("ssim needs images of at least 11x11");
  static const std::vector<double> taps = gaussian_kernel(11, 1.5);
  const PlaneD x = luminance(a);
  const PlaneD y = luminance(b);
  const PlaneD mu_x = valid_filter(x, taps);
  const PlaneD mu_y = valid_filter(y, taps);
  const PlaneD xx = valid_filter(x * x, taps) - mu_x * mu_x;
  const PlaneD yy = valid_filter(y * y, taps) - mu_y * mu_y;
  const PlaneD xy = valid_filter(x * y, taps) - mu_x * mu_y;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const PlaneD map = ((2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)) /
                     ((mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2));
  return map.mean();
}

ImageD mscn(const Image& img) { return ImageD({mscn_plane(255.0 * luminance(img))}); }

GgdFit fit_ggd(std::span<const double> samples) {
  GgdFit fit;
  if (samples.empty()) return fit;
  double sq = 0.0, ab = 0.0;
  for (double v : samples) {
    sq += v * v;
    ab += std::abs(v);
  }
  sq /= static_cast<double>(samples.size());
  ab /= static_cast<double>(samples.size());
  fit.variance = sq;
  if (ab == 0.0) return fit;
  const double rho = sq / (ab * ab);
  const auto& g = grid();
  std::size_t best = 0;
  for (std::size_t i = 1; i < g.shape.size(); ++i)
    if (std::abs(rho - g.ggd_ratio[i]) < std::abs(rho - g.ggd_ratio[best])) best = i;
  fit.shape = g.shape[best];
  return fit;
}

AggdFit fit_aggd(std::span<const double> samples) {
  AggdFit fit;
  double left_sq = 0.0, right_sq = 0.0, ab = 0.0, sq = 0.0;
  std::size_t left_n = 0, right_n = 0;
  for (double v : samples) {
    if (v < 0) {
      left_sq += v * v;
      ++left_n;
    } else if (v > 0) {
      right_sq += v * v;
      ++right_n;
    }
    ab += std::abs(v);
    sq += v * v;
  }
  if (samples.empty() || sq == 0.0) return fit;
  const double left = left_n ? std::sqrt(left_sq / left_n) : 0.0;
  const double right = right_n ? std::sqrt(right_sq / right_n) : 0.0;
  const double n = static_cast<double>(samples.size());
  ab /= n;
  sq /= n;
  const double tiny = std::numeric_limits<double>::min();
  const double gamma_hat = std::max(left, tiny) / std::max(right, tiny);
  const double r_hat = ab * ab / sq;
  const double r_norm = r_hat * (std::pow(gamma_hat, 3) + 1.0) * (gamma_hat + 1.0) /
                        std::pow(gamma_hat * gamma_hat + 1.0, 2);
  const auto& g = grid();
  std::size_t best = 0;
  for (std::size_t i = 1; i < g.shape.size(); ++i)
    if (std::pow(g.aggd_ratio[i] - r_norm, 2) < std::pow(g.aggd_ratio[best] - r_norm, 2)) best = i;
  const double a = g.shape[best];
  fit.shape = a;
  fit.mean = (right - left) * std::exp(std::lgamma(2.0 / a) - std::lgamma(1.0 / a)) *
             std::sqrt(std::exp(std::lgamma(1.0 / a) - std::lgamma(3.0 / a)));
  fit.left_variance = left * left;
  fit.right_variance = right * right;
  return fit;
}

BrisqueFeatures brisque_features(const Image& img) {
  if (img.height() < 32 || img.width() < 32) throw DimensionError("brisque features need images of at least 32x32");
  BrisqueFeatures f;
  const PlaneD luma = 255.0 * luminance(img);
  scale_features(luma, f, 0);
  const ImageD half = pyramid_reduce(ImageD({luma}));
  scale_features(half.plane(0), f, 18);
  return f;
}

NaturalnessModel NaturalnessModel::fit(std::span<const BrisqueFeatures> corpus, double shrinkage) {
  if (corpus.size() < kMinCorpus)
    throw ConfigError("naturalness model needs at least " + std::to_string(kMinCorpus) + " clean images");
  if (shrinkage < 0 || shrinkage > 1) throw ConfigError("shrinkage must be in [0, 1]");
  const auto n = static_cast<Eigen::Index>(corpus.size());
  Eigen::MatrixXd x(n, kBrisqueFeatureCount);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = corpus[i].transpose();
  NaturalnessModel m;
  m.mean_ = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean_.transpose();
  const Eigen::MatrixXd sample_cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::MatrixXd diag = sample_cov.diagonal().asDiagonal();
  m.covariance_ = (1.0 - shrinkage) * sample_cov + shrinkage * diag;
  m.corpus_hash_ = fnv1a(corpus);
  m.corpus_size_ = static_cast<std::uint32_t>(corpus.size());
  m.factorize();
  return m;
}

void NaturalnessModel::factorize() {
  // Constant features have zero variance; a relative ridge keeps the system solvable.
  Eigen::MatrixXd c = covariance_;
  const double scale = std::max(c.diagonal().maxCoeff(), 1e-300);
  c.diagonal().array() += 1e-9 * scale + 1e-300;
  inverse_ = c.ldlt().solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
  fitted_ = true;
}

double NaturalnessModel::score(const BrisqueFeatures& features) const {
  if (!fitted_) throw ConfigError("naturalness model is not fitted");
  const Eigen::VectorXd d = features - mean_;
  return std::sqrt(std::max(0.0, d.dot(inverse_ * d)));
}

void NaturalnessModel::save(const std::string& path) const {
  if (!fitted_) throw ConfigError("cannot save an unfitted naturalness model");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write naturalness model " + path);
  binio::put_magic(out, kMagic);
  binio::put<std::uint32_t>(out, kVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(mean_.size()));
  binio::put<std::uint32_t>(out, corpus_size_);
  binio::put<std::uint64_t>(out, corpus_hash_);
  for (Eigen::Index i = 0; i < mean_.size(); ++i) binio::put<float>(out, static_cast<float>(mean_(i)));
  for (Eigen::Index r = 0; r < covariance_.rows(); ++r)
    for (Eigen::Index c = 0; c < covariance_.cols(); ++c) binio::put<float>(out, static_cast<float>(covariance_(r, c)));
  if (!out) throw IoError("failed writing " + path);
}

NaturalnessModel NaturalnessModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open naturalness model " + path);
  binio::expect_magic(in, kMagic);
  if (binio::get<std::uint32_t>(in, "version") != kVersion) throw FormatError("unsupported naturalness model version");
  const auto dim = binio::get<std::uint32_t>(in, "dimension");
  if (dim != kBrisqueFeatureCount) throw FormatError("naturalness model dimension mismatch");
  NaturalnessModel m;
  m.corpus_size_ = binio::get<std::uint32_t>(in, "corpus size");
  m.corpus_hash_ = binio::get<std::uint64_t>(in, "corpus hash");
  m.mean_.resize(dim);
  m.covariance_.resize(dim, dim);
  for (std::uint32_t i = 0; i < dim; ++i) m.mean_(i) = binio::get<float>(in, "mean");
  for (std::uint32_t r = 0; r < dim; ++r)
    for (std::uint32_t c = 0; c < dim; ++c) m.covariance_(r, c) = binio::get<float>(in, "covariance");
  m.factorize();
  return m;
}

double naturalness_score(const BrisqueFeatures& features, const NaturalnessModel& model) {
  return model.score(features);
}

QualityReport assess_quality(const Image& clean, const Image& adversarial, const NaturalnessModel& model) {
  QualityReport q;
  q.ssim = ssim(clean, adversarial);
  q.brisque_features = brisque_features(adversarial);
  q.naturalness = model.fitted() ? model.score(q.brisque_features) : 0.0;
  return q;
}

}  // namespace expattack
