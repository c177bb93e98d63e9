#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "expattack/image.hpp"
#include "expattack/pyramid.hpp"

namespace expattack {

/// Exposure shifts e_1..e_N in EV stops, all within [-lambda, lambda].
struct BracketSpec {
  double lambda = 1.0;
  std::vector<double> shifts{-1.0, -0.5, 0.0, 0.5, 1.0};

  /// N shifts evenly spaced over [-lambda, lambda]; N = 1 gives {0}.
  static BracketSpec symmetric(int count, double lambda) {
    if (count < 1) throw ConfigError("bracket count must be >= 1");
    BracketSpec spec;
    spec.lambda = lambda;
    spec.shifts.clear();
    if (count == 1) {
      spec.shifts.push_back(0.0);
    } else {
      for (int i = 0; i < count; ++i) spec.shifts.push_back(-lambda + 2.0 * lambda * i / (count - 1));
    }
    spec.validate();
    return spec;
  }

  int count() const { return static_cast<int>(shifts.size()); }

  void validate() const {
    if (!(lambda > 0)) throw ConfigError("bracket lambda must be > 0");
    if (shifts.empty()) throw ConfigError("bracket needs at least one shift");
    for (std::size_t i = 0; i < shifts.size(); ++i) {
      if (std::abs(shifts[i]) > lambda) throw ConfigError("bracket shift outside [-lambda, lambda]");
      if (i > 0 && shifts[i] < shifts[i - 1]) throw ConfigError("bracket shifts must be ascending");
    }
  }

  bool operator==(const BracketSpec&) const = default;
};

/// X_i = clamp01(X * 2^e_i) for every shift, in the order given.
template <typename Scalar>
std::vector<ImageT<Scalar>> generate_brackets(const ImageT<Scalar>& img, const BracketSpec& spec) {
  spec.validate();
  std::vector<ImageT<Scalar>> out;
  out.reserve(spec.shifts.size());
  for (double e : spec.shifts) out.push_back(clamp01(img * static_cast<Scalar>(std::exp2(e))));
  return out;
}

/// Per-level, per-exposure weight maps of bracketed fusion; maps[l][i] is sized like band l.
template <typename Scalar>
struct WeightMapsT {
  std::vector<std::vector<ImageT<Scalar>>> maps;

  int levels() const { return static_cast<int>(maps.size()); }
  int exposures() const { return maps.empty() ? 0 : static_cast<int>(maps[0].size()); }
};

/// Spatially varying kernels of convolutional fusion. taps[l][i][t] holds tap t
/// (row-major over the K x K window) of every position of band l, exposure i.
template <typename Scalar>
struct KernelFieldT {
  int kernel_size = 1;
  std::vector<std::vector<std::vector<ImageT<Scalar>>>> taps;

  int levels() const { return static_cast<int>(taps.size()); }
  int exposures() const { return taps.empty() ? 0 : static_cast<int>(taps[0].size()); }
  int tap_count() const { return kernel_size * kernel_size; }
  int center_tap() const { return tap_count() / 2; }
};

using WeightMaps = WeightMapsT<double>;
using KernelField = KernelFieldT<double>;

/// W_i^l = 1/N everywhere.
template <typename Scalar>
WeightMapsT<Scalar> identity_weights(int height, int width, int channels, int levels, int exposures) {
  pyramid_detail::check_level_count(height, width, levels);
  WeightMapsT<Scalar> w;
  const Scalar v = Scalar(1) / Scalar(exposures);
  for (auto [h, wd] : pyramid_detail::level_sizes(height, width, levels))
    w.maps.emplace_back(exposures, ImageT<Scalar>(h, wd, channels, v));
  return w;
}

/// Center tap 1/N, all other taps 0.
template <typename Scalar>
KernelFieldT<Scalar> identity_kernels(int height, int width, int channels, int levels, int exposures,
                                      int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel size must be odd and >= 1");
  pyramid_detail::check_level_count(height, width, levels);
  KernelFieldT<Scalar> k;
  k.kernel_size = kernel_size;
  const int taps = kernel_size * kernel_size;
  const Scalar v = Scalar(1) / Scalar(exposures);
  for (auto [h, wd] : pyramid_detail::level_sizes(height, width, levels)) {
    std::vector<std::vector<ImageT<Scalar>>> level(exposures);
    for (auto& exposure : level) {
      exposure.assign(taps, ImageT<Scalar>(h, wd, channels, Scalar(0)));
      exposure[taps / 2] = ImageT<Scalar>(h, wd, channels, v);
    }
    k.taps.push_back(std::move(level));
  }
  return k;
}

/// Lifts element-wise weights to 1x1 kernels.
template <typename Scalar>
KernelFieldT<Scalar> lift_to_kernels(const WeightMapsT<Scalar>& w) {
  KernelFieldT<Scalar> k;
  k.kernel_size = 1;
  for (const auto& level : w.maps) {
    std::vector<std::vector<ImageT<Scalar>>> out;
    for (const auto& m : level) out.push_back({m});
    k.taps.push_back(std::move(out));
  }
  return k;
}

/// Rescales every position so its weights over all exposures (and taps) sum to 1.
/// Positions whose sum is below 1e-6 in magnitude fall back to the identity init.
template <typename Scalar>
void project_constraints(WeightMapsT<Scalar>& w) {
  const int n = w.exposures();
  for (auto& level : w.maps) {
    const ImageT<Scalar>& shape = level[0];
    for (int c = 0; c < shape.channels(); ++c) {
      PlaneT<Scalar> sum = PlaneT<Scalar>::Zero(shape.height(), shape.width());
      for (int i = 0; i < n; ++i) sum += level[i].plane(c);
      const auto degenerate = (sum.abs() < Scalar(1e-6)).eval();
      for (int i = 0; i < n; ++i) {
        auto& p = level[i].plane(c);
        p = degenerate.select(Scalar(1) / Scalar(n), p / sum);
      }
    }
  }
}

template <typename Scalar>
void project_constraints(KernelFieldT<Scalar>& k) {
  const int n = k.exposures();
  const int taps = k.tap_count();
  const int center = k.center_tap();
  for (auto& level : k.taps) {
    const ImageT<Scalar>& shape = level[0][0];
    for (int c = 0; c < shape.channels(); ++c) {
      PlaneT<Scalar> sum = PlaneT<Scalar>::Zero(shape.height(), shape.width());
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < taps; ++t) sum += level[i][t].plane(c);
      const auto degenerate = (sum.abs() < Scalar(1e-6)).eval();
      for (int i = 0; i < n; ++i)
        for (int t = 0; t < taps; ++t) {
          auto& p = level[i][t].plane(c);
          const Scalar reset = t == center ? Scalar(1) / Scalar(n) : Scalar(0);
          p = degenerate.select(reset, p / sum);
        }
    }
  }
}

/// Largest |sum - 1| over all positions (double accumulation).
template <typename Scalar>
double constraint_residual(const WeightMapsT<Scalar>& w) {
  double worst = 0.0;
  for (const auto& level : w.maps)
    for (int c = 0; c < level[0].channels(); ++c) {
      PlaneD sum = PlaneD::Zero(level[0].height(), level[0].width());
      for (const auto& m : level) sum += m.plane(c).template cast<double>();
      worst = std::max(worst, (sum - 1.0).abs().maxCoeff());
    }
  return worst;
}

template <typename Scalar>
double constraint_residual(const KernelFieldT<Scalar>& k) {
  double worst = 0.0;
  for (const auto& level : k.taps)
    for (int c = 0; c < level[0][0].channels(); ++c) {
      PlaneD sum = PlaneD::Zero(level[0][0].height(), level[0][0].width());
      for (const auto& exposure : level)
        for (const auto& tap : exposure) sum += tap.plane(c).template cast<double>();
      worst = std::max(worst, (sum - 1.0).abs().maxCoeff());
    }
  return worst;
}

/// params += alpha * sign(grad), entry by entry.
template <typename Scalar>
void sign_ascent_step(WeightMapsT<Scalar>& w, const WeightMapsT<Scalar>& grad, Scalar alpha) {
  for (std::size_t l = 0; l < w.maps.size(); ++l)
    for (std::size_t i = 0; i < w.maps[l].size(); ++i)
      for (int c = 0; c < w.maps[l][i].channels(); ++c)
        w.maps[l][i].plane(c) += alpha * grad.maps[l][i].plane(c).sign();
}

template <typename Scalar>
void sign_ascent_step(KernelFieldT<Scalar>& k, const KernelFieldT<Scalar>& grad, Scalar alpha) {
  for (std::size_t l = 0; l < k.taps.size(); ++l)
    for (std::size_t i = 0; i < k.taps[l].size(); ++i)
      for (std::size_t t = 0; t < k.taps[l][i].size(); ++t)
        for (int c = 0; c < k.taps[l][i][t].channels(); ++c)
          k.taps[l][i][t].plane(c) += alpha * grad.taps[l][i][t].plane(c).sign();
}

/// Pyramids of a fixed bracket sequence plus the forward/adjoint fusion maps.
///
/// Decomposition (and, for K > 1, the reflected neighbourhood samples of every
/// band) is computed once, so repeated fuse/gradient calls inside an attack
/// loop only pay for the weighted sums and one pyramid collapse.
template <typename Scalar>
class FusionOperator {
 public:
  FusionOperator(const std::vector<ImageT<Scalar>>& brackets, int levels, int kernel_size = 1)
      : levels_(levels), kernel_size_(kernel_size) {
    if (brackets.empty()) throw DimensionError("fusion needs at least one bracket");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel size must be odd and >= 1");
    for (const auto& b : brackets) require_same_shape(brackets[0], b, "fusion brackets");
    height_ = brackets[0].height();
    width_ = brackets[0].width();
    channels_ = brackets[0].channels();
    pyramids_.reserve(brackets.size());
    for (const auto& b : brackets) pyramids_.push_back(decompose(b, levels));
    if (kernel_size_ > 1) build_shifted();
  }

  int levels() const { return levels_; }
  int exposures() const { return static_cast<int>(pyramids_.size()); }
  int kernel_size() const { return kernel_size_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  const PyramidT<Scalar>& pyramid(int exposure) const { return pyramids_[exposure]; }

  WeightMapsT<Scalar> identity_weights() const {
    return expattack::identity_weights<Scalar>(height_, width_, channels_, levels_, exposures());
  }
  KernelFieldT<Scalar> identity_kernels() const {
    return expattack::identity_kernels<Scalar>(height_, width_, channels_, levels_, exposures(), kernel_size_);
  }

  /// Sum_i W_i^l . band_i^l per level, collapsed. Not clamped.
  ImageT<Scalar> fuse(const WeightMapsT<Scalar>& w) const {
    check(w);
    PyramidT<Scalar> fused;
    for (int l = 0; l < levels_; ++l) {
      const ImageT<Scalar>& shape = pyramids_[0][l];
      ImageT<Scalar> acc(shape.height(), shape.width(), channels_);
      for (int i = 0; i < exposures(); ++i)
        for (int c = 0; c < channels_; ++c) acc.plane(c) += w.maps[l][i].plane(c) * pyramids_[i][l].plane(c);
      fused.levels.push_back(std::move(acc));
    }
    return reconstruct(fused);
  }

  /// Sum_i K_i^l (*) band_i^l with a distinct kernel per position, collapsed. Not clamped.
  ImageT<Scalar> fuse(const KernelFieldT<Scalar>& k) const {
    check(k);
    PyramidT<Scalar> fused;
    for (int l = 0; l < levels_; ++l) {
      const ImageT<Scalar>& shape = pyramids_[0][l];
      ImageT<Scalar> acc(shape.height(), shape.width(), channels_);
      for (int i = 0; i < exposures(); ++i)
        for (int t = 0; t < k.tap_count(); ++t) {
          const ImageT<Scalar>& src = sample(l, i, t);
          for (int c = 0; c < channels_; ++c) acc.plane(c) += k.taps[l][i][t].plane(c) * src.plane(c);
        }
      fused.levels.push_back(std::move(acc));
    }
    return reconstruct(fused);
  }

  /// Gradient of <clamp01(fuse(w)), grad_out> w.r.t. every weight, given the
  /// pre-clamp fused image. Positions where the clamp is active get zero.
  WeightMapsT<Scalar> gradient(const WeightMapsT<Scalar>& w, const ImageT<Scalar>& pre_clamp,
                               const ImageT<Scalar>& grad_out) const {
    check(w);
    const PyramidT<Scalar> band_grad = band_gradient(pre_clamp, grad_out);
    WeightMapsT<Scalar> g;
    g.maps.resize(levels_);
    for (int l = 0; l < levels_; ++l)
      for (int i = 0; i < exposures(); ++i) g.maps[l].push_back(hadamard(band_grad[l], pyramids_[i][l]));
    return g;
  }

  KernelFieldT<Scalar> gradient(const KernelFieldT<Scalar>& k, const ImageT<Scalar>& pre_clamp,
                                const ImageT<Scalar>& grad_out) const {
    check(k);
    const PyramidT<Scalar> band_grad = band_gradient(pre_clamp, grad_out);
    KernelFieldT<Scalar> g;
    g.kernel_size = k.kernel_size;
    g.taps.resize(levels_);
    for (int l = 0; l < levels_; ++l) {
      g.taps[l].resize(exposures());
      for (int i = 0; i < exposures(); ++i)
        for (int t = 0; t < k.tap_count(); ++t) g.taps[l][i].push_back(hadamard(band_grad[l], sample(l, i, t)));
    }
    return g;
  }

 private:
  PyramidT<Scalar> band_gradient(const ImageT<Scalar>& pre_clamp, const ImageT<Scalar>& grad_out) const {
    if (pre_clamp.height() != height_ || pre_clamp.width() != width_ || pre_clamp.channels() != channels_)
      throw DimensionError("fusion gradient: pre-clamp image has wrong size");
    require_same_shape(pre_clamp, grad_out, "fusion gradient");
    const ImageT<Scalar> masked = map_planes(pre_clamp, grad_out, [](const auto& v, const auto& g) {
      return ((v >= Scalar(0)) && (v <= Scalar(1))).select(g, Scalar(0));
    });
    return reconstruct_adjoint(masked, levels_);
  }

  // Band l of exposure i read at the offset of tap t (reflect borders).
  const ImageT<Scalar>& sample(int l, int i, int t) const {
    if (kernel_size_ == 1) return pyramids_[i][l];
    return shifted_[l][i][t];
  }

  void build_shifted() {
    const int r = kernel_size_ / 2;
    shifted_.resize(levels_);
    for (int l = 0; l < levels_; ++l)
      for (int i = 0; i < exposures(); ++i) {
        const ImageT<Scalar>& band = pyramids_[i][l];
        const int h = band.height();
        const int w = band.width();
        std::vector<ImageT<Scalar>> taps;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            ImageT<Scalar> s(h, w, channels_);
            for (int c = 0; c < channels_; ++c)
              for (int y = 0; y < h; ++y) {
                const int sy = reflect_index(y + dy, h);
                for (int x = 0; x < w; ++x) s.plane(c)(y, x) = band.plane(c)(sy, reflect_index(x + dx, w));
              }
            taps.push_back(std::move(s));
          }
        shifted_[l].push_back(std::move(taps));
      }
  }

  void check_band_shape(const ImageT<Scalar>& m, int l) const {
    const ImageT<Scalar>& band = pyramids_[0][l];
    if (!m.same_shape(band))
      throw DimensionError("fusion parameters do not match pyramid level " + std::to_string(l));
  }

  void check(const WeightMapsT<Scalar>& w) const {
    if (w.levels() != levels_ || w.exposures() != exposures())
      throw DimensionError("weight maps do not match level/exposure count");
    for (int l = 0; l < levels_; ++l)
      for (const auto& m : w.maps[l]) check_band_shape(m, l);
  }

  void check(const KernelFieldT<Scalar>& k) const {
    if (k.kernel_size != kernel_size_) throw DimensionError("kernel field size differs from fusion operator");
    if (k.levels() != levels_ || k.exposures() != exposures())
      throw DimensionError("kernel field does not match level/exposure count");
    for (int l = 0; l < levels_; ++l)
      for (const auto& exposure : k.taps[l]) {
        if (static_cast<int>(exposure.size()) != k.tap_count()) throw DimensionError("kernel field tap count");
        for (const auto& m : exposure) check_band_shape(m, l);
      }
  }

  int levels_;
  int kernel_size_;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<PyramidT<Scalar>> pyramids_;
  std::vector<std::vector<std::vector<ImageT<Scalar>>>> shifted_;
};

/// Bracketed exposure fusion with element-wise weight maps, clamped to [0,1].
template <typename Scalar>
ImageT<Scalar> fuse_bef(const std::vector<ImageT<Scalar>>& brackets, const WeightMapsT<Scalar>& w, int levels) {
  return clamp01(FusionOperator<Scalar>(brackets, levels, 1).fuse(w));
}

/// Convolutional bracketed exposure fusion, clamped to [0,1].
template <typename Scalar>
ImageT<Scalar> fuse_cbef(const std::vector<ImageT<Scalar>>& brackets, const KernelFieldT<Scalar>& k, int levels) {
  return clamp01(FusionOperator<Scalar>(brackets, levels, k.kernel_size).fuse(k));
}

/// d<clamp01(fuse(params)), grad_out>/d params.
template <typename Scalar>
WeightMapsT<Scalar> fusion_param_gradient(const std::vector<ImageT<Scalar>>& brackets, const WeightMapsT<Scalar>& w,
                                          int levels, const ImageT<Scalar>& grad_out) {
  const FusionOperator<Scalar> op(brackets, levels, 1);
  return op.gradient(w, op.fuse(w), grad_out);
}

template <typename Scalar>
KernelFieldT<Scalar> fusion_param_gradient(const std::vector<ImageT<Scalar>>& brackets,
                                           const KernelFieldT<Scalar>& k, int levels,
                                           const ImageT<Scalar>& grad_out) {
  const FusionOperator<Scalar> op(brackets, levels, k.kernel_size);
  return op.gradient(k, op.fuse(k), grad_out);
}

/// Writes parameters as float32 with a small header; see README for the layout.
void save_fusion_params(const WeightMaps& w, const std::string& path);
void save_fusion_params(const KernelField& k, const std::string& path);

/// Reads a parameter dump. Exactly one of the outputs is filled, by dump kind.
struct FusionParamDump {
  bool is_kernel_field = false;
  WeightMaps weights;
  KernelField kernels;
};
FusionParamDump load_fusion_params(const std::string& path);

}  // namespace expattack
