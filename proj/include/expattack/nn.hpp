#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "expattack/image.hpp"

namespace expattack::nn {

template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// C x H x W activations; row c holds channel c in row-major order.
template <typename Scalar>
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  MatrixR<Scalar> data;

  static FeatureMap zeros(int c, int h, int w) {
    return FeatureMap{c, h, w, MatrixR<Scalar>::Zero(c, Eigen::Index(h) * w)};
  }
  int spatial() const { return height * width; }
};

template <typename Scalar>
FeatureMap<Scalar> to_feature_map(const ImageT<Scalar>& img) {
  auto fm = FeatureMap<Scalar>::zeros(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c)
    fm.data.row(c) = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(img.plane(c).data(), fm.spatial());
  return fm;
}

template <typename Scalar>
ImageT<Scalar> to_image(const FeatureMap<Scalar>& fm) {
  ImageT<Scalar> img(fm.height, fm.width, fm.channels);
  for (int c = 0; c < fm.channels; ++c)
    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(img.plane(c).data(), fm.spatial()) = fm.data.row(c);
  return img;
}

namespace detail {

// Patch matrix of a zero-padded stride-1 "same" convolution:
// row (c * k + ky) * k + kx, column y * W + x.
template <typename Scalar>
MatrixR<Scalar> im2col(const FeatureMap<Scalar>& in, int k) {
  const int pad = k / 2;
  const int h = in.height;
  const int w = in.width;
  MatrixR<Scalar> cols = MatrixR<Scalar>::Zero(Eigen::Index(in.channels) * k * k, Eigen::Index(h) * w);
  for (int c = 0; c < in.channels; ++c) {
    const Scalar* src = in.data.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((Eigen::Index(c) * k + ky) * k + kx).data();
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = x0; x < x1; ++x) dst[y * w + x] = src[sy * w + x + dx];
        }
      }
  }
  return cols;
}

// Adjoint of im2col.
template <typename Scalar>
FeatureMap<Scalar> col2im(const MatrixR<Scalar>& cols, int channels, int h, int w, int k) {
  const int pad = k / 2;
  auto out = FeatureMap<Scalar>::zeros(channels, h, w);
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = out.data.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((Eigen::Index(c) * k + ky) * k + kx).data();
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (int x = x0; x < x1; ++x) dst[sy * w + x + dx] += src[y * w + x];
        }
      }
  }
  return out;
}

template <typename Scalar>
void he_normal(MatrixR<Scalar>& m, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace detail

/// Stride-1 "same" convolution, zero padding, odd kernel.
template <typename Scalar>
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  MatrixR<Scalar> weight;  // out x (in * k * k)
  Vector<Scalar> bias;

  Conv2d() = default;
  Conv2d(int in, int out, int k)
      : in_channels(in), out_channels(out), kernel(k),
        weight(MatrixR<Scalar>::Zero(out, Eigen::Index(in) * k * k)), bias(Vector<Scalar>::Zero(out)) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    if (in.channels != in_channels) throw DimensionError("conv2d: input channel mismatch");
    FeatureMap<Scalar> out{out_channels, in.height, in.width, {}};
    out.data.noalias() = weight * detail::im2col(in, kernel);
    out.data.colwise() += bias;
    return out;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>&, const FeatureMap<Scalar>& g,
                              Conv2d* grad) const {
    const MatrixR<Scalar> cols = detail::im2col(in, kernel);
    if (grad) {
      grad->weight.noalias() += g.data * cols.transpose();
      grad->bias += g.data.rowwise().sum();
    }
    const MatrixR<Scalar> dcols = weight.transpose() * g.data;
    return detail::col2im(dcols, in_channels, in.height, in.width, kernel);
  }

  void init(std::mt19937_64& rng) {
    detail::he_normal(weight, in_channels * kernel * kernel, rng);
    bias.setZero();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f(weight);
    f(bias);
  }

  template <typename T>
  Conv2d<T> cast() const {
    Conv2d<T> c(in_channels, out_channels, kernel);
    c.weight = weight.template cast<T>();
    c.bias = bias.template cast<T>();
    return c;
  }
};

/// One k x k filter per channel ("same" padding).
template <typename Scalar>
struct DepthwiseConv2d {
  int channels = 0;
  int kernel = 1;
  MatrixR<Scalar> weight;  // channels x (k * k)
  Vector<Scalar> bias;

  DepthwiseConv2d() = default;
  DepthwiseConv2d(int c, int k)
      : channels(c), kernel(k), weight(MatrixR<Scalar>::Zero(c, Eigen::Index(k) * k)),
        bias(Vector<Scalar>::Zero(c)) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    if (in.channels != channels) throw DimensionError("depthwise conv: channel mismatch");
    const int h = in.height, w = in.width, pad = kernel / 2;
    auto out = FeatureMap<Scalar>::zeros(channels, h, w);
    for (int c = 0; c < channels; ++c) {
      const Scalar* src = in.data.row(c).data();
      Scalar* dst = out.data.row(c).data();
      for (int i = 0; i < h * w; ++i) dst[i] = bias(c);
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const Scalar wt = weight(c, ky * kernel + kx);
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            for (int x = x0; x < x1; ++x) dst[y * w + x] += wt * src[sy * w + x + dx];
          }
        }
    }
    return out;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>&, const FeatureMap<Scalar>& g,
                              DepthwiseConv2d* grad) const {
    const int h = in.height, w = in.width, pad = kernel / 2;
    auto gin = FeatureMap<Scalar>::zeros(channels, h, w);
    for (int c = 0; c < channels; ++c) {
      const Scalar* src = in.data.row(c).data();
      const Scalar* gout = g.data.row(c).data();
      Scalar* gsrc = gin.data.row(c).data();
      if (grad) grad->bias(c) += g.data.row(c).sum();
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          const Scalar wt = weight(c, ky * kernel + kx);
          Scalar acc = 0;
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            for (int x = x0; x < x1; ++x) {
              acc += gout[y * w + x] * src[sy * w + x + dx];
              gsrc[sy * w + x + dx] += wt * gout[y * w + x];
            }
          }
          if (grad) grad->weight(c, ky * kernel + kx) += acc;
        }
    }
    return gin;
  }

  void init(std::mt19937_64& rng) {
    detail::he_normal(weight, kernel * kernel, rng);
    bias.setZero();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f(weight);
    f(bias);
  }

  template <typename T>
  DepthwiseConv2d<T> cast() const {
    DepthwiseConv2d<T> d(channels, kernel);
    d.weight = weight.template cast<T>();
    d.bias = bias.template cast<T>();
    return d;
  }
};

template <typename Scalar>
struct Relu {
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    FeatureMap<Scalar> out = in;
    out.data = in.data.cwiseMax(Scalar(0));
    return out;
  }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>&, const FeatureMap<Scalar>& g,
                              Relu*) const {
    FeatureMap<Scalar> out = g;
    out.data = (in.data.array() > Scalar(0)).select(g.data.array(), Scalar(0)).matrix();
    return out;
  }
  void init(std::mt19937_64&) {}
  template <typename F>
  void for_each_param(F&&) const {}
  template <typename T>
  Relu<T> cast() const {
    return {};
  }
};

/// 2x2 max pooling, stride 2; a trailing odd row/column is dropped.
template <typename Scalar>
struct MaxPool2 {
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    const int oh = in.height / 2, ow = in.width / 2;
    if (oh < 1 || ow < 1) throw DimensionError("maxpool: input smaller than 2x2");
    auto out = FeatureMap<Scalar>::zeros(in.channels, oh, ow);
    for (int c = 0; c < in.channels; ++c) {
      const Scalar* src = in.data.row(c).data();
      Scalar* dst = out.data.row(c).data();
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const Scalar* p = src + 2 * y * in.width + 2 * x;
          dst[y * ow + x] = std::max(std::max(p[0], p[1]), std::max(p[in.width], p[in.width + 1]));
        }
    }
    return out;
  }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>& out,
                              const FeatureMap<Scalar>& g, MaxPool2*) const {
    auto gin = FeatureMap<Scalar>::zeros(in.channels, in.height, in.width);
    const int ow = out.width;
    for (int c = 0; c < in.channels; ++c) {
      const Scalar* src = in.data.row(c).data();
      Scalar* gsrc = gin.data.row(c).data();
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < ow; ++x) {
          const int base = 2 * y * in.width + 2 * x;
          const int cand[4] = {base, base + 1, base + in.width, base + in.width + 1};
          int best = cand[0];
          for (int q : cand)
            if (src[q] > src[best]) best = q;
          gsrc[best] += g.data(c, y * ow + x);
        }
    }
    return gin;
  }
  void init(std::mt19937_64&) {}
  template <typename F>
  void for_each_param(F&&) const {}
  template <typename T>
  MaxPool2<T> cast() const {
    return {};
  }
};

template <typename Scalar>
struct GlobalAvgPool {
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    FeatureMap<Scalar> out{in.channels, 1, 1, in.data.rowwise().mean()};
    return out;
  }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>&, const FeatureMap<Scalar>& g,
                              GlobalAvgPool*) const {
    FeatureMap<Scalar> gin{in.channels, in.height, in.width, {}};
    gin.data = (g.data.col(0) / Scalar(in.spatial())).replicate(1, in.spatial());
    return gin;
  }
  void init(std::mt19937_64&) {}
  template <typename F>
  void for_each_param(F&&) const {}
  template <typename T>
  GlobalAvgPool<T> cast() const {
    return {};
  }
};

/// Fully connected layer over the flattened input; output is outputs x 1 x 1.
template <typename Scalar>
struct Dense {
  int inputs = 0;
  int outputs = 0;
  MatrixR<Scalar> weight;  // outputs x inputs
  Vector<Scalar> bias;

  Dense() = default;
  Dense(int in, int out)
      : inputs(in), outputs(out), weight(MatrixR<Scalar>::Zero(out, in)), bias(Vector<Scalar>::Zero(out)) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& in) const {
    if (in.data.size() != inputs) throw DimensionError("dense: input size mismatch");
    const Eigen::Map<const Vector<Scalar>> x(in.data.data(), inputs);
    FeatureMap<Scalar> out{outputs, 1, 1, {}};
    out.data = weight * x + bias;
    return out;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& in, const FeatureMap<Scalar>&, const FeatureMap<Scalar>& g,
                              Dense* grad) const {
    const Eigen::Map<const Vector<Scalar>> x(in.data.data(), inputs);
    const Vector<Scalar> gv = g.data.col(0);
    if (grad) {
      grad->weight.noalias() += gv * x.transpose();
      grad->bias += gv;
    }
    FeatureMap<Scalar> gin{in.channels, in.height, in.width, MatrixR<Scalar>(in.channels, in.spatial())};
    Eigen::Map<Vector<Scalar>>(gin.data.data(), inputs) = weight.transpose() * gv;
    return gin;
  }

  void init(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / inputs));
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<Scalar>(dist(rng));
    bias.setZero();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(weight);
    f(bias);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    f(weight);
    f(bias);
  }

  template <typename T>
  Dense<T> cast() const {
    Dense<T> d(inputs, outputs);
    d.weight = weight.template cast<T>();
    d.bias = bias.template cast<T>();
    return d;
  }
};

template <typename Scalar>
using Layer = std::variant<Conv2d<Scalar>, DepthwiseConv2d<Scalar>, Relu<Scalar>, MaxPool2<Scalar>,
                           GlobalAvgPool<Scalar>, Dense<Scalar>>;

/// Desk-scale architectures: A = two conv blocks, B = three conv blocks with a
/// 5x5 stem, C = depthwise-separable blocks.
enum class Architecture : std::uint32_t { A = 1, B = 2, C = 3 };

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

struct InputSpec {
  int channels = 3;
  int height = 64;
  int width = 64;
  bool operator==(const InputSpec&) const = default;
};

template <typename Scalar>
struct LossGradient {
  Scalar loss = 0;
  ImageT<Scalar> input_gradient;
  Vector<Scalar> probabilities;
};

/// Log-sum-exp shifted softmax.
template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
  const Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// -log softmax(logits)[label], computed as logsumexp(z) - z_label.
template <typename Scalar>
Scalar cross_entropy(const Vector<Scalar>& logits, int label) {
  const Scalar m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(label);
}

/// Feed-forward classifier phi(.) over a fixed input shape.
template <typename Scalar>
class Classifier {
 public:
  Architecture architecture = Architecture::A;
  InputSpec input;
  int num_classes = 0;
  std::vector<Layer<Scalar>> layers;

  Vector<Scalar> logits(const ImageT<Scalar>& img) const {
    check_input(img);
    FeatureMap<Scalar> x = to_feature_map(img);
    for (const auto& layer : layers) x = std::visit([&](const auto& l) { return l.forward(x); }, layer);
    return Vector<Scalar>(x.data.col(0));
  }

  /// Class probabilities.
  Vector<Scalar> forward(const ImageT<Scalar>& img) const { return softmax(logits(img)); }

  int predict(const ImageT<Scalar>& img) const {
    Eigen::Index best = 0;
    logits(img).maxCoeff(&best);
    return static_cast<int>(best);
  }

  /// Cross-entropy J = -log p_label and dJ/d(input pixels).
  LossGradient<Scalar> loss_and_input_gradient(const ImageT<Scalar>& img, int label) const {
    check_label(label);
    std::vector<FeatureMap<Scalar>> acts = run(img);
    const Vector<Scalar> z = acts.back().data.col(0);
    LossGradient<Scalar> out;
    out.loss = cross_entropy(z, label);
    out.probabilities = softmax(z);
    out.input_gradient = to_image(backprop(acts, out.probabilities, label, nullptr));
    return out;
  }

  /// Loss of one sample; parameter gradients are added into `grad`.
  Scalar accumulate_param_gradient(const ImageT<Scalar>& img, int label, Classifier& grad) const {
    check_label(label);
    std::vector<FeatureMap<Scalar>> acts = run(img);
    const Vector<Scalar> z = acts.back().data.col(0);
    backprop(acts, softmax(z), label, &grad);
    return cross_entropy(z, label);
  }

  Classifier zeros_like() const {
    Classifier z = *this;
    z.for_each_param([](auto& p) { p.setZero(); });
    return z;
  }

  template <typename F>
  void for_each_param(F&& f) {
    for (auto& layer : layers) std::visit([&](auto& l) { l.for_each_param(f); }, layer);
  }
  template <typename F>
  void for_each_param(F&& f) const {
    for (const auto& layer : layers) std::visit([&](const auto& l) { l.for_each_param(f); }, layer);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_param([&](const auto& p) { n += static_cast<std::size_t>(p.size()); });
    return n;
  }

  template <typename T>
  Classifier<T> cast() const {
    Classifier<T> c;
    c.architecture = architecture;
    c.input = input;
    c.num_classes = num_classes;
    for (const auto& layer : layers)
      c.layers.push_back(std::visit([](const auto& l) -> Layer<T> { return l.template cast<T>(); }, layer));
    return c;
  }

 private:
  void check_input(const ImageT<Scalar>& img) const {
    if (img.channels() != input.channels || img.height() != input.height || img.width() != input.width)
      throw DimensionError("classifier expects " + std::to_string(input.height) + "x" +
                           std::to_string(input.width) + "x" + std::to_string(input.channels) + " input, got " +
                           std::to_string(img.height()) + "x" + std::to_string(img.width()) + "x" +
                           std::to_string(img.channels()));
  }

  void check_label(int label) const {
    if (label < 0 || label >= num_classes) throw ConfigError("label out of range");
  }

  std::vector<FeatureMap<Scalar>> run(const ImageT<Scalar>& img) const {
    check_input(img);
    std::vector<FeatureMap<Scalar>> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(to_feature_map(img));
    for (const auto& layer : layers)
      acts.push_back(std::visit([&](const auto& l) { return l.forward(acts.back()); }, layer));
    return acts;
  }

  FeatureMap<Scalar> backprop(const std::vector<FeatureMap<Scalar>>& acts, const Vector<Scalar>& probs, int label,
                              Classifier* grad) const {
    FeatureMap<Scalar> g{num_classes, 1, 1, probs};
    g.data(label, 0) -= Scalar(1);
    for (std::size_t k = layers.size(); k-- > 0;) {
      g = std::visit(
          [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            L* gl = grad ? &std::get<L>(grad->layers[k]) : nullptr;
            return l.backward(acts[k], acts[k + 1], g, gl);
          },
          layers[k]);
    }
    return g;
  }
};

/// Builds an architecture with He-normal weights drawn from `seed`.
template <typename Scalar>
Classifier<Scalar> make_classifier(Architecture arch, InputSpec input, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
  Classifier<Scalar> m;
  m.architecture = arch;
  m.input = input;
  m.num_classes = num_classes;
  auto& L = m.layers;
  const int c = input.channels;
  switch (arch) {
    case Architecture::A:
      L = {Conv2d<Scalar>(c, 8, 3), Relu<Scalar>{}, MaxPool2<Scalar>{}, Conv2d<Scalar>(8, 16, 3), Relu<Scalar>{},
           MaxPool2<Scalar>{}, GlobalAvgPool<Scalar>{}, Dense<Scalar>(16, num_classes)};
      break;
    case Architecture::B:
      L = {Conv2d<Scalar>(c, 8, 5),  Relu<Scalar>{}, MaxPool2<Scalar>{},      Conv2d<Scalar>(8, 12, 3),
           Relu<Scalar>{},           MaxPool2<Scalar>{}, Conv2d<Scalar>(12, 16, 3), Relu<Scalar>{},
           GlobalAvgPool<Scalar>{}, Dense<Scalar>(16, num_classes)};
      break;
    case Architecture::C:
      L = {Conv2d<Scalar>(c, 8, 3),   Relu<Scalar>{},           MaxPool2<Scalar>{},
           DepthwiseConv2d<Scalar>(8, 3), Relu<Scalar>{},        Conv2d<Scalar>(8, 16, 1),
           Relu<Scalar>{},            MaxPool2<Scalar>{},       DepthwiseConv2d<Scalar>(16, 3),
           Relu<Scalar>{},            Conv2d<Scalar>(16, 24, 1), Relu<Scalar>{},
           GlobalAvgPool<Scalar>{},   Dense<Scalar>(24, num_classes)};
      break;
    default:
      throw ConfigError("unknown architecture");
  }
  std::mt19937_64 rng(seed);
  for (auto& layer : L) std::visit([&](auto& l) { l.init(rng); }, layer);
  return m;
}

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double clip_norm = 5.0;  // 0 disables
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

using Model = Classifier<float>;

/// Minibatch SGD with momentum on mean cross-entropy. Deterministic given cfg.seed.
Model train(Model model, std::span<const LabeledSample> data, const TrainConfig& cfg);

/// Fraction of samples whose arg-max prediction equals the label.
double accuracy(const Model& model, std::span<const LabeledSample> data);

/// Binary model file: magic, version, architecture, dims, float32 parameters.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);
Model load_model(const std::string& path, Architecture expected);

}  // namespace expattack::nn
