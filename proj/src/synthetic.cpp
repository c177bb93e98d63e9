#include "expattack/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace expattack {

namespace {

using Rgb = std::array<double, 3>;

struct Canvas {
  int h, w;
  std::vector<PlaneD> rgb;
  PlaneD mask;  // 1 inside the field of view

  Canvas(int height, int width) : h(height), w(width), rgb(3, PlaneD::Zero(height, width)), mask(PlaneD::Zero(height, width)) {}

  // Blend `color` with Gaussian opacity `strength * exp(-d^2 / 2 s^2)` around (cy, cx).
  void splat(double cy, double cx, double sigma, const Rgb& color, double strength) {
    const int r = static_cast<int>(std::ceil(3 * sigma));
    for (int y = std::max(0, int(cy) - r); y <= std::min(h - 1, int(cy) + r + 1); ++y)
      for (int x = std::max(0, int(cx) - r); x <= std::min(w - 1, int(cx) + r + 1); ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double a = std::min(1.0, strength * std::exp(-d2 / (2 * sigma * sigma))) * mask(y, x);
        for (int c = 0; c < 3; ++c) rgb[c](y, x) = (1 - a) * rgb[c](y, x) + a * color[c];
      }
  }

  // Flat-topped blob of radius `radius` with a one-pixel soft edge.
  void disc(double cy, double cx, double radius, const Rgb& color, double strength) {
    const int r = static_cast<int>(std::ceil(radius + 2));
    for (int y = std::max(0, int(cy) - r); y <= std::min(h - 1, int(cy) + r); ++y)
      for (int x = std::max(0, int(cx) - r); x <= std::min(w - 1, int(cx) + r); ++x) {
        const double d = std::hypot(y - cy, x - cx);
        const double a = strength * std::clamp(radius + 0.5 - d, 0.0, 1.0) * mask(y, x);
        for (int c = 0; c < 3; ++c) rgb[c](y, x) = (1 - a) * rgb[c](y, x) + a * color[c];
      }
  }
};

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (train_per_class < 0 || test_per_class < 0) throw ConfigError("per-class counts must be >= 0");
  if (height < 32 || width < 32) throw ConfigError("synthetic images must be at least 32x32");
  if (channels != 3 && channels != 1) throw ConfigError("synthetic images have 1 or 3 channels");
}

Image render_fundus(const SyntheticSpec& spec, int label, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
  const int h = spec.height, w = spec.width;
  const double s = std::min(h, w);
  Canvas cv(h, w);

  const double cy = h / 2.0 + uni(-0.02, 0.02) * s;
  const double cx = w / 2.0 + uni(-0.02, 0.02) * s;
  const double radius = uni(0.44, 0.48) * s;
  const Rgb base{0.62, 0.29, 0.14};
  const double f1 = uni(1.0, 3.0) * 2 * std::numbers::pi / s, f2 = uni(1.0, 3.0) * 2 * std::numbers::pi / s;
  const double p1 = uni(0, 6.3), p2 = uni(0, 6.3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(y - cy, x - cx);
      const double m = std::clamp(radius - d + 0.5, 0.0, 1.0);
      cv.mask(y, x) = m;
      const double vignette = 1.0 - 0.35 * (d * d) / (radius * radius);
      const double texture = 1.0 + 0.04 * std::sin(f1 * x + p1) * std::cos(f2 * y + p2);
      for (int c = 0; c < 3; ++c) cv.rgb[c](y, x) = m * base[c] * vignette * texture;
    }

  // Optic disc on a random side, vessels leaving it.
  const double side = u(rng) < 0.5 ? -1.0 : 1.0;
  const double dy = cy + uni(-0.05, 0.05) * s;
  const double dx = cx + side * uni(0.22, 0.28) * s;
  const double disc_r = 0.085 * s;
  cv.splat(dy, dx, disc_r * 0.8, {0.95, 0.82, 0.55}, 1.2);
  const int vessels = 4 + static_cast<int>(u(rng) * 3);
  for (int v = 0; v < vessels; ++v) {
    double angle = uni(0, 2 * std::numbers::pi);
    const double bend = uni(-0.04, 0.04);
    double py = dy, px = dx;
    const double len = uni(0.45, 0.8) * s;
    for (double t = 0; t < len; t += 0.5) {
      py += 0.5 * std::sin(angle);
      px += 0.5 * std::cos(angle);
      angle += bend;
      cv.splat(py, px, 0.55 * (1.0 - 0.5 * t / len) + 0.25, {0.42, 0.08, 0.05}, 0.5);
    }
  }

  // Lesions: count and radius grow with the label, placed away from the disc and each other.
  const double lesion_r = (0.05 + 0.008 * label) * s;
  std::vector<std::pair<double, double>> placed;
  for (int k = 0; k < lesion_count(label); ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double a = uni(0, 2 * std::numbers::pi);
      const double r = std::sqrt(u(rng)) * 0.72 * radius;
      const double ly = cy + r * std::sin(a), lx = cx + r * std::cos(a);
      bool ok = std::hypot(ly - dy, lx - dx) > disc_r * 1.6 + lesion_r;
      for (auto [py, px] : placed) ok = ok && std::hypot(ly - py, lx - px) > 2.5 * lesion_r + 2;
      if (!ok && attempt < 199) continue;
      placed.emplace_back(ly, lx);
      cv.disc(ly, lx, lesion_r, {0.9, 0.85, 0.2}, 1.0);
      break;
    }
  }

  // Camera exposure varies by up to 0.3 stops either way.
  const double gain = std::exp2(uni(-0.3, 0.3));
  std::normal_distribution<double> noise(0.0, 0.01);
  Image img(h, w, spec.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      Rgb px{};
      for (int c = 0; c < 3; ++c) px[c] = gain * cv.rgb[c](y, x) + cv.mask(y, x) * noise(rng);
      if (spec.channels == 3) {
        for (int c = 0; c < 3; ++c) img(y, x, c) = static_cast<float>(std::clamp(px[c], 0.0, 1.0));
      } else {
        img(y, x, 0) = static_cast<float>(std::clamp(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2], 0.0, 1.0));
      }
    }
  return img;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticDataset ds;
  auto split = [&](const char* name, int per_class, std::uint64_t salt, std::vector<LabeledSample>& out) {
    const int total = per_class * spec.num_classes;
    for (int i = 0; i < total; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(i)};
      std::uint64_t image_seed = 0;
      std::array<std::uint32_t, 2> words{};
      seq.generate(words.begin(), words.end());
      image_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
      LabeledSample s;
      s.label = i % spec.num_classes;
      s.image = render_fundus(spec, s.label, image_seed);
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%05d.png", name, i);
      s.id = id;
      out.push_back(std::move(s));
    }
  };
  split("train", spec.train_per_class, 1, ds.train);
  split("test", spec.test_per_class, 2, ds.test);
  return ds;
}

}  // namespace expattack
