#include <doctest.h>

#include "expattack/pyramid.hpp"
#include "test_util.hpp"

using namespace expattack;

namespace {

// Direct loop oracle for one reduce / expand step on a plane, written against
// the 5-tap binomial with mirror borders; independent of the sparse operators.
const double kTaps[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

PlaneD oracle_reduce(const PlaneD& p) {
  const int h = p.rows(), w = p.cols();
  PlaneD blur(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) s += kTaps[dy + 2] * kTaps[dx + 2] * p(mirror(y + dy, h), mirror(x + dx, w));
      blur(y, x) = s;
    }
  PlaneD out((h + 1) / 2, (w + 1) / 2);
  for (int y = 0; y < out.rows(); ++y)
    for (int x = 0; x < out.cols(); ++x) out(y, x) = blur(2 * y, 2 * x);
  return out;
}

PlaneD oracle_expand(const PlaneD& c, int h, int w) {
  PlaneD up = PlaneD::Zero(h, w);
  for (int y = 0; y < c.rows(); ++y)
    for (int x = 0; x < c.cols(); ++x) up(2 * y, 2 * x) = c(y, x);
  PlaneD out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          s += kTaps[dy + 2] * kTaps[dx + 2] * up(mirror(y + dy, h), mirror(x + dx, w));
      out(y, x) = (h > 1 ? 2.0 : 1.0) * (w > 1 ? 2.0 : 1.0) * s;
    }
  return out;
}

PyramidD random_pyramid(std::mt19937_64& rng, int h, int w, int c, int levels) {
  PyramidD p;
  for (int l = 0; l < levels; ++l) {
    p.levels.push_back(testutil::random_image<double>(rng, h, w, c, -1, 1));
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return p;
}

}  // namespace

TEST_CASE("L = 1 is the image itself") {
  std::mt19937_64 rng(1);
  const Image img = testutil::random_image(rng, 7, 5, 3);
  const Pyramid p = decompose(img, 1);
  REQUIRE(p.level_count() == 1);
  CHECK(p[0] == img);
  CHECK(reconstruct(p) == img);
}

TEST_CASE("constant image has zero detail bands") {
  for (int levels : {2, 3, 5}) {
    const Image img(20, 33, 3, 0.37f);
    const Pyramid p = decompose(img, levels);
    for (int l = 0; l + 1 < levels; ++l) CHECK(max_abs(p[l]) == 0.0);
    CHECK(max_abs_diff(p.levels.back(), Image(p.levels.back().height(), p.levels.back().width(), 3, 0.37f)) == 0.0);
  }
}

TEST_CASE("bands match the step-by-step oracle") {
  std::mt19937_64 rng(2);
  for (auto [h, w] : {std::pair{8, 8}, std::pair{9, 7}, std::pair{13, 16}}) {
    const ImageD img = testutil::random_image<double>(rng, h, w, 1);
    const PyramidD p = decompose(img, 3);
    const PlaneD g1 = img.plane(0);
    const PlaneD g2 = oracle_reduce(g1);
    const PlaneD g3 = oracle_reduce(g2);
    CHECK((p[0].plane(0) - (g1 - oracle_expand(g2, g1.rows(), g1.cols()))).abs().maxCoeff() < 1e-12);
    CHECK((p[1].plane(0) - (g2 - oracle_expand(g3, g2.rows(), g2.cols()))).abs().maxCoeff() < 1e-12);
    CHECK((p[2].plane(0) - g3).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("perfect reconstruction and shapes") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 17 + static_cast<int>(rng() % 48), w = 17 + static_cast<int>(rng() % 48);
    const Image img = testutil::random_image(rng, h, w, trial % 2 ? 3 : 1);
    for (int levels : {1, 3, 5}) {
      const Pyramid p = decompose(img, levels);
      CHECK(p[levels - 1].height() == (h + (1 << (levels - 1)) - 1) / (1 << (levels - 1)));
      CHECK(max_abs_diff(reconstruct(p), img) < 1e-6);
    }
  }
}

TEST_CASE("too many levels is a dimension error") {
  CHECK_THROWS_AS(decompose(Image(7, 40, 1), 4), DimensionError);
  CHECK_NOTHROW(decompose(Image(8, 40, 1), 4));
  CHECK_THROWS_AS(decompose(Image(8, 8, 1), 0), DimensionError);
}

TEST_CASE("reconstruct of special pyramids") {
  std::mt19937_64 rng(4);
  PyramidD p = random_pyramid(rng, 19, 12, 2, 4);
  for (auto& l : p.levels) l = ImageD(l.height(), l.width(), 2, 0.0);
  CHECK(max_abs(reconstruct(p)) == 0.0);
  p.levels.back() = ImageD(p.levels.back().height(), p.levels.back().width(), 2, 0.6);
  CHECK(max_abs_diff(reconstruct(p), ImageD(19, 12, 2, 0.6)) < 1e-6);

  p.levels[1] = ImageD(3, 3, 2);
  CHECK_THROWS_AS(reconstruct(p), DimensionError);
}

TEST_CASE("linearity") {
  std::mt19937_64 rng(5);
  const PyramidD p = random_pyramid(rng, 21, 18, 3, 3), q = random_pyramid(rng, 21, 18, 3, 3);
  PyramidD mix;
  for (int l = 0; l < 3; ++l) mix.levels.push_back(p[l] * 0.7 + q[l] * -1.3);
  CHECK(max_abs_diff(reconstruct(mix), reconstruct(p) * 0.7 + reconstruct(q) * -1.3) < 1e-6);
}

TEST_CASE("adjoint inner-product identity over 100 trials") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 8 + static_cast<int>(rng() % 30), w = 8 + static_cast<int>(rng() % 30);
    const int levels = 1 + static_cast<int>(rng() % 4);
    const PyramidD p = random_pyramid(rng, h, w, 1 + 2 * (trial % 2), levels);
    const ImageD g = testutil::random_image<double>(rng, h, w, p[0].channels(), -1, 1);
    const double lhs = dot(reconstruct(p), g);
    const double rhs = dot(p, reconstruct_adjoint(g, levels));
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, std::abs(lhs)));
  }
  std::mt19937_64 r2(7);
  const ImageD g = testutil::random_image<double>(r2, 9, 9, 1);
  CHECK(reconstruct_adjoint(g, 1)[0] == g);
}

TEST_CASE("adjoint columns match central differences") {
  std::mt19937_64 rng(8);
  const int levels = 3;
  const PyramidD p = random_pyramid(rng, 11, 9, 1, levels);
  const ImageD g = testutil::random_image<double>(rng, 11, 9, 1, -1, 1);
  const PyramidD adj = reconstruct_adjoint(g, levels);
  const double step = 1e-3;
  for (int l = 0; l < levels; ++l)
    for (int y = 0; y < p[l].height(); ++y)
      for (int x = 0; x < p[l].width(); ++x) {
        PyramidD plus = p, minus = p;
        plus[l](y, x, 0) += step;
        minus[l](y, x, 0) -= step;
        const double fd = (dot(reconstruct(plus), g) - dot(reconstruct(minus), g)) / (2 * step);
        const double a = adj[l](y, x, 0);
        CHECK(std::abs(fd - a) <= 1e-4 * std::max(std::abs(a), 1e-2));
      }
}
