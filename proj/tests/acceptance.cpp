// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance <work dir>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "expattack/experiment.hpp"
#include "expattack/fusion.hpp"
#include "expattack/metrics.hpp"
#include "expattack/pyramid.hpp"
#include "expattack/report.hpp"
#include "test_util.hpp"

using namespace expattack;
namespace fs = std::filesystem;

namespace {

// Tolerances and protocol constants.
constexpr double kRoundTripTol = 1e-6;
constexpr double kRoundTripSeconds = 10;
constexpr double kFdStep = 1e-3;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradAbsFloor = 1e-6;
constexpr int kGradInstances = 20;
constexpr double kGradSeconds = 60;
constexpr double kReductionTol = 1e-6;
constexpr int kReductionInstances = 50;
constexpr double kConstraintTol = 1e-6;
constexpr double kIdentityTol = 1e-6;
constexpr double kCleanAccuracy = 0.90;
constexpr double kWhiteboxSuccess = 0.80;
constexpr double kWhiteboxSeconds = 300;
constexpr double kTransferStep = 0.01;
constexpr double kMatchedSuccess = 0.80;
constexpr double kSsimSelfTol = 1e-9;
constexpr double kShapeTol = 0.15;
constexpr int kShapeSamples = 100000;
constexpr int kNaturalTrials = 20;
constexpr double kNaturalWins = 0.90;
constexpr std::uint64_t kSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Relative error with an absolute floor: small absolute mismatches pass.
bool grad_close(double fd, double an) {
  const double err = std::abs(fd - an);
  return err <= kGradAbsFloor || err / std::max(std::abs(fd), std::abs(an)) < kGradRelTol;
}

// ---------------------------------------------------------------------------
// Property criteria

Outcome pyramid_round_trip() {
  std::mt19937_64 rng(1);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 17 + static_cast<int>(rng() % 48);
    const int w = 23 + static_cast<int>(rng() % 42);
    const Image img = testutil::random_image(rng, h, w, trial % 2 ? 3 : 1);
    for (int levels : {1, 3, 5}) worst = std::max(worst, max_abs_diff(reconstruct(decompose(img, levels)), img));
  }
  const double secs = seconds_since(t0);
  return {worst < kRoundTripTol && secs < kRoundTripSeconds,
          fmt("max error %.3g over 300 round trips (tol %g), %.2f s (limit %g s)", worst, kRoundTripTol, secs,
              kRoundTripSeconds)};
}

struct GradTally {
  long checked = 0, bad = 0, kinks = 0;
  double worst = 0;
  void add(double fd, double an) {
    ++checked;
    const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), kGradAbsFloor});
    worst = std::max(worst, err);
    if (!grad_close(fd, an)) ++bad;
  }
};

nn::FeatureMap<double> random_map(std::mt19937_64& rng, int c, int h, int w) {
  std::uniform_real_distribution<double> u(-1, 1);
  auto m = nn::FeatureMap<double>::zeros(c, h, w);
  for (Eigen::Index i = 0; i < m.data.size(); ++i) m.data.data()[i] = u(rng);
  return m;
}

template <typename L>
void randomize(L& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 0.5);
  layer.for_each_param([&](auto& p) {
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = n(rng);
  });
}

// <layer(x), G> against layer.backward by central differences. A ReLU or
// max-pool switch inside the stencil shows up as two step sizes disagreeing;
// such coordinates are counted as kinks instead of compared.
template <typename L>
void check_layer(const L& layer, const nn::FeatureMap<double>& in, std::mt19937_64& rng, GradTally& tally) {
  const auto out = layer.forward(in);
  const auto g = random_map(rng, out.channels, out.height, out.width);
  const auto dx = layer.backward(in, out, g, nullptr);
  auto objective = [&](const nn::FeatureMap<double>& x) { return (layer.forward(x).data.array() * g.data.array()).sum(); };
  for (Eigen::Index i = 0; i < in.data.size(); ++i) {
    auto fd_at = [&](double h) {
      auto p = in, m = in;
      p.data.data()[i] += h;
      m.data.data()[i] -= h;
      return (objective(p) - objective(m)) / (2 * h);
    };
    const double fd = fd_at(kFdStep);
    if (!grad_close(fd, fd_at(kFdStep / 4))) {
      ++tally.kinks;
      continue;
    }
    tally.add(fd, dx.data.data()[i]);
  }
}

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2);
  GradTally bef, cbef, layers, e2e;

  for (int trial = 0; trial < kGradInstances; ++trial) {
    const int levels = 1 + trial % 3;
    const auto br = generate_brackets(testutil::random_image<double>(rng, 8, 8, 2, 0.05, 0.45),
                                      BracketSpec::symmetric(3, 0.5));
    WeightMaps w = identity_weights<double>(8, 8, 2, levels, 3);
    for (auto& level : w.maps)
      for (auto& m : level) m = testutil::random_image<double>(rng, m.height(), m.width(), 2, 0.05, 1.0);
    project_constraints(w);
    const ImageD g = testutil::random_image<double>(rng, 8, 8, 2, -1, 1);
    const FusionOperator<double> op(br, levels);
    const WeightMaps grad = op.gradient(w, op.fuse(w), g);
    auto objective = [&](const WeightMaps& p) { return dot(clamp01(op.fuse(p)), g); };
    for (int l = 0; l < levels; ++l)
      for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 2; ++c)
          for (int y = 0; y < w.maps[l][i].height(); ++y)
            for (int x = 0; x < w.maps[l][i].width(); ++x) {
              WeightMaps plus = w, minus = w;
              plus.maps[l][i](y, x, c) += kFdStep;
              minus.maps[l][i](y, x, c) -= kFdStep;
              bef.add((objective(plus) - objective(minus)) / (2 * kFdStep), grad.maps[l][i](y, x, c));
            }
  }

  for (int trial = 0; trial < kGradInstances; ++trial) {
    const auto br = generate_brackets(testutil::random_image<double>(rng, 8, 8, 1, 0.05, 0.45),
                                      BracketSpec{0.5, {-0.5, 0.5}});
    KernelField kf = identity_kernels<double>(8, 8, 1, 2, 2, 3);
    for (auto& level : kf.taps)
      for (auto& exposure : level)
        for (auto& t : exposure) t = testutil::random_image<double>(rng, t.height(), t.width(), 1, 0.05, 1.0);
    project_constraints(kf);
    const ImageD g = testutil::random_image<double>(rng, 8, 8, 1, -1, 1);
    const FusionOperator<double> op(br, 2, 3);
    const KernelField grad = op.gradient(kf, op.fuse(kf), g);
    auto objective = [&](const KernelField& p) { return dot(clamp01(op.fuse(p)), g); };
    for (int l = 0; l < 2; ++l)
      for (int i = 0; i < 2; ++i)
        for (int t = 0; t < 9; ++t)
          for (int y = 0; y < kf.taps[l][i][t].height(); ++y)
            for (int x = 0; x < kf.taps[l][i][t].width(); ++x) {
              KernelField plus = kf, minus = kf;
              plus.taps[l][i][t](y, x, 0) += kFdStep;
              minus.taps[l][i][t](y, x, 0) -= kFdStep;
              cbef.add((objective(plus) - objective(minus)) / (2 * kFdStep), grad.taps[l][i][t](y, x, 0));
            }
  }

  for (int trial = 0; trial < kGradInstances; ++trial) {
    nn::Conv2d<double> conv(3, 4, 3);
    nn::DepthwiseConv2d<double> dw(3, 3);
    nn::Dense<double> dense(3 * 5 * 4, 6);
    randomize(conv, rng);
    randomize(dw, rng);
    randomize(dense, rng);
    check_layer(conv, random_map(rng, 3, 5, 6), rng, layers);
    check_layer(dw, random_map(rng, 3, 5, 7), rng, layers);
    check_layer(nn::Relu<double>{}, random_map(rng, 2, 4, 5), rng, layers);
    check_layer(nn::MaxPool2<double>{}, random_map(rng, 2, 6, 6), rng, layers);
    check_layer(nn::GlobalAvgPool<double>{}, random_map(rng, 3, 4, 5), rng, layers);
    check_layer(dense, random_map(rng, 3, 5, 4), rng, layers);
  }

  const nn::Architecture archs[] = {nn::Architecture::A, nn::Architecture::B, nn::Architecture::C};
  for (int trial = 0; trial < kGradInstances; ++trial) {
    const auto m = nn::make_classifier<double>(archs[trial % 3], {3, 12, 12}, 4, 100 + trial);
    const ImageD x = testutil::random_image<double>(rng, 12, 12, 3);
    const int label = trial % 4;
    const auto g = m.loss_and_input_gradient(x, label).input_gradient;
    auto loss = [&](const ImageD& v) { return m.loss_and_input_gradient(v, label).loss; };
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 12; y += 3)
        for (int xx = 0; xx < 12; xx += 2) {
          auto fd_at = [&](double h) {
            ImageD p = x, q = x;
            p(y, xx, c) += h;
            q(y, xx, c) -= h;
            return (loss(p) - loss(q)) / (2 * h);
          };
          const double fd = fd_at(kFdStep);
          if (!grad_close(fd, fd_at(kFdStep / 4))) {
            ++e2e.kinks;
            continue;
          }
          e2e.add(fd, g(y, xx, c));
        }
  }

  const double secs = seconds_since(t0);
  const long bad = bef.bad + cbef.bad + layers.bad + e2e.bad;
  // Kinks are legitimate but must stay rare, or the check says nothing.
  const bool kinks_rare = (layers.kinks + e2e.kinks) * 20 < layers.checked + e2e.checked;
  return {bad == 0 && kinks_rare && secs < kGradSeconds,
          fmt("%d instances each; BEF %ld coords worst %.2g, CBEF %ld worst %.2g, layers %ld worst %.2g (%ld kinks), "
              "models %ld worst %.2g (%ld kinks); %ld mismatches; %.1f s (limit %g s)",
              kGradInstances, bef.checked, bef.worst, cbef.checked, cbef.worst, layers.checked, layers.worst,
              layers.kinks, e2e.checked, e2e.worst, e2e.kinks, bad, secs, kGradSeconds)};
}

Outcome reduction_equivalence() {
  std::mt19937_64 rng(3);
  double worst_fuse = 0, worst_traj = 0;
  for (int trial = 0; trial < kReductionInstances; ++trial) {
    const int h = 16 + static_cast<int>(rng() % 17), w = 16 + static_cast<int>(rng() % 17);
    const int levels = 1 + static_cast<int>(rng() % 3);
    const int n = 1 + static_cast<int>(rng() % 5);
    const auto br = generate_brackets(testutil::random_image<double>(rng, h, w, 3), BracketSpec::symmetric(n, 1.0));
    WeightMaps wm = identity_weights<double>(h, w, 3, levels, n);
    for (auto& level : wm.maps)
      for (auto& m : level) m = testutil::random_image<double>(rng, m.height(), m.width(), 3, 0.05, 1.0);
    project_constraints(wm);
    worst_fuse = std::max(worst_fuse, max_abs_diff(fuse_cbef(br, lift_to_kernels(wm), levels), fuse_bef(br, wm, levels)));

    // Per-iterate trajectories of the two attacks on a random model.
    const auto model = nn::make_classifier<float>(trial % 2 ? nn::Architecture::C : nn::Architecture::A, {3, h, w}, 3,
                                                  200 + trial);
    const LabeledSample sample{testutil::random_image(rng, h, w, 3, 0.05, 0.6), trial % 3, "x"};
    AttackConfig cfg;
    cfg.method = Method::Bef;
    cfg.levels = levels;
    cfg.max_iter = 5;
    cfg.alpha = 0.05;
    cfg.early_stop_on_flip = false;
    std::vector<Image> tb, tc;
    AttackHooks hb, hc;
    hb.observer = [&](const IterateView& v) { tb.push_back(v.adversarial); };
    hc.observer = [&](const IterateView& v) { tc.push_back(v.adversarial); };
    run_attack(model, sample, cfg, hb);
    cfg.method = Method::Cbef;
    cfg.kernel_size = 1;
    run_attack(model, sample, cfg, hc);
    if (tb.size() != tc.size()) return {false, "trajectory lengths differ"};
    for (std::size_t k = 0; k < tb.size(); ++k) worst_traj = std::max(worst_traj, max_abs_diff(tb[k], tc[k]));
  }
  return {worst_fuse < kReductionTol && worst_traj < kReductionTol,
          fmt("%d instances: fused max diff %.3g, trajectory max diff %.3g (tol %g)", kReductionInstances, worst_fuse,
              worst_traj, kReductionTol)};
}

Outcome fusion_identity() {
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 32 + static_cast<int>(rng() % 33), w = 32 + static_cast<int>(rng() % 33);
    const ImageD x = testutil::random_image<double>(rng, h, w, trial % 2 ? 3 : 1);
    const auto br = generate_brackets(x, BracketSpec{1.0, {0.0}});
    for (int levels : {1, 3, 5}) {
      worst = std::max(worst, max_abs_diff(fuse_bef(br, identity_weights<double>(h, w, x.channels(), levels, 1), levels), x));
      worst = std::max(worst, max_abs_diff(fuse_cbef(br, identity_kernels<double>(h, w, x.channels(), levels, 1, 3), levels), x));
    }
  }
  return {worst < kIdentityTol, fmt("max |fused - input| %.3g for L in {1,3,5}, BEF and CBEF (tol %g)", worst, kIdentityTol)};
}

Outcome metric_self_tests() {
  std::mt19937_64 rng(10);
  SyntheticSpec spec;
  spec.train_per_class = 8;
  spec.test_per_class = 4;
  const auto ds = generate_synthetic_dataset(spec, 99);

  double ssim_err = 0;
  for (const auto& s : ds.test) ssim_err = std::max(ssim_err, std::abs(ssim(s.image, s.image) - 1.0));

  const double mscn_max = max_abs(mscn(Image(48, 40, 3, 0.42f)));

  double shape_err = 0;
  for (double shape : {1.0, 2.0}) {
    std::gamma_distribution<double> gamma(1.0 / shape, 1.0);
    std::bernoulli_distribution side(0.6);
    std::vector<double> xs(kShapeSamples);
    for (auto& v : xs) {
      const double mag = std::pow(gamma(rng), 1.0 / shape);
      v = side(rng) ? 1.2 * mag : -0.8 * mag;
    }
    shape_err = std::max(shape_err, std::abs(fit_aggd(xs).shape - shape));
  }

  std::vector<BrisqueFeatures> corpus;
  for (const auto& s : ds.train) corpus.push_back(brisque_features(s.image));
  const auto model = NaturalnessModel::fit(corpus);
  std::normal_distribution<double> noise(0.0, 0.15);
  int wins = 0;
  for (int t = 0; t < kNaturalTrials; ++t) {
    const Image& img = ds.test[t % ds.test.size()].image;
    Image noisy = img;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          noisy(y, x, c) = static_cast<float>(std::clamp(img(y, x, c) + noise(rng), 0.0, 1.0));
    wins += naturalness_score(brisque_features(img), model) < naturalness_score(brisque_features(noisy), model);
  }
  const bool pass = ssim_err <= kSsimSelfTol && mscn_max == 0.0 && shape_err <= kShapeTol &&
                    wins >= kNaturalWins * kNaturalTrials;
  return {pass, fmt("|ssim(X,X)-1| %.2g; constant MSCN max %.2g; AGGD shape error %.4f on %d samples; "
                    "clean < noisy in %d/%d pairs",
                    ssim_err, mscn_max, shape_err, kShapeSamples, wins, kNaturalTrials)};
}

// ---------------------------------------------------------------------------
// Desk benchmark

struct Desk {
  SyntheticDataset data;
  std::vector<NamedModel> models;
  std::vector<double> accuracy;
  std::vector<std::string> paths;
};

Desk build_desk(const fs::path& work) {
  Desk d;
  SyntheticSpec spec;  // 5 classes, 300 train / 60 test per class, 64x64 RGB
  d.data = generate_synthetic_dataset(spec, kSeed);
  nn::TrainConfig tc;
  tc.seed = kSeed;
  const nn::InputSpec in{spec.channels, spec.height, spec.width};
  for (auto arch : {nn::Architecture::A, nn::Architecture::B, nn::Architecture::C}) {
    const std::string name = "model_" + nn::to_string(arch);
    const fs::path path = work / (name + ".bin");
    const auto t0 = std::chrono::steady_clock::now();
    nn::Model m = nn::train(nn::make_classifier<float>(arch, in, spec.num_classes, kSeed), d.data.train, tc);
    nn::save_model(m, path.string());
    std::printf("      trained %s in %.0f s\n", name.c_str(), seconds_since(t0));
    d.accuracy.push_back(nn::accuracy(m, d.data.test));
    d.models.push_back({name, std::move(m)});
    d.paths.push_back(path.string());
  }
  return d;
}

ExperimentConfig desk_config() {
  ExperimentConfig cfg;
  cfg.seed = kSeed;
  cfg.attack.max_iter = 10;
  cfg.attack.levels = 3;
  cfg.attack.kernel_size = 3;
  cfg.save_images = 0;
  return cfg;
}

Workspace desk_workspace(const Desk& d, const ExperimentConfig& cfg, int models) {
  std::vector<NamedModel> ms(d.models.begin(), d.models.begin() + models);
  // The naturalness column is not part of any criterion; skip the corpus fit.
  return make_workspace(cfg, d.data.test, std::move(ms), {});
}

Outcome constraint_preservation(const Desk& d) {
  double worst = 0;
  long iterates = 0;
  for (Method m : {Method::Bef, Method::Cbef}) {
    AttackConfig cfg = desk_config().attack;
    cfg.method = m;
    cfg.alpha = 0.1;
    cfg.early_stop_on_flip = false;
    AttackHooks hooks;
    hooks.observer = [&](const IterateView& v) {
      worst = std::max(worst, v.constraint);
      ++iterates;
    };
    for (const auto& s : d.data.test) run_attack(d.models[0].model, s, cfg, hooks);
  }
  return {worst <= kConstraintTol,
          fmt("BEF and CBEF (alpha 0.1, T 10, L 3, K 3) on all %zu test samples: max |sum - 1| %.3g over %ld iterates "
              "(tol %g)",
              d.data.test.size(), worst, iterates, kConstraintTol)};
}

Outcome whitebox_efficacy(const Desk& d) {
  AttackConfig cfg = desk_config().attack;
  cfg.method = Method::Cbef;
  cfg.alpha = 0.1;
  cfg.early_stop_on_flip = true;
  const auto t0 = std::chrono::steady_clock::now();
  int correct = 0, hits = 0;
  double ssim_sum = 0;
  for (const auto& s : d.data.test) {
    const auto r = run_attack(d.models[0].model, s, cfg);
    if (r.initial_prediction != s.label) continue;
    ++correct;
    hits += r.success;
    ssim_sum += ssim(s.image, r.adversarial);
  }
  const double secs = seconds_since(t0);
  const double rate = correct ? double(hits) / correct : 0.0;
  const bool pass = d.accuracy[0] >= kCleanAccuracy && rate >= kWhiteboxSuccess && secs < kWhiteboxSeconds;
  return {pass, fmt("arch A clean accuracy %.4f (need >= %.2f); CBEF whitebox success %.4f on %d correct samples "
                    "(need >= %.2f), mean SSIM %.3f; attack time %.0f s (limit %g s)",
                    d.accuracy[0], kCleanAccuracy, rate, correct, kWhiteboxSuccess, correct ? ssim_sum / correct : 0.0,
                    secs, kWhiteboxSeconds)};
}

std::string matrix_text(const TransferMatrix& m) {
  std::string s;
  for (std::size_t i = 0; i < m.rates.size(); ++i) {
    s += i ? " / " : "";
    for (std::size_t j = 0; j < m.rates[i].size(); ++j) s += fmt(j ? " %.3f" : "%.3f", m.rates[i][j]);
  }
  return s;
}

struct TransferRuns {
  TransferMatrix bef_l3, cbef_l3;
};

TransferRuns transfer_runs(const Desk& d) {
  auto cfg = desk_config();
  cfg.attack.alpha = kTransferStep;
  cfg.attack.early_stop_on_flip = false;
  cfg.grid.methods = {Method::Bef, Method::Cbef};
  const auto out = run_transfer_matrix(desk_workspace(d, cfg, 3));
  TransferRuns t;
  for (const auto& m : out.matrices) (m.method == Method::Bef ? t.bef_l3 : t.cbef_l3) = m;
  return t;
}

Outcome transfer_trend(const TransferRuns& t) {
  const double bef = t.bef_l3.mean_transfer(), cbef = t.cbef_l3.mean_transfer();
  return {cbef > bef, fmt("mean transfer CBEF(L3,K3) %.4f vs BEF(L3) %.4f at step %.2f on %d common samples; "
                          "CBEF rows [%s], BEF rows [%s]",
                          cbef, bef, kTransferStep, t.cbef_l3.samples, matrix_text(t.cbef_l3).c_str(),
                          matrix_text(t.bef_l3).c_str())};
}

Outcome level_trend(const Desk& d, const TransferRuns& t) {
  auto cfg = desk_config();
  cfg.attack.alpha = kTransferStep;
  cfg.attack.early_stop_on_flip = false;
  cfg.grid.methods = {Method::Bef};
  // L = 3 is the BEF matrix already computed for the previous criterion.
  cfg.grid.levels = {1, 5};
  const auto out = run_ablation(desk_workspace(d, cfg, 3), "L");
  const double m1 = out.matrices.at(0).mean_transfer();
  const double m3 = t.bef_l3.mean_transfer();
  const double m5 = out.matrices.at(1).mean_transfer();
  const int ties = (m1 == m3) + (m3 == m5);
  const bool pass = m1 >= m3 && m3 >= m5 && ties <= 1;
  return {pass, fmt("BEF mean transfer L1 %.4f, L3 %.4f, L5 %.4f (need non-increasing, at most one tie); "
                    "L1 rows [%s], L5 rows [%s]",
                    m1, m3, m5, matrix_text(out.matrices[0]).c_str(), matrix_text(out.matrices[1]).c_str())};
}

Outcome quality_ordering(const Desk& d) {
  auto cfg = desk_config();
  cfg.attack.early_stop_on_flip = true;
  cfg.grid.methods = {Method::Bef, Method::Ifgsm};
  cfg.grid.alphas = {0.005, 0.01, 0.02, 0.05, 0.1};
  cfg.grid.epsilons = {16.0 / 255, 32.0 / 255, 48.0 / 255, 64.0 / 255};
  const auto out = run_whitebox_sweep(desk_workspace(d, cfg, 1));
  // Matched point per method: the smallest grid value reaching the success bar.
  const CurveRow* bef = nullptr;
  const CurveRow* ifgsm = nullptr;
  std::string curve;
  for (const auto& row : out.curves) {
    curve += fmt(" %s@%.4g=%.3f/%.3f", to_string(row.method).c_str(), row.value, row.success_rate, row.mean_ssim);
    const CurveRow*& slot = row.method == Method::Bef ? bef : ifgsm;
    if (!slot && row.success_rate >= kMatchedSuccess) slot = &row;
  }
  if (!bef || !ifgsm) return {false, "no grid point reaches the success bar for one method; curve (success/SSIM):" + curve};
  return {bef->mean_ssim > ifgsm->mean_ssim,
          fmt("BEF alpha %.3g: success %.3f SSIM %.4f vs IFGSM eps %.4g: success %.3f SSIM %.4f; curve (success/SSIM):",
              bef->value, bef->success_rate, bef->mean_ssim, ifgsm->value, ifgsm->success_rate, ifgsm->mean_ssim) +
              curve};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("missing " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const Desk& d, const fs::path& work) {
  std::string bytes[2][2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work / ("transfer_run" + std::to_string(run));
    fs::remove_all(out);
    std::string cmd = std::string("\"") + EXPATTACK_CLI + "\" transfer --seed 7 --sample-limit 12 --methods bef cbef" +
                      " --alpha 0.01 --levels 3 --kernel-size 3 --max-iter 4 --early-stop false -o \"" +
                      out.string() + "\" -m";
    for (const auto& p : d.paths) cmd += " \"" + p + "\"";
    cmd += " > \"" + (work / ("transfer_run" + std::to_string(run) + ".log")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed: " + cmd};
    bytes[run][0] = slurp(out / "summary.csv");
    bytes[run][1] = slurp(out / "transfer_matrix.csv");
  }
  const bool same = bytes[0][0] == bytes[1][0] && bytes[0][1] == bytes[1][1];
  return {same && !bytes[0][0].empty(),
          fmt("two CLI transfer runs: summary.csv %s (%zu bytes), transfer_matrix.csv %s (%zu bytes)",
              bytes[0][0] == bytes[1][0] ? "identical" : "DIFFERENT", bytes[0][0].size(),
              bytes[0][1] == bytes[1][1] ? "identical" : "DIFFERENT", bytes[0][1].size())};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "expattack_acceptance";
  fs::create_directories(work);

  report(1, "pyramid round trip", pyramid_round_trip);
  report(2, "gradient oracle", gradient_oracle);
  report(3, "K = 1 reduction", reduction_equivalence);
  report(5, "fusion identity", fusion_identity);
  report(10, "metric self-tests", metric_self_tests);

  std::printf("      building the desk benchmark (synthetic 5-class set, arch A/B/C, seed %llu)\n",
              static_cast<unsigned long long>(kSeed));
  std::fflush(stdout);
  const Desk desk = build_desk(work);
  std::printf("      clean test accuracy A %.4f, B %.4f, C %.4f\n", desk.accuracy[0], desk.accuracy[1], desk.accuracy[2]);

  report(4, "constraint preservation", [&] { return constraint_preservation(desk); });
  report(6, "desk whitebox efficacy", [&] { return whitebox_efficacy(desk); });
  TransferRuns runs;
  bool have_runs = false;
  report(7, "CBEF transfers better than BEF", [&] {
    runs = transfer_runs(desk);
    have_runs = true;
    return transfer_trend(runs);
  });
  report(8, "BEF transfer non-increasing in L", [&] {
    if (!have_runs) return Outcome{false, "transfer runs unavailable"};
    return level_trend(desk, runs);
  });
  report(9, "BEF SSIM above IFGSM at matched success", [&] { return quality_ordering(desk); });
  report(11, "transfer determinism", [&] { return determinism(desk, work); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
