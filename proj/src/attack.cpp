#include "expattack/attack.hpp"

#include <array>
#include <cmath>

#include "expattack/filter.hpp"

namespace expattack {

namespace {

constexpr std::array<std::pair<Method, const char*>, 9> kMethodNames{{
    {Method::Multiplicative, "multiplicative"},
    {Method::Bef, "bef"},
    {Method::Cbef, "cbef"},
    {Method::Fgsm, "fgsm"},
    {Method::Ifgsm, "ifgsm"},
    {Method::Mifgsm, "mifgsm"},
    {Method::Tifgsm, "tifgsm"},
    {Method::Tiifgsm, "tiifgsm"},
    {Method::Timifgsm, "timifgsm"},
}};

int argmax(const nn::Vector<float>& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

void finish(AttackResult& r, Image adversarial, int prediction, int iterations) {
  r.adversarial = std::move(adversarial);
  r.final_prediction = prediction;
  r.iterations = iterations;
  r.success = prediction != r.label;
}

AttackResult start(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg) {
  cfg.validate();
  AttackResult r;
  r.label = sample.label;
  r.initial_prediction = model.predict(sample.image);
  return r;
}

void notify(const AttackHooks& hooks, int k, const Image& adv, double constraint) {
  if (hooks.observer) hooks.observer(IterateView{k, adv, constraint});
}

template <typename Params>
AttackResult fusion_attack(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                           const AttackHooks& hooks, int kernel_size) {
  AttackResult r = start(model, sample, cfg);
  const FusionOperator<double> op(generate_brackets(sample.image.cast<double>(), cfg.bracket), cfg.levels,
                                  kernel_size);
  Params params;
  if constexpr (std::is_same_v<Params, WeightMaps>) params = op.identity_weights();
  else params = op.identity_kernels();

  auto dump = [&] {
    if (hooks.param_dump_path.empty()) return;
    save_fusion_params(params, hooks.param_dump_path);
    r.param_dump = hooks.param_dump_path;
  };

  for (int k = 0; k < cfg.max_iter; ++k) {
    const ImageD pre = op.fuse(params);
    const Image adv = clamp01(pre).template cast<float>();
    notify(hooks, k, adv, constraint_residual(params));
    const auto lg = model.loss_and_input_gradient(adv, sample.label);
    r.loss_trace.push_back(lg.loss);
    const int pred = argmax(lg.probabilities);
    if (cfg.early_stop_on_flip && pred != sample.label) {
      finish(r, adv, pred, k);
      dump();
      return r;
    }
    const Params grad = op.gradient(params, pre, lg.input_gradient.template cast<double>());
    sign_ascent_step(params, grad, cfg.alpha);
    project_constraints(params);
  }
  Image adv = clamp01(op.fuse(params)).template cast<float>();
  notify(hooks, cfg.max_iter, adv, constraint_residual(params));
  finish(r, adv, model.predict(adv), cfg.max_iter);
  dump();
  return r;
}

ImageD smooth_gradient(const ImageD& g, const AttackConfig& cfg) {
  const auto taps = gaussian_kernel(cfg.ti_kernel_size, cfg.ti_sigma);
  return map_planes(g, [&](const PlaneD& p) { return separable_filter(p, taps, Border::Zero); });
}

}  // namespace

std::string to_string(Method m) {
  for (auto [method, name] : kMethodNames)
    if (method == m) return name;
  throw ConfigError("unknown attack method");
}

Method method_from_string(const std::string& name) {
  for (auto [method, n] : kMethodNames)
    if (name == n) return method;
  throw ConfigError("unknown attack method '" + name + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> v;
    for (auto [m, n] : kMethodNames) v.push_back(m);
    return v;
  }();
  return methods;
}

bool is_additive(Method m) {
  return m == Method::Fgsm || m == Method::Ifgsm || m == Method::Mifgsm || m == Method::Tifgsm ||
         m == Method::Tiifgsm || m == Method::Timifgsm;
}

bool is_fusion(Method m) { return m == Method::Bef || m == Method::Cbef; }

void AttackConfig::validate() const {
  if (!(alpha >= 0)) throw ConfigError("alpha must be >= 0");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd and >= 1");
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be >= 0");
  if (momentum_mu < 0) throw ConfigError("momentum_mu must be >= 0");
  if (ti_kernel_size < 1 || ti_kernel_size % 2 == 0) throw ConfigError("ti_kernel_size must be odd");
  if (!(ti_sigma > 0)) throw ConfigError("ti_sigma must be > 0");
  bracket.validate();
}

AttackResult attack_multiplicative(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                                   const AttackHooks& hooks) {
  AttackResult r = start(model, sample, cfg);
  const ImageD x = sample.image.cast<double>();
  const double lo = std::max(0.0, 1.0 - cfg.epsilon);
  const double hi = 1.0 + cfg.epsilon;
  ImageD e(x.height(), x.width(), x.channels(), 1.0);
  auto deviation = [&] { return max_abs(map_planes(e, [](const PlaneD& p) { return p - 1.0; })); };

  for (int k = 0; k < cfg.max_iter; ++k) {
    const ImageD pre = hadamard(x, e);
    const Image adv = clamp01(pre).cast<float>();
    notify(hooks, k, adv, deviation());
    const auto lg = model.loss_and_input_gradient(adv, sample.label);
    r.loss_trace.push_back(lg.loss);
    const int pred = argmax(lg.probabilities);
    if (cfg.early_stop_on_flip && pred != sample.label) {
      finish(r, adv, pred, k);
      return r;
    }
    const ImageD g = lg.input_gradient.cast<double>();
    for (int c = 0; c < x.channels(); ++c) {
      const PlaneD& v = pre.plane(c);
      const PlaneD grad_e = ((v >= 0.0) && (v <= 1.0)).select(g.plane(c) * x.plane(c), 0.0);
      e.plane(c) = (e.plane(c) + cfg.alpha * grad_e.sign()).max(lo).min(hi);
    }
  }
  Image adv = clamp01(hadamard(x, e)).cast<float>();
  notify(hooks, cfg.max_iter, adv, deviation());
  finish(r, adv, model.predict(adv), cfg.max_iter);
  return r;
}

AttackResult attack_bef(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                        const AttackHooks& hooks) {
  return fusion_attack<WeightMaps>(model, sample, cfg, hooks, 1);
}

AttackResult attack_cbef(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                         const AttackHooks& hooks) {
  return fusion_attack<KernelField>(model, sample, cfg, hooks, cfg.kernel_size);
}

AttackResult attack_additive(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                             const AttackHooks& hooks) {
  if (!is_additive(cfg.method)) throw ConfigError("attack_additive called with " + to_string(cfg.method));
  AttackResult r = start(model, sample, cfg);
  const Method m = cfg.method;
  const bool iterative = !(m == Method::Fgsm || m == Method::Tifgsm);
  const bool momentum = m == Method::Mifgsm || m == Method::Timifgsm;
  const bool translation_invariant = m == Method::Tifgsm || m == Method::Tiifgsm || m == Method::Timifgsm;
  const int steps = iterative ? cfg.max_iter : 1;
  const double step = cfg.epsilon / steps;

  const ImageD x = sample.image.cast<double>();
  ImageD delta(x.height(), x.width(), x.channels(), 0.0);
  ImageD velocity = delta;
  auto current = [&] { return clamp01(x + delta).cast<float>(); };
  auto deviation = [&](const Image& adv) { return max_abs_diff(adv, sample.image); };

  for (int k = 0; k < steps; ++k) {
    const Image adv = current();
    notify(hooks, k, adv, deviation(adv));
    const auto lg = model.loss_and_input_gradient(adv, sample.label);
    r.loss_trace.push_back(lg.loss);
    const int pred = argmax(lg.probabilities);
    if (cfg.early_stop_on_flip && pred != sample.label) {
      finish(r, adv, pred, k);
      return r;
    }
    ImageD g = lg.input_gradient.cast<double>();
    if (translation_invariant) g = smooth_gradient(g, cfg);
    ImageD direction = g;
    if (momentum) {
      double l1 = 0.0;
      for (const auto& p : g.planes()) l1 += p.abs().sum();
      const double inv = l1 > 0 ? 1.0 / l1 : 0.0;
      for (int c = 0; c < g.channels(); ++c) velocity.plane(c) = cfg.momentum_mu * velocity.plane(c) + inv * g.plane(c);
      direction = velocity;
    }
    for (int c = 0; c < x.channels(); ++c) {
      PlaneD& d = delta.plane(c);
      d = (d + step * direction.plane(c).sign()).max(-cfg.epsilon).min(cfg.epsilon);
      // Keep x + delta inside [0, 1] so the stored perturbation is the applied one.
      d = (x.plane(c) + d).max(0.0).min(1.0) - x.plane(c);
    }
  }
  Image adv = current();
  notify(hooks, steps, adv, deviation(adv));
  finish(r, adv, model.predict(adv), steps);
  return r;
}

AttackResult run_attack(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                        const AttackHooks& hooks) {
  switch (cfg.method) {
    case Method::Multiplicative: return attack_multiplicative(model, sample, cfg, hooks);
    case Method::Bef: return attack_bef(model, sample, cfg, hooks);
    case Method::Cbef: return attack_cbef(model, sample, cfg, hooks);
    default: return attack_additive(model, sample, cfg, hooks);
  }
}

double success_rate(std::span<const AttackResult> results, bool only_correct) {
  if (results.empty()) throw ConfigError("success_rate of an empty result list");
  std::size_t total = 0, hits = 0;
  for (const auto& r : results) {
    if (only_correct && r.initial_prediction != r.label) continue;
    ++total;
    hits += r.success ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace expattack
