#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "expattack/fusion.hpp"
#include "expattack/image.hpp"
#include "expattack/nn.hpp"

namespace expattack {

enum class Method { Multiplicative, Bef, Cbef, Fgsm, Ifgsm, Mifgsm, Tifgsm, Tiifgsm, Timifgsm };

std::string to_string(Method m);
Method method_from_string(const std::string& name);
const std::vector<Method>& all_methods();
bool is_additive(Method m);
bool is_fusion(Method m);

struct AttackConfig {
  Method method = Method::Cbef;
  double alpha = 0.1;  // sign-step size on E, W or K
  int max_iter = 10;
  int levels = 3;
  int kernel_size = 3;
  BracketSpec bracket;
  // Additive methods: L-inf radius in intensity units. Multiplicative: bound on |E - 1|.
  double epsilon = 0.5;
  double momentum_mu = 1.0;
  int ti_kernel_size = 15;
  double ti_sigma = 3.0;
  bool early_stop_on_flip = true;

  void validate() const;
  bool operator==(const AttackConfig&) const = default;
};

/// State of one iterate k (parameters after k updates).
struct IterateView {
  int iteration = 0;
  const Image& adversarial;
  // Fusion: max |sum - 1| over positions. Multiplicative: max |E - 1|.
  // Additive: max |X_adv - X|.
  double constraint = 0.0;
};

using AttackObserver = std::function<void(const IterateView&)>;

struct AttackHooks {
  AttackObserver observer;
  std::string param_dump_path;  // fusion attacks write their final parameters here when set
};

struct AttackResult {
  Image adversarial;
  int label = 0;
  int iterations = 0;
  int initial_prediction = 0;
  int final_prediction = 0;
  bool success = false;  // final_prediction != label
  std::vector<double> loss_trace;
  std::string param_dump;
};

/// Sign ascent on a per-pixel exposure map E with |E - 1| <= eps, E >= 0.
AttackResult attack_multiplicative(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                                   const AttackHooks& hooks = {});

/// Sign ascent on bracketed-fusion weight maps, re-normalized every step.
AttackResult attack_bef(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                        const AttackHooks& hooks = {});

/// Sign ascent on per-position fusion kernels, re-normalized every step.
AttackResult attack_cbef(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                         const AttackHooks& hooks = {});

/// FGSM / I-FGSM / MI-FGSM and their translation-invariant variants. Iterative
/// variants take max_iter steps of epsilon / max_iter.
AttackResult attack_additive(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                             const AttackHooks& hooks = {});

/// Dispatches on cfg.method.
AttackResult run_attack(const nn::Model& model, const LabeledSample& sample, const AttackConfig& cfg,
                        const AttackHooks& hooks = {});

/// Fraction of results with success; with `only_correct`, restricted to those
/// whose clean input was classified correctly (0 if there are none).
double success_rate(std::span<const AttackResult> results, bool only_correct);

}  // namespace expattack
