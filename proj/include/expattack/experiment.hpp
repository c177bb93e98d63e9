#pragma once

#include <span>
#include <string>
#include <vector>

#include "expattack/attack.hpp"
#include "expattack/config.hpp"
#include "expattack/metrics.hpp"
#include "expattack/nn.hpp"

namespace expattack {

struct NamedModel {
  std::string name;
  nn::Model model;
};

/// Prediction of one model on a clean image and on its adversarial version.
struct Evaluation {
  std::string model;
  int clean_prediction = 0;
  int adversarial_prediction = 0;
  bool success = false;

  bool operator==(const Evaluation&) const = default;
};

/// One attacked sample; serialized as one JSON line.
struct SampleRecord {
  std::string id;
  std::string method;
  std::string model;  // model the example was crafted on
  double alpha = 0;
  double epsilon = 0;
  int levels = 0;
  int kernel_size = 0;
  int label = 0;
  int initial_prediction = 0;
  int final_prediction = 0;
  bool success = false;
  int iterations = 0;
  double ssim = 0;
  double naturalness = 0;
  std::vector<Evaluation> evaluations;  // transfer runs only

  bool operator==(const SampleRecord&) const = default;
};

struct CurveRow {
  Method method = Method::Bef;
  std::string parameter;  // "alpha" or "epsilon"
  double value = 0;
  double success_rate = 0;
  double mean_ssim = 0;
  double mean_naturalness = 0;
  int samples = 0;
};

/// Success rates of examples crafted on model i (row) evaluated on model j
/// (column); the diagonal is the whitebox rate.
struct TransferMatrix {
  Method method = Method::Bef;
  int levels = 0;
  int kernel_size = 0;
  std::vector<std::string> models;
  std::vector<std::vector<double>> rates;
  int samples = 0;

  double mean_transfer() const;
};

struct SavedImage {
  std::string name;
  Image image;
};

struct RunOutput {
  std::vector<SampleRecord> records;
  std::vector<CurveRow> curves;
  std::vector<TransferMatrix> matrices;
  std::vector<SavedImage> images;
  std::string ablation_axis;  // "L" or "K" when matrices come from an ablation
};

/// Everything an experiment reads: evaluation samples, models, and the clean
/// corpus fit used for naturalness scores.
struct Workspace {
  ExperimentConfig config;
  std::vector<LabeledSample> samples;
  std::vector<NamedModel> models;
  NaturalnessModel naturalness;
};

/// Test split from the manifest or the synthetic generator, truncated to
/// sample_limit. The naturalness corpus uses up to 200 clean images of the
/// full split.
Workspace prepare_workspace(const ExperimentConfig& cfg);

/// Builds a workspace from in-memory parts (used by tests and the acceptance suite).
Workspace make_workspace(const ExperimentConfig& cfg, std::vector<LabeledSample> samples,
                         std::vector<NamedModel> models, std::span<const LabeledSample> corpus);

/// cfg.attack on the first model over every sample.
RunOutput run_attack_batch(const Workspace& ws);

/// Whitebox curves on the first model: fusion and multiplicative methods sweep
/// grid.alphas, additive ones grid.epsilons. One row per (method, value) in
/// config order.
RunOutput run_whitebox_sweep(const Workspace& ws);

/// Crafts on every model and evaluates on every model, over the samples that
/// all models classify correctly. Needs at least two models and a nonempty
/// common subset.
RunOutput run_transfer_matrix(const Workspace& ws);

/// Transfer matrices for each grid.levels ("L") or grid.kernel_sizes ("K") value.
RunOutput run_ablation(const Workspace& ws, const std::string& axis);

/// Indices of samples every model classifies correctly.
std::vector<std::size_t> commonly_correct(std::span<const NamedModel> models, std::span<const LabeledSample> samples);

/// Success matrix of given examples: crafted[i][s] was crafted on model i for samples[s].
TransferMatrix evaluate_transfer(std::span<const NamedModel> models, std::span<const LabeledSample> samples,
                                 const std::vector<std::vector<Image>>& crafted, Method method);

}  // namespace expattack
