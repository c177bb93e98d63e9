#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "expattack/attack.hpp"
#include "expattack/nn.hpp"
#include "expattack/synthetic.hpp"

namespace expattack {

/// Evaluation data: a `filename,label` manifest, or the synthetic generator when
/// no manifest is given.
struct DatasetConfig {
  std::string train_manifest;
  std::string test_manifest;
  SyntheticSpec synthetic;

  bool synthetic_source() const { return test_manifest.empty(); }
  bool operator==(const DatasetConfig&) const = default;
};

/// Sweep axes; empty axes fall back to the matching AttackConfig default.
struct AttackGrid {
  std::vector<Method> methods;
  std::vector<double> alphas;
  std::vector<double> epsilons;
  std::vector<int> levels;
  std::vector<int> kernel_sizes;

  bool operator==(const AttackGrid&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::vector<std::string> models;
  std::string architecture = "A";
  nn::TrainConfig train;
  AttackConfig attack;
  AttackGrid grid;
  int sample_limit = 0;  // 0 = whole test split
  int save_images = 4;
  std::string output_dir = "out";

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const BracketSpec& b);
void from_json(const nlohmann::json& j, BracketSpec& b);
void to_json(nlohmann::json& j, const AttackConfig& c);
void from_json(const nlohmann::json& j, AttackConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace expattack
