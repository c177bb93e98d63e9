#include "expattack/config.hpp"

#include <fstream>

namespace expattack {

using nlohmann::json;

namespace nn {

void to_json(json& j, const TrainConfig& t) {
  j = json{{"epochs", t.epochs},
           {"batch_size", t.batch_size},
           {"learning_rate", t.learning_rate},
           {"momentum", t.momentum},
           {"clip_norm", t.clip_norm},
           {"seed", t.seed}};
}

void from_json(const json& j, TrainConfig& t) {
  const TrainConfig d;
  t.epochs = j.value("epochs", d.epochs);
  t.batch_size = j.value("batch_size", d.batch_size);
  t.learning_rate = j.value("learning_rate", d.learning_rate);
  t.momentum = j.value("momentum", d.momentum);
  t.clip_norm = j.value("clip_norm", d.clip_norm);
  t.seed = j.value("seed", d.seed);
}

}  // namespace nn

void to_json(json& j, const SyntheticSpec& s) {
  j = json{{"num_classes", s.num_classes}, {"train_per_class", s.train_per_class},
           {"test_per_class", s.test_per_class}, {"height", s.height},
           {"width", s.width},             {"channels", s.channels}};
}

void from_json(const json& j, SyntheticSpec& s) {
  const SyntheticSpec d;
  s.num_classes = j.value("num_classes", d.num_classes);
  s.train_per_class = j.value("train_per_class", d.train_per_class);
  s.test_per_class = j.value("test_per_class", d.test_per_class);
  s.height = j.value("height", d.height);
  s.width = j.value("width", d.width);
  s.channels = j.value("channels", d.channels);
}

void to_json(json& j, const DatasetConfig& d) {
  j = json{{"train_manifest", d.train_manifest}, {"test_manifest", d.test_manifest}, {"synthetic", d.synthetic}};
}

void from_json(const json& j, DatasetConfig& d) {
  d.train_manifest = j.value("train_manifest", std::string());
  d.test_manifest = j.value("test_manifest", std::string());
  d.synthetic = j.value("synthetic", SyntheticSpec{});
}

void to_json(json& j, const BracketSpec& b) { j = json{{"lambda", b.lambda}, {"shifts", b.shifts}}; }

void from_json(const json& j, BracketSpec& b) {
  const BracketSpec d;
  b.lambda = j.value("lambda", d.lambda);
  if (j.contains("shifts")) {
    b.shifts = j.at("shifts").get<std::vector<double>>();
  } else if (j.contains("count")) {
    b = BracketSpec::symmetric(j.at("count").get<int>(), b.lambda);
  } else {
    b = BracketSpec::symmetric(static_cast<int>(d.shifts.size()), b.lambda);
  }
}

void to_json(json& j, const AttackConfig& c) {
  j = json{{"method", to_string(c.method)},
           {"alpha", c.alpha},
           {"max_iter", c.max_iter},
           {"levels", c.levels},
           {"kernel_size", c.kernel_size},
           {"bracket", c.bracket},
           {"epsilon", c.epsilon},
           {"momentum_mu", c.momentum_mu},
           {"ti_kernel_size", c.ti_kernel_size},
           {"ti_sigma", c.ti_sigma},
           {"early_stop_on_flip", c.early_stop_on_flip}};
}

void from_json(const json& j, AttackConfig& c) {
  const AttackConfig d;
  c.method = method_from_string(j.value("method", to_string(d.method)));
  c.alpha = j.value("alpha", d.alpha);
  c.max_iter = j.value("max_iter", d.max_iter);
  c.levels = j.value("levels", d.levels);
  c.kernel_size = j.value("kernel_size", d.kernel_size);
  c.bracket = j.value("bracket", d.bracket);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.momentum_mu = j.value("momentum_mu", d.momentum_mu);
  c.ti_kernel_size = j.value("ti_kernel_size", d.ti_kernel_size);
  c.ti_sigma = j.value("ti_sigma", d.ti_sigma);
  c.early_stop_on_flip = j.value("early_stop_on_flip", d.early_stop_on_flip);
}

void to_json(json& j, const AttackGrid& g) {
  std::vector<std::string> methods;
  for (Method m : g.methods) methods.push_back(to_string(m));
  j = json{{"methods", methods},
           {"alphas", g.alphas},
           {"epsilons", g.epsilons},
           {"levels", g.levels},
           {"kernel_sizes", g.kernel_sizes}};
}

void from_json(const json& j, AttackGrid& g) {
  g.methods.clear();
  for (const auto& m : j.value("methods", std::vector<std::string>{})) g.methods.push_back(method_from_string(m));
  g.alphas = j.value("alphas", std::vector<double>{});
  g.epsilons = j.value("epsilons", std::vector<double>{});
  g.levels = j.value("levels", std::vector<int>{});
  g.kernel_sizes = j.value("kernel_sizes", std::vector<int>{});
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"seed", c.seed},
           {"dataset", c.dataset},
           {"models", c.models},
           {"architecture", c.architecture},
           {"train", c.train},
           {"attack", c.attack},
           {"grid", c.grid},
           {"sample_limit", c.sample_limit},
           {"save_images", c.save_images},
           {"output_dir", c.output_dir}};
}

void from_json(const json& j, ExperimentConfig& c) {
  const ExperimentConfig d;
  c.seed = j.value("seed", d.seed);
  c.dataset = j.value("dataset", d.dataset);
  c.models = j.value("models", d.models);
  c.architecture = j.value("architecture", d.architecture);
  c.train = j.value("train", d.train);
  c.attack = j.value("attack", d.attack);
  c.grid = j.value("grid", d.grid);
  c.sample_limit = j.value("sample_limit", d.sample_limit);
  c.save_images = j.value("save_images", d.save_images);
  c.output_dir = j.value("output_dir", d.output_dir);
}

void ExperimentConfig::validate() const {
  attack.validate();
  train.validate();
  if (dataset.synthetic_source()) dataset.synthetic.validate();
  if (sample_limit < 0) throw ConfigError("sample_limit must be >= 0");
  if (save_images < 0) throw ConfigError("save_images must be >= 0");
  for (double a : grid.alphas)
    if (!(a >= 0)) throw ConfigError("grid alphas must be >= 0");
  for (double e : grid.epsilons)
    if (!(e >= 0)) throw ConfigError("grid epsilons must be >= 0");
  for (int l : grid.levels)
    if (l < 1) throw ConfigError("grid levels must be >= 1");
  for (int k : grid.kernel_sizes)
    if (k < 1 || k % 2 == 0) throw ConfigError("grid kernel sizes must be odd and >= 1");
  nn::architecture_from_string(architecture);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("config " + path + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg = j.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path);
  out << json(cfg).dump(2) << '\n';
}

}  // namespace expattack
