// Command-line front end: dataset generation, training, attacks and reports.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "expattack/config.hpp"
#include "expattack/error.hpp"
#include "expattack/experiment.hpp"
#include "expattack/image_io.hpp"
#include "expattack/report.hpp"
#include "expattack/synthetic.hpp"

namespace fs = std::filesystem;
using namespace expattack;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::vector<std::string> models;
  std::vector<std::string> methods;
  std::vector<double> alphas;
  std::vector<double> epsilons;
  std::vector<int> levels;
  std::vector<int> kernel_sizes;
  std::optional<int> max_iter;
  std::optional<int> sample_limit;
  std::optional<std::string> test_manifest;
  std::optional<std::string> train_manifest;
  std::optional<bool> early_stop;
};

void add_common(CLI::App* cmd, Overrides& o, bool seed_required) {
  cmd->add_option("-c,--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  auto* seed = cmd->add_option("--seed", o.seed, "Experiment seed");
  if (seed_required) seed->required();
  cmd->add_option("-o,--output", o.output, "Output directory (or model path for train)");
  cmd->add_option("--train-manifest", o.train_manifest, "filename,label CSV for training");
  cmd->add_option("--test-manifest", o.test_manifest, "filename,label CSV for evaluation");
  cmd->add_option("--sample-limit", o.sample_limit, "Evaluate at most this many test samples");
}

void add_attack_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-m,--models", o.models, "Model files");
  cmd->add_option("--methods", o.methods, "Attack methods");
  cmd->add_option("--alpha", o.alphas, "Step sizes for fusion and multiplicative attacks");
  cmd->add_option("--epsilon", o.epsilons, "Budgets for additive attacks");
  cmd->add_option("--levels", o.levels, "Pyramid level counts");
  cmd->add_option("--kernel-size", o.kernel_sizes, "CBEF kernel sizes");
  cmd->add_option("--max-iter", o.max_iter, "Iterations per attack");
  cmd->add_option("--early-stop", o.early_stop, "Stop at the first label flip (true/false)");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.output) cfg.output_dir = *o.output;
  if (!o.models.empty()) cfg.models = o.models;
  if (!o.methods.empty()) {
    cfg.grid.methods.clear();
    for (const auto& m : o.methods) cfg.grid.methods.push_back(method_from_string(m));
    cfg.attack.method = cfg.grid.methods.front();
  }
  // A single value also becomes the AttackConfig default so `attack` sees it.
  if (!o.alphas.empty()) cfg.grid.alphas = o.alphas, cfg.attack.alpha = o.alphas.front();
  if (!o.epsilons.empty()) cfg.grid.epsilons = o.epsilons, cfg.attack.epsilon = o.epsilons.front();
  if (!o.levels.empty()) cfg.grid.levels = o.levels, cfg.attack.levels = o.levels.front();
  if (!o.kernel_sizes.empty()) cfg.grid.kernel_sizes = o.kernel_sizes, cfg.attack.kernel_size = o.kernel_sizes.front();
  if (o.max_iter) cfg.attack.max_iter = *o.max_iter;
  if (o.early_stop) cfg.attack.early_stop_on_flip = *o.early_stop;
  if (o.sample_limit) cfg.sample_limit = *o.sample_limit;
  if (o.test_manifest) cfg.dataset.test_manifest = *o.test_manifest;
  if (o.train_manifest) cfg.dataset.train_manifest = *o.train_manifest;
  cfg.validate();
  return cfg;
}

std::string command_line(int argc, char** argv) {
  std::ostringstream os;
  for (int i = 0; i < argc; ++i) os << (i ? " " : "") << argv[i];
  return os.str();
}

void gen_data(const ExperimentConfig& cfg) {
  const auto ds = generate_synthetic_dataset(cfg.dataset.synthetic, cfg.seed);
  const fs::path root(cfg.output_dir);
  save_dataset(ds.train, (root / "train").string());
  save_dataset(ds.test, (root / "test").string());
  std::printf("wrote %zu train and %zu test images to %s\n", ds.train.size(), ds.test.size(), root.c_str());
}

void train_model(const ExperimentConfig& cfg, const std::string& arch_name) {
  const int classes = cfg.dataset.synthetic.num_classes;
  std::vector<LabeledSample> train, test;
  if (cfg.dataset.train_manifest.empty()) {
    auto ds = generate_synthetic_dataset(cfg.dataset.synthetic, cfg.seed);
    train = std::move(ds.train);
    test = std::move(ds.test);
  } else {
    train = load_dataset(cfg.dataset.train_manifest, classes);
    if (!cfg.dataset.test_manifest.empty()) test = load_dataset(cfg.dataset.test_manifest, classes);
  }
  if (train.empty()) throw ConfigError("training set is empty");
  const auto arch = nn::architecture_from_string(arch_name);
  const nn::InputSpec input{train.front().image.channels(), train.front().image.height(),
                            train.front().image.width()};
  auto model = nn::train(nn::make_classifier<float>(arch, input, classes, cfg.train.seed), train, cfg.train);
  const fs::path out = cfg.output_dir.empty() || fs::is_directory(cfg.output_dir)
                           ? fs::path(cfg.output_dir) / ("model_" + nn::to_string(arch) + ".bin")
                           : fs::path(cfg.output_dir);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  nn::save_model(model, out.string());
  std::printf("arch %s: train accuracy %.4f", nn::to_string(arch).c_str(), nn::accuracy(model, train));
  if (!test.empty()) std::printf(", test accuracy %.4f", nn::accuracy(model, test));
  std::printf("\nsaved %s\n", out.c_str());
}

void print_matrices(const RunOutput& out) {
  for (const auto& tm : out.matrices) {
    std::printf("%s L=%d K=%d (%d samples)\n", to_string(tm.method).c_str(), tm.levels, tm.kernel_size, tm.samples);
    for (std::size_t i = 0; i < tm.models.size(); ++i) {
      std::printf("  %-16s", tm.models[i].c_str());
      for (double v : tm.rates[i]) std::printf(" %7.3f", v);
      std::printf("\n");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial exposure attacks: BEF, CBEF and baselines"};
  app.require_subcommand(1);
  Overrides o;
  std::string arch = "A";
  std::string axis = "L";
  std::string report_dir;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic fundus dataset as PNG + manifest");
  add_common(gen, o, true);
  auto* trn = app.add_subcommand("train", "Train a classifier and save it");
  add_common(trn, o, true);
  trn->add_option("--arch", arch, "Architecture A, B or C")->check(CLI::IsMember({"A", "B", "C"}));
  auto* atk = app.add_subcommand("attack", "Run one attack configuration on the first model");
  auto* swp = app.add_subcommand("sweep", "Whitebox success/quality curves over alpha or epsilon");
  auto* trf = app.add_subcommand("transfer", "Transfer matrix across all models");
  auto* abl = app.add_subcommand("ablate", "Transfer matrices over pyramid levels or kernel sizes");
  for (auto* cmd : {atk, swp, trf, abl}) {
    add_common(cmd, o, true);
    add_attack_flags(cmd, o);
  }
  abl->add_option("--axis", axis, "L or K")->check(CLI::IsMember({"L", "K"}));
  auto* rep = app.add_subcommand("report", "Rebuild summary.csv from results.jsonl");
  rep->add_option("--dir", report_dir, "Output directory of a previous run")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (rep->parsed()) {
      rebuild_summary(report_dir);
      return 0;
    }
    const ExperimentConfig cfg = resolve(o);
    if (gen->parsed()) {
      gen_data(cfg);
      return 0;
    }
    if (trn->parsed()) {
      train_model(cfg, arch);
      return 0;
    }
    const Workspace ws = prepare_workspace(cfg);
    RunOutput out;
    std::string name;
    if (atk->parsed()) {
      out = run_attack_batch(ws);
      name = "attack";
    } else if (swp->parsed()) {
      out = run_whitebox_sweep(ws);
      name = "sweep";
    } else if (trf->parsed()) {
      out = run_transfer_matrix(ws);
      name = "transfer";
    } else {
      out = run_ablation(ws, axis);
      name = "ablate";
    }
    emit_report(cfg, command_line(argc, argv), out, cfg.output_dir);
    if (!out.curves.empty()) std::fputs(curves_csv(out.curves).c_str(), stdout);
    print_matrices(out);
    if (out.curves.empty() && out.matrices.empty()) std::fputs(summary_csv(out.records).c_str(), stdout);
    std::printf("%s: wrote %s\n", name.c_str(), cfg.output_dir.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
