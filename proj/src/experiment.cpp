#include "expattack/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <thread>

#include "expattack/image_io.hpp"
#include "expattack/synthetic.hpp"

namespace expattack {

namespace {

constexpr std::size_t kCorpusLimit = 200;

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
// must be written by index so the outcome does not depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

std::string stem(const std::string& id) { return std::filesystem::path(id).stem().string(); }

std::vector<Method> grid_methods(const ExperimentConfig& cfg) {
  return cfg.grid.methods.empty() ? std::vector<Method>{cfg.attack.method} : cfg.grid.methods;
}

SampleRecord make_record(const LabeledSample& s, const AttackConfig& cfg, const std::string& model,
                         const AttackResult& r, const NaturalnessModel& nat) {
  SampleRecord rec;
  rec.id = s.id;
  rec.method = to_string(cfg.method);
  rec.model = model;
  rec.alpha = cfg.alpha;
  rec.epsilon = cfg.epsilon;
  rec.levels = cfg.levels;
  rec.kernel_size = cfg.kernel_size;
  rec.label = s.label;
  rec.initial_prediction = r.initial_prediction;
  rec.final_prediction = r.final_prediction;
  rec.success = r.success;
  rec.iterations = r.iterations;
  rec.ssim = ssim(s.image, r.adversarial);
  rec.naturalness = nat.fitted() ? nat.score(brisque_features(r.adversarial))
                                 : std::numeric_limits<double>::quiet_NaN();
  return rec;
}

// Runs one attack configuration on the given model over `indices`.
std::vector<AttackResult> attack_all(const nn::Model& model, std::span<const LabeledSample> samples,
                                     std::span<const std::size_t> indices, const AttackConfig& cfg) {
  std::vector<AttackResult> out(indices.size());
  parallel_for(indices.size(), [&](std::size_t k) { out[k] = run_attack(model, samples[indices[k]], cfg); });
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void collect_images(RunOutput& out, const Workspace& ws, std::span<const std::size_t> indices,
                    std::span<const AttackResult> results, Method method) {
  const auto limit = std::min<std::size_t>(static_cast<std::size_t>(ws.config.save_images), indices.size());
  for (std::size_t k = 0; k < limit; ++k)
    out.images.push_back({stem(ws.samples[indices[k]].id) + "_" + to_string(method) + ".png", results[k].adversarial});
}

void require_models(const Workspace& ws, std::size_t n) {
  if (ws.models.size() < n)
    throw ConfigError("experiment needs at least " + std::to_string(n) + " model(s), got " +
                      std::to_string(ws.models.size()));
}

// Transfer matrices of every configured method at one (L, K) setting.
void transfer_into(RunOutput& out, const Workspace& ws, const AttackConfig& base, bool keep_images) {
  const auto correct = commonly_correct(ws.models, ws.samples);
  if (correct.empty()) throw ConfigError("no sample is classified correctly by every model");
  std::vector<LabeledSample> subset;
  for (auto i : correct) subset.push_back(ws.samples[i]);
  const auto idx = all_indices(subset.size());
  for (Method m : grid_methods(ws.config)) {
    AttackConfig cfg = base;
    cfg.method = m;
    std::vector<std::vector<Image>> crafted(ws.models.size());
    std::vector<std::vector<AttackResult>> results(ws.models.size());
    for (std::size_t i = 0; i < ws.models.size(); ++i) {
      results[i] = attack_all(ws.models[i].model, subset, idx, cfg);
      for (auto& r : results[i]) crafted[i].push_back(r.adversarial);
    }
    TransferMatrix tm = evaluate_transfer(ws.models, subset, crafted, m);
    tm.levels = cfg.levels;
    tm.kernel_size = cfg.kernel_size;
    out.matrices.push_back(std::move(tm));

    for (std::size_t i = 0; i < ws.models.size(); ++i) {
      std::vector<SampleRecord> recs(subset.size());
      parallel_for(subset.size(), [&](std::size_t s) {
        SampleRecord rec = make_record(subset[s], cfg, ws.models[i].name, results[i][s], ws.naturalness);
        for (const auto& target : ws.models) {
          Evaluation e;
          e.model = target.name;
          e.clean_prediction = target.model.predict(subset[s].image);
          e.adversarial_prediction = target.model.predict(crafted[i][s]);
          e.success = e.adversarial_prediction != subset[s].label;
          rec.evaluations.push_back(std::move(e));
        }
        recs[s] = std::move(rec);
      });
      for (auto& r : recs) out.records.push_back(std::move(r));
      if (keep_images && i == 0) collect_images(out, ws, correct, results[0], m);
    }
  }
}

}  // namespace

double TransferMatrix::mean_transfer() const {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < rates.size(); ++i)
    for (std::size_t j = 0; j < rates[i].size(); ++j)
      if (i != j) {
        sum += rates[i][j];
        ++n;
      }
  return n ? sum / n : 0.0;
}

Workspace make_workspace(const ExperimentConfig& cfg, std::vector<LabeledSample> samples,
                         std::vector<NamedModel> models, std::span<const LabeledSample> corpus) {
  Workspace ws;
  ws.config = cfg;
  ws.samples = std::move(samples);
  std::sort(ws.samples.begin(), ws.samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (cfg.sample_limit > 0 && ws.samples.size() > static_cast<std::size_t>(cfg.sample_limit))
    ws.samples.resize(cfg.sample_limit);
  ws.models = std::move(models);
  std::vector<BrisqueFeatures> feats;
  for (std::size_t i = 0; i < std::min(kCorpusLimit, corpus.size()); ++i)
    feats.push_back(brisque_features(corpus[i].image));
  if (feats.size() >= NaturalnessModel::kMinCorpus) ws.naturalness = NaturalnessModel::fit(feats);
  return ws;
}

Workspace prepare_workspace(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<LabeledSample> test;
  int num_classes = cfg.dataset.synthetic.num_classes;
  if (cfg.dataset.synthetic_source()) {
    SyntheticSpec spec = cfg.dataset.synthetic;
    spec.train_per_class = 0;
    test = generate_synthetic_dataset(spec, cfg.seed).test;
  } else {
    test = load_dataset(cfg.dataset.test_manifest, num_classes);
  }
  std::vector<NamedModel> models;
  for (const auto& path : cfg.models)
    models.push_back({std::filesystem::path(path).stem().string(), nn::load_model(path)});
  for (const auto& m : models)
    if (m.model.num_classes != num_classes)
      throw ConfigError("model " + m.name + " has " + std::to_string(m.model.num_classes) + " classes, dataset has " +
                        std::to_string(num_classes));
  std::vector<LabeledSample> corpus = test;
  return make_workspace(cfg, std::move(test), std::move(models), corpus);
}

RunOutput run_attack_batch(const Workspace& ws) {
  require_models(ws, 1);
  RunOutput out;
  const auto idx = all_indices(ws.samples.size());
  const auto results = attack_all(ws.models[0].model, ws.samples, idx, ws.config.attack);
  out.records.resize(idx.size());
  parallel_for(idx.size(), [&](std::size_t k) {
    out.records[k] = make_record(ws.samples[k], ws.config.attack, ws.models[0].name, results[k], ws.naturalness);
  });
  collect_images(out, ws, idx, results, ws.config.attack.method);
  return out;
}

RunOutput run_whitebox_sweep(const Workspace& ws) {
  require_models(ws, 1);
  RunOutput out;
  const auto idx = all_indices(ws.samples.size());
  for (Method m : grid_methods(ws.config)) {
    const bool by_epsilon = is_additive(m);
    std::vector<double> values = by_epsilon ? ws.config.grid.epsilons : ws.config.grid.alphas;
    if (values.empty()) values = {by_epsilon ? ws.config.attack.epsilon : ws.config.attack.alpha};
    for (std::size_t v = 0; v < values.size(); ++v) {
      AttackConfig cfg = ws.config.attack;
      cfg.method = m;
      (by_epsilon ? cfg.epsilon : cfg.alpha) = values[v];
      const auto results = attack_all(ws.models[0].model, ws.samples, idx, cfg);
      std::vector<SampleRecord> recs(idx.size());
      parallel_for(idx.size(), [&](std::size_t k) {
        recs[k] = make_record(ws.samples[k], cfg, ws.models[0].name, results[k], ws.naturalness);
      });
      CurveRow row;
      row.method = m;
      row.parameter = by_epsilon ? "epsilon" : "alpha";
      row.value = values[v];
      double ssim_sum = 0, nat_sum = 0;
      for (const auto& r : recs) {
        if (r.initial_prediction != r.label) continue;
        ++row.samples;
        row.success_rate += r.success ? 1 : 0;
        ssim_sum += r.ssim;
        nat_sum += r.naturalness;
      }
      if (row.samples > 0) {
        row.success_rate /= row.samples;
        row.mean_ssim = ssim_sum / row.samples;
        row.mean_naturalness = nat_sum / row.samples;
      }
      out.curves.push_back(row);
      for (auto& r : recs) out.records.push_back(std::move(r));
      if (v == 0) collect_images(out, ws, idx, results, m);
    }
  }
  return out;
}

RunOutput run_transfer_matrix(const Workspace& ws) {
  require_models(ws, 2);
  RunOutput out;
  transfer_into(out, ws, ws.config.attack, true);
  return out;
}

RunOutput run_ablation(const Workspace& ws, const std::string& axis) {
  require_models(ws, 2);
  if (axis != "L" && axis != "K") throw ConfigError("ablation axis must be L or K");
  const bool by_levels = axis == "L";
  std::vector<int> values = by_levels ? ws.config.grid.levels : ws.config.grid.kernel_sizes;
  if (values.empty()) throw ConfigError("ablation grid for axis " + axis + " is empty");
  RunOutput out;
  out.ablation_axis = axis;
  for (int v : values) {
    AttackConfig cfg = ws.config.attack;
    (by_levels ? cfg.levels : cfg.kernel_size) = v;
    transfer_into(out, ws, cfg, false);
  }
  return out;
}

std::vector<std::size_t> commonly_correct(std::span<const NamedModel> models, std::span<const LabeledSample> samples) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    bool ok = true;
    for (const auto& m : models) ok = ok && m.model.predict(samples[s].image) == samples[s].label;
    if (ok) out.push_back(s);
  }
  return out;
}

TransferMatrix evaluate_transfer(std::span<const NamedModel> models, std::span<const LabeledSample> samples,
                                 const std::vector<std::vector<Image>>& crafted, Method method) {
  if (crafted.size() != models.size()) throw DimensionError("one crafted set per model expected");
  TransferMatrix tm;
  tm.method = method;
  for (const auto& m : models) tm.models.push_back(m.name);
  tm.samples = static_cast<int>(samples.size());
  tm.rates.assign(models.size(), std::vector<double>(models.size(), 0.0));
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (crafted[i].size() != samples.size()) throw DimensionError("crafted set size differs from sample count");
    for (std::size_t j = 0; j < models.size(); ++j) {
      std::size_t hits = 0;
      for (std::size_t s = 0; s < samples.size(); ++s)
        hits += models[j].model.predict(crafted[i][s]) != samples[s].label ? 1 : 0;
      tm.rates[i][j] = samples.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(samples.size());
    }
  }
  return tm;
}

}  // namespace expattack
