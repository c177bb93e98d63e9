#include "expattack/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "expattack/error.hpp"
#include "expattack/image_io.hpp"

#ifndef EXPATTACK_VERSION
#define EXPATTACK_VERSION "unknown"
#endif

namespace expattack {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

auto group_key(const SampleRecord& r) {
  return std::make_tuple(r.method, r.model, r.alpha, r.epsilon, r.levels, r.kernel_size);
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const Evaluation& e) {
  j = {{"model", e.model},
       {"cleanPrediction", e.clean_prediction},
       {"adversarialPrediction", e.adversarial_prediction},
       {"success", e.success}};
}

void from_json(const nlohmann::json& j, Evaluation& e) {
  j.at("model").get_to(e.model);
  j.at("cleanPrediction").get_to(e.clean_prediction);
  j.at("adversarialPrediction").get_to(e.adversarial_prediction);
  j.at("success").get_to(e.success);
}

void to_json(nlohmann::json& j, const SampleRecord& r) {
  j = {{"id", r.id},
       {"method", r.method},
       {"model", r.model},
       {"alpha", r.alpha},
       {"epsilon", r.epsilon},
       {"levels", r.levels},
       {"kernelSize", r.kernel_size},
       {"label", r.label},
       {"initialPrediction", r.initial_prediction},
       {"finalPrediction", r.final_prediction},
       {"success", r.success},
       {"iterations", r.iterations},
       {"ssim", number_or_null(r.ssim)},
       {"naturalness", number_or_null(r.naturalness)},
       {"evaluations", r.evaluations}};
}

void from_json(const nlohmann::json& j, SampleRecord& r) {
  j.at("id").get_to(r.id);
  j.at("method").get_to(r.method);
  j.at("model").get_to(r.model);
  j.at("alpha").get_to(r.alpha);
  j.at("epsilon").get_to(r.epsilon);
  j.at("levels").get_to(r.levels);
  j.at("kernelSize").get_to(r.kernel_size);
  j.at("label").get_to(r.label);
  j.at("initialPrediction").get_to(r.initial_prediction);
  j.at("finalPrediction").get_to(r.final_prediction);
  j.at("success").get_to(r.success);
  j.at("iterations").get_to(r.iterations);
  r.ssim = number_from(j.at("ssim"));
  r.naturalness = number_from(j.at("naturalness"));
  r.evaluations = j.value("evaluations", std::vector<Evaluation>{});
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string version_string() { return EXPATTACK_VERSION; }

std::vector<SampleRecord> sorted_records(std::vector<SampleRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const SampleRecord& a, const SampleRecord& b) {
    return std::tuple_cat(group_key(a), std::tie(a.id)) < std::tuple_cat(group_key(b), std::tie(b.id));
  });
  return records;
}

std::string summary_csv(const std::vector<SampleRecord>& records) {
  struct Acc {
    int total = 0, samples = 0, successes = 0;
    double ssim = 0, naturalness = 0;
    int transfer_trials = 0, transfer_hits = 0;
  };
  std::map<decltype(group_key(records.front())), Acc> groups;
  for (const auto& r : records) {
    Acc& a = groups[group_key(r)];
    ++a.total;
    if (r.initial_prediction != r.label) continue;
    ++a.samples;
    a.successes += r.success;
    a.ssim += r.ssim;
    a.naturalness += r.naturalness;
    for (const auto& e : r.evaluations)
      if (e.model != r.model) {
        ++a.transfer_trials;
        a.transfer_hits += e.success;
      }
  }
  std::ostringstream os;
  os << "method,model,alpha,epsilon,levels,kernelSize,total,samples,successRate,meanSsim,meanNaturalness,"
        "transferSuccessRate\n";
  for (const auto& [key, a] : groups) {
    const auto& [method, model, alpha, epsilon, levels, k] = key;
    const double n = a.samples;
    os << method << ',' << model << ',' << format_number(alpha) << ',' << format_number(epsilon) << ',' << levels
       << ',' << k << ',' << a.total << ',' << a.samples << ',' << (n ? format_number(a.successes / n) : "") << ','
       << (n ? format_number(a.ssim / n) : "") << ',' << (n ? format_number(a.naturalness / n) : "") << ','
       << (a.transfer_trials ? format_number(double(a.transfer_hits) / a.transfer_trials) : "") << '\n';
  }
  return os.str();
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
  std::ostringstream os;
  os << "method,parameter,value,successRate,meanSsim,meanNaturalness,samples\n";
  for (const auto& r : rows)
    os << to_string(r.method) << ',' << r.parameter << ',' << format_number(r.value) << ','
       << format_number(r.success_rate) << ',' << format_number(r.mean_ssim) << ','
       << format_number(r.mean_naturalness) << ',' << r.samples << '\n';
  return os.str();
}

std::string transfer_csv(const std::vector<TransferMatrix>& matrices) {
  std::ostringstream os;
  os << "method,craftedFrom";
  if (!matrices.empty())
    for (const auto& m : matrices.front().models) os << ',' << m;
  os << ",samples\n";
  for (const auto& tm : matrices) {
    if (!matrices.empty() && tm.models != matrices.front().models)
      throw ConfigError("transfer matrices disagree on model list");
    for (std::size_t i = 0; i < tm.models.size(); ++i) {
      os << to_string(tm.method) << ',' << tm.models[i];
      for (double v : tm.rates[i]) os << ',' << format_number(v);
      os << ',' << tm.samples << '\n';
    }
  }
  return os.str();
}

std::string ablation_csv(const std::vector<TransferMatrix>& matrices) {
  std::ostringstream os;
  os << "method,L,K,craftedFrom,attacked,successRate,samples\n";
  for (const auto& tm : matrices)
    for (std::size_t i = 0; i < tm.models.size(); ++i)
      for (std::size_t j = 0; j < tm.models.size(); ++j)
        os << to_string(tm.method) << ',' << tm.levels << ',' << tm.kernel_size << ',' << tm.models[i] << ','
           << tm.models[j] << ',' << format_number(tm.rates[i][j]) << ',' << tm.samples << '\n';
  return os.str();
}

std::string results_jsonl(const std::vector<SampleRecord>& records) {
  std::string out;
  for (const auto& r : sorted_records(records)) {
    out += nlohmann::json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<SampleRecord> parse_results_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<SampleRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<SampleRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void emit_report(const ExperimentConfig& cfg, const std::string& command, const RunOutput& out,
                 const std::string& dir) {
  if (out.records.empty() && out.curves.empty() && out.matrices.empty())
    throw ConfigError("nothing to report: the run produced no records");
  const fs::path root(dir);
  fs::create_directories(root);

  nlohmann::json manifest = {
      {"command", command}, {"seed", cfg.seed}, {"version", version_string()}, {"config", cfg}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
  write_text(root / "results.jsonl", results_jsonl(out.records));
  write_text(root / "summary.csv", summary_csv(out.records));
  if (!out.curves.empty()) write_text(root / "curves.csv", curves_csv(out.curves));
  if (!out.matrices.empty()) {
    if (out.ablation_axis.empty())
      write_text(root / "transfer_matrix.csv", transfer_csv(out.matrices));
    else
      write_text(root / ("ablation_" + out.ablation_axis + ".csv"), ablation_csv(out.matrices));
  }
  if (!out.images.empty()) {
    fs::create_directories(root / "images");
    for (const auto& img : out.images) save_image(img.image, (root / "images" / img.name).string());
  }
}

void rebuild_summary(const std::string& dir) {
  const fs::path root(dir);
  const auto records = parse_results_jsonl((root / "results.jsonl").string());
  if (records.empty()) throw ConfigError("results.jsonl in " + dir + " has no records");
  write_text(root / "summary.csv", summary_csv(records));
}

}  // namespace expattack
