#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "expattack/config.hpp"
#include "expattack/experiment.hpp"

namespace expattack {

void to_json(nlohmann::json& j, const Evaluation& e);
void from_json(const nlohmann::json& j, Evaluation& e);
void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);

/// "%.6g"; NaN prints as "nan".
std::string format_number(double v);

/// Version string baked in at configure time ("0.1.0" or "0.1.0+<git hash>").
std::string version_string();

/// Records sorted by (method, model, alpha, epsilon, levels, kernel_size, id).
std::vector<SampleRecord> sorted_records(std::vector<SampleRecord> records);

/// One row per (method, model, alpha, epsilon, levels, kernel_size) group,
/// rates over initially correct samples.
std::string summary_csv(const std::vector<SampleRecord>& records);
std::string curves_csv(const std::vector<CurveRow>& rows);
std::string transfer_csv(const std::vector<TransferMatrix>& matrices);
/// Long format: method,L,K,craftedFrom,attacked,successRate,samples.
std::string ablation_csv(const std::vector<TransferMatrix>& matrices);

std::string results_jsonl(const std::vector<SampleRecord>& records);
std::vector<SampleRecord> parse_results_jsonl(const std::string& path);

/// Writes manifest.json, results.jsonl, summary.csv and whichever of
/// curves.csv, transfer_matrix.csv, ablation_{L,K}.csv and images/ apply.
/// Throws ConfigError when there is nothing to report.
void emit_report(const ExperimentConfig& cfg, const std::string& command, const RunOutput& out,
                 const std::string& dir);

/// Rebuilds summary.csv in `dir` from its results.jsonl.
void rebuild_summary(const std::string& dir);

}  // namespace expattack
