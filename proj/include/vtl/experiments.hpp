#pragma once

// Leave-one-subject-out experiment runners: transfer-mode ablation, baseline
// comparison and the transfer-ratio sweep, plus their CSV/JSON outputs.

#include "vtl/baselines.hpp"
#include "vtl/bayes_gcm.hpp"
#include "vtl/datasets.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vtl {

enum class Method { kProposed, kAdaptiveLda, kAdaptiveQda };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

inline const std::vector<double> kDefaultRValues = {0, 0.5, 1, 2, 5, 10, 20, 50, 100};

struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<SyntheticConfig> synthetic;  // seed taken from `seed`
  PreprocessConfig preprocess;
  std::vector<Method> methods = {Method::kAdaptiveLda, Method::kAdaptiveQda, Method::kProposed};
  std::vector<TransferMode> modes = {TransferMode::kNone, TransferMode::kBoth, TransferMode::kMean,
                                     TransferMode::kVariance};
  std::vector<double> calibration_fractions = {0.25, 1.0};
  std::vector<double> r_values = kDefaultRValues;
  PriorOverrides prior;
  int calibration_trial = 1;
  bool uniform_class_priors = false;  // baselines only
  std::filesystem::path out_dir = "results";
  std::uint64_t seed = 0;
};

/// Throws ConfigError on invalid or missing fields. Relative manifest paths
/// resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Applies `a.b.c=value` to a JSON document. The value is parsed as JSON and
/// kept as a string when that fails.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Manifest-backed or synthetic dataset named by the config.
Dataset load_experiment_dataset(const ExperimentConfig& cfg);

struct PredictionRecord {
  double fraction = 1.0;
  double r = 0.0;  // NaN for rows without a transfer ratio
  int trial_id = 0;
  Eigen::Index row = 0;
  int truth = 0;
  int predicted = 0;
};

struct SubjectResult {
  std::string subject_id;
  double accuracy = 0.0;  // percent
  std::string hyperparameters;
  std::vector<PredictionRecord> predictions;
};

struct ReportRow {
  std::string dataset;
  std::string method;  // transfer mode for ablations, method otherwise
  double calibration_fraction = 1.0;
  std::optional<double> r;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std across target subjects
  std::vector<SubjectResult> subjects;

  double ci95_half_width() const;
};

struct ReportTable {
  std::string kind;  // ablation, comparison, r_sweep
  std::vector<ReportRow> rows;
};

using LabelPredictor = std::function<std::vector<int>(const Matrix&)>;

/// Pooled per-sample accuracy (percent) over all test sequences.
double evaluate_accuracy(const LabelPredictor& predictor, std::span<const FeatureSequence> test);

/// Accuracy from a prediction log.
double accuracy_from_predictions(std::span<const PredictionRecord> predictions);

/// Mean and sample standard deviation.
std::pair<double, double> mean_and_std(std::span<const double> values);

ReportTable run_ablation(const ExperimentConfig& cfg, const Dataset& ds);
ReportTable run_comparison(const ExperimentConfig& cfg, const Dataset& ds);
ReportTable run_r_sweep(const ExperimentConfig& cfg, const Dataset& ds);

std::string report_csv(const ReportTable& table);
void write_report_csv(const ReportTable& table, const std::filesystem::path& path);

/// predictions/<subject>/<method>.csv for every row of the table.
void write_prediction_logs(const ReportTable& table, const std::filesystem::path& out_dir);
std::vector<PredictionRecord> read_prediction_log(const std::filesystem::path& path);

/// run_meta.json with the resolved config, its hash, the seed and the version.
void write_run_meta(const ExperimentConfig& cfg, std::string_view command,
                    const std::vector<std::string>& outputs, const std::filesystem::path& path);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace vtl
