#pragma once

#include "vtl/linalg.hpp"
#include "vtl/preprocess.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vtl {

struct SubjectData {
  std::string id;
  std::vector<FeatureSequence> trials;  // trial k at index k - 1
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  Eigen::Index dim = 0;
  double fs = 0.0;
  std::vector<SubjectData> subjects;

  const SubjectData& subject(const std::string& id) const;
};

/// Throws DataQualityError unless subject ids are unique and every trial has
/// dimension `dim`, finite features and labels in 1..num_classes.
void validate_dataset(const Dataset& ds);

/// Loads a JSON manifest
///   {"name", "C", "D", "fs", "subjects": [{"id", "trials": [paths]}]}
/// with trial paths relative to the manifest. Raw trial CSVs pass through
/// extract_features. A manifest with "kind": "features" instead references
/// `ch1..chD,label` CSVs that are taken as-is.
Dataset load_dataset(const std::filesystem::path& manifest, const PreprocessConfig& cfg = {});

/// Writes feature CSVs plus a "features" manifest that load_dataset reads back
/// bit-identically. Returns the manifest path.
std::filesystem::path save_feature_dataset(const Dataset& ds, const std::filesystem::path& dir);

FeatureSequence read_feature_csv(const std::filesystem::path& path, Eigen::Index dim,
                                 int num_classes);
void write_feature_csv(const std::filesystem::path& path, const FeatureSequence& seq);

/// Row-wise concatenation in the given order.
FeatureSequence concatenate(std::span<const FeatureSequence> parts, const std::string& subject_id);

struct RoleSplit {
  std::string target_subject_id;
  std::vector<FeatureSequence> source;  // one pooled sequence per source subject
  FeatureSequence calibration;
  std::vector<FeatureSequence> test;
};

/// Leave-one-subject-out roles. `calibration_trial` is 1-based.
RoleSplit split_roles(const Dataset& ds, const std::string& target_id, int calibration_trial = 1);

/// Keeps the first floor(fraction * N) rows.
FeatureSequence truncate_calibration(const FeatureSequence& cal, double fraction);

struct SyntheticConfig {
  int num_subjects = 6;
  int num_classes = 4;
  Eigen::Index dim = 4;
  int samples_per_class = 20;  // per trial
  int trials_per_subject = 6;
  double subject_dispersion = 2.0;  // std of per-subject class-mean offsets
  double class_separation = 1.0;    // std of the global class prototypes
  double within_class_std = 0.25;   // scale of the generated class covariances
  double gain_dispersion = 0.0;     // log-std of per-subject channel gains on the noise
  std::vector<Matrix> class_covariances;  // explicit shared covariances; generated when empty
  std::uint64_t seed = 0;
};

/// Ground truth behind generate_synthetic: class prototypes and shared covariances.
struct SyntheticTruth {
  std::vector<Vector> prototypes;
  std::vector<Matrix> covariances;
};

SyntheticTruth synthetic_truth(const SyntheticConfig& cfg);

/// Per subject and class: mean = prototype + offset (std subject_dispersion),
/// samples from N(mean, G_s Sigma_c G_s) where G_s = diag(exp(gain_dispersion * z)).
/// Each trial holds samples_per_class rows per class in contiguous class blocks.
/// Subject s draws from its own stream derived from (seed, s).
Dataset generate_synthetic(const SyntheticConfig& cfg);

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticConfig& cfg);

}  // namespace vtl
