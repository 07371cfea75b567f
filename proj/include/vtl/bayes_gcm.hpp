#pragma once

// Gaussian classification model with conjugate Gaussian-Wishart / Dirichlet
// priors, weighted pre-training on source subjects and precision (variance)
// transfer to a target subject.
//
// Labels are 1..C everywhere in the public interface; per-class containers
// are indexed by label - 1.

#include "vtl/linalg.hpp"
#include "vtl/preprocess.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vtl {

struct PriorHyperparams {
  Vector m0;
  double beta0 = 1.0;
  double nu0 = 0.0;
  Matrix W0;
  Matrix W0_inv;  // cached symmetric inverse of W0
  double alpha0 = 1.0;

  Eigen::Index dim() const { return m0.size(); }
};

struct PriorOverrides {
  std::optional<Vector> m0;
  std::optional<double> beta0;
  std::optional<double> nu0;
  std::optional<Matrix> W0;
  std::optional<double> alpha0;
};

/// Defaults: m0 = 0, beta0 = 1, nu0 = D + 1, W0 = I, alpha0 = 1.
/// Throws InvalidPriorError when an override breaks nu0 > D-1, W0 SPD,
/// beta0 > 0 or alpha0 > 0.
PriorHyperparams init_prior(Eigen::Index dim, const PriorOverrides& overrides = {});

/// How the per-source weights w_s are chosen.
struct WeightPolicy {
  enum class Kind { kRatioMatch, kExplicitRatio };
  Kind kind = Kind::kRatioMatch;
  double r = 1.0;

  static WeightPolicy ratio_match() { return {}; }
  static WeightPolicy explicit_ratio(double r) { return {Kind::kExplicitRatio, r}; }
};

/// w_s = r * N_cal / N_s, with r = 1 for ratio matching.
std::vector<double> compute_weights(const WeightPolicy& policy, Eigen::Index n_cal,
                                    std::span<const Eigen::Index> n_sources);

/// r = sum_s w_s N_s / (S N_cal).
double transfer_ratio(std::span<const double> weights, Eigen::Index n_cal,
                      std::span<const Eigen::Index> n_sources);

/// Per-class sufficient statistics of a labeled sequence.
struct ClassStats {
  double count = 0.0;
  Vector sum;      // sum of x
  Matrix scatter;  // sum of x x^T
};

/// Throws DataQualityError on dimension or label mismatch.
std::vector<ClassStats> class_statistics(const FeatureSequence& seq, int num_classes,
                                         Eigen::Index dim);

struct SubjectClassPosterior {
  double beta = 0.0;
  Vector m;
  double alpha = 0.0;
};

struct SourcePosterior {
  int num_classes = 0;
  Eigen::Index dim = 0;
  std::vector<std::string> subject_ids;
  std::vector<double> weights;
  std::vector<std::vector<SubjectClassPosterior>> subjects;  // [subject][class]
  std::vector<double> nu_src;                                // [class]
  std::vector<Matrix> W_inv_src;                             // [class]
  // Pooled mean hyperparameters used by the mean-transfer ablations.
  std::vector<double> beta_pooled;  // [class]
  std::vector<Vector> m_pooled;     // [class]

  int num_subjects() const { return static_cast<int>(subjects.size()); }
};

/// Weighted source pre-training. Mean hyperparameters are subject specific;
/// the precision hyperparameters of each class are averaged over subjects.
SourcePosterior pretrain_source(const PriorHyperparams& prior, int num_classes,
                                std::span<const FeatureSequence> sources,
                                std::span<const double> weights);

enum class TransferMode { kNone, kMean, kVariance, kBoth };

std::string_view to_string(TransferMode mode);
TransferMode parse_transfer_mode(std::string_view name);
inline constexpr TransferMode kAllTransferModes[] = {TransferMode::kNone, TransferMode::kMean,
                                                     TransferMode::kVariance, TransferMode::kBoth};

struct TransferConfig {
  TransferMode mode = TransferMode::kVariance;
  WeightPolicy weight_policy = WeightPolicy::ratio_match();
};

struct ClassPosterior {
  double beta = 0.0;
  Vector m;
  double nu = 0.0;
  Matrix W_inv;
  double alpha = 0.0;
};

struct TargetPosterior {
  std::vector<ClassPosterior> classes;
  TransferMode mode = TransferMode::kNone;

  int num_classes() const { return static_cast<int>(classes.size()); }
  Eigen::Index dim() const { return classes.empty() ? 0 : classes.front().m.size(); }
};

/// Calibration update of the target subject.
///
/// kVariance seeds (nu, W^-1) with the source precision hyperparameters and
/// takes the mean hyperparameters from the prior. kMean replaces (beta0, m0)
/// with the pooled source mean hyperparameters and seeds the precision with
/// the prior. kBoth does both, kNone neither. Classes without calibration
/// samples keep their seed values.
TargetPosterior transfer_update(const PriorHyperparams& prior, const SourcePosterior& source,
                                const FeatureSequence& calibration, const TransferConfig& cfg);

/// Plain conjugate update from the prior; equivalent to kNone without sources.
TargetPosterior posterior_from_prior(const PriorHyperparams& prior, int num_classes,
                                     const FeatureSequence& data);

/// Multivariate Student-t with location, precision-like scale and dof.
class StudentT {
 public:
  StudentT(Vector location, Matrix precision_scale, double dof);

  double log_density(const Eigen::Ref<const Vector>& x) const;

  const Vector& location() const { return location_; }
  const Matrix& precision_scale() const { return precision_scale_; }
  double dof() const { return dof_; }

 private:
  Vector location_;
  Matrix precision_scale_;
  Matrix chol_;  // lower Cholesky factor of precision_scale_
  double dof_;
  double log_norm_;
};

struct PredictiveModel {
  std::vector<StudentT> classes;
  Vector log_weights;  // log of the Dirichlet posterior mean

  int num_classes() const { return static_cast<int>(classes.size()); }
};

/// Marginalizes (mu, Lambda, pi): class c is Student-t with dof nu + 1 - D,
/// location m and precision scale (dof * beta / (1 + beta)) W.
PredictiveModel build_predictive(const TargetPosterior& posterior);

struct Prediction {
  Vector probabilities;  // [class]
  int label = 0;         // 1..C
};

Prediction predict(const PredictiveModel& model, const Eigen::Ref<const Vector>& x);

/// Predicted labels for every row of `features`.
std::vector<int> predict_labels(const PredictiveModel& model, const Matrix& features);

}  // namespace vtl
