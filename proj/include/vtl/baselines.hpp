#pragma once

// Adaptive LDA / QDA: Gaussian discriminants whose means and covariances
// interpolate between calibration and source statistics.

#include "vtl/linalg.hpp"
#include "vtl/preprocess.hpp"

#include <span>
#include <vector>

namespace vtl {

/// Maximum-likelihood class moments.
struct GaussianStats {
  std::vector<Vector> means;        // [class]; zero for classes without samples
  std::vector<Matrix> covariances;  // [class]; divide-by-n, zero when n < 2
  std::vector<double> counts;       // [class]
  Matrix pooled;                    // sum_c n_c Sigma_c / sum_c n_c

  int num_classes() const { return static_cast<int>(counts.size()); }
  Eigen::Index dim() const { return pooled.rows(); }
  bool has_class(int c) const { return counts[static_cast<size_t>(c)] > 0.0; }
};

GaussianStats fit_gaussian_stats(std::span<const FeatureSequence> data, int num_classes);
GaussianStats fit_gaussian_stats(const FeatureSequence& data, int num_classes);

enum class DiscriminantKind { kLda, kQda };

inline constexpr double kCovarianceRidge = 1e-6;

/// Sigma + eps * tr(Sigma)/D * I, or Sigma + eps * I when the trace is zero.
Matrix regularize_covariance(const Matrix& sigma);

class DiscriminantModel {
 public:
  /// For kLda `covariances` holds a single shared matrix. Covariances are
  /// regularized on construction.
  DiscriminantModel(DiscriminantKind kind, std::vector<Vector> means,
                    std::vector<Matrix> covariances, Vector log_priors);

  DiscriminantKind kind() const { return kind_; }
  int num_classes() const { return static_cast<int>(means_.size()); }
  const std::vector<Vector>& means() const { return means_; }
  /// Regularized covariance used by class c.
  const Matrix& covariance(int c) const;
  const Vector& log_priors() const { return log_priors_; }

  /// Unnormalized log p(c | x) for every class.
  Vector log_scores(const Eigen::Ref<const Vector>& x) const;

 private:
  struct Factor {
    Matrix chol;  // lower factor of the covariance
    double log_det;
  };

  DiscriminantKind kind_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Factor> factors_;
  Vector log_priors_;
};

struct DiscriminantPrediction {
  Vector probabilities;
  int label = 0;  // 1..C
};

DiscriminantPrediction discriminant_predict(const DiscriminantModel& model,
                                            const Eigen::Ref<const Vector>& x);
std::vector<int> discriminant_predict_labels(const DiscriminantModel& model,
                                             const Matrix& features);

/// Log class priors from calibration proportions, or uniform.
Vector class_log_priors(const GaussianStats& cal, bool uniform);

/// Discriminant built from one set of statistics only.
DiscriminantModel fit_discriminant(const GaussianStats& stats, const Vector& log_priors,
                                   DiscriminantKind kind);

/// mu_c = tau mu_c^cal + (1 - tau) mu_c^src; Sigma (LDA) or Sigma_c (QDA)
/// blended with lambda. Classes absent from calibration use the source
/// statistics. Throws ConfigError when tau or lambda is outside [0, 1].
DiscriminantModel adaptive_blend(const GaussianStats& src, const GaussianStats& cal, double tau,
                                 double lambda, DiscriminantKind kind,
                                 bool uniform_priors = false);

enum class GridSearchStatus { kOk, kFallbackTooSmall };

struct GridPoint {
  double tau;
  double lambda;
  double score;  // mean held-out accuracy over the two folds, in [0, 1]
};

struct GridSearchResult {
  double tau = 0.0;
  double lambda = 0.0;
  GridSearchStatus status = GridSearchStatus::kOk;
  std::vector<GridPoint> evaluated;  // empty on fallback
};

/// The 11 grid values 0, 0.1, ..., 1.0.
std::vector<double> blend_grid();

/// Two-fold cross-validated 11 x 11 search over (tau, lambda). Folds are the
/// first and second temporal halves of each class in the calibration set.
/// Ties go to smaller tau, then smaller lambda.
GridSearchResult grid_search_cv(const FeatureSequence& cal, const GaussianStats& src,
                                DiscriminantKind kind, bool uniform_priors = false);

/// Splits each class of `cal` into its first and second temporal halves.
std::pair<FeatureSequence, FeatureSequence> temporal_halves(const FeatureSequence& cal,
                                                            int num_classes);

}  // namespace vtl
