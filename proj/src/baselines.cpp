#include "vtl/baselines.hpp"

#include "vtl/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace vtl {

GaussianStats fit_gaussian_stats(std::span<const FeatureSequence> data, int num_classes) {
  if (num_classes < 1) throw ConfigError("need at least one class");
  Eigen::Index dim = -1;
  for (const auto& seq : data) {
    if (seq.empty()) continue;
    if (dim < 0) dim = seq.dim();
    if (seq.dim() != dim) throw DataQualityError("fit_gaussian_stats: inconsistent dimensions");
  }
  if (dim < 0) throw DataQualityError("fit_gaussian_stats: no samples");

  const auto nc = static_cast<size_t>(num_classes);
  GaussianStats st;
  st.means.assign(nc, Vector::Zero(dim));
  st.covariances.assign(nc, Matrix::Zero(dim, dim));
  st.counts.assign(nc, 0.0);

  for (const auto& seq : data) {
    for (Eigen::Index i = 0; i < seq.size(); ++i) {
      const int label = seq.labels.at(static_cast<size_t>(i));
      if (label < 1 || label > num_classes) {
        throw DataQualityError("label " + std::to_string(label) + " outside 1.." +
                               std::to_string(num_classes));
      }
      const auto c = static_cast<size_t>(label - 1);
      st.counts[c] += 1.0;
      st.means[c] += seq.features.row(i).transpose();
    }
  }
  for (size_t c = 0; c < nc; ++c) {
    if (st.counts[c] > 0.0) st.means[c] /= st.counts[c];
  }
  // Centered second pass keeps the scatter accurate when means are large.
  for (const auto& seq : data) {
    for (Eigen::Index i = 0; i < seq.size(); ++i) {
      const auto c = static_cast<size_t>(seq.labels[static_cast<size_t>(i)] - 1);
      const Vector d = seq.features.row(i).transpose() - st.means[c];
      st.covariances[c].noalias() += d * d.transpose();
    }
  }
  st.pooled = Matrix::Zero(dim, dim);
  double total = 0.0;
  for (size_t c = 0; c < nc; ++c) {
    if (st.counts[c] >= 2.0) {
      st.pooled += st.covariances[c];
      st.covariances[c] /= st.counts[c];
    } else {
      st.covariances[c].setZero();
    }
    total += st.counts[c];
  }
  st.pooled /= total;
  return st;
}

GaussianStats fit_gaussian_stats(const FeatureSequence& data, int num_classes) {
  return fit_gaussian_stats(std::span<const FeatureSequence>(&data, 1), num_classes);
}

Matrix regularize_covariance(const Matrix& sigma) {
  const double trace = sigma.trace();
  const double ridge =
      trace > 0.0 ? kCovarianceRidge * trace / static_cast<double>(sigma.rows()) : kCovarianceRidge;
  Matrix out = symmetrize(sigma);
  out.diagonal().array() += ridge;
  return out;
}

DiscriminantModel::DiscriminantModel(DiscriminantKind kind, std::vector<Vector> means,
                                     std::vector<Matrix> covariances, Vector log_priors)
    : kind_(kind), means_(std::move(means)), log_priors_(std::move(log_priors)) {
  const size_t expected = kind_ == DiscriminantKind::kLda ? 1 : means_.size();
  if (means_.empty() || covariances.size() != expected ||
      log_priors_.size() != static_cast<Eigen::Index>(means_.size())) {
    throw ConfigError("DiscriminantModel: inconsistent parameter counts");
  }
  for (const auto& cov : covariances) {
    Matrix reg = regularize_covariance(cov);
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success) {
      reg = ensure_spd(reg, "discriminant covariance");
      llt.compute(reg);
    }
    Matrix chol = llt.matrixL();
    const double log_det = 2.0 * chol.diagonal().array().log().sum();
    covariances_.push_back(std::move(reg));
    factors_.push_back({std::move(chol), log_det});
  }
}

const Matrix& DiscriminantModel::covariance(int c) const {
  return kind_ == DiscriminantKind::kLda ? covariances_.front()
                                         : covariances_.at(static_cast<size_t>(c));
}

Vector DiscriminantModel::log_scores(const Eigen::Ref<const Vector>& x) const {
  const auto d = static_cast<double>(x.size());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Vector scores(num_classes());
  Vector maha(num_classes());
  for (int c = 0; c < num_classes(); ++c) {
    const auto& f = factors_[kind_ == DiscriminantKind::kLda ? 0 : static_cast<size_t>(c)];
    const Vector z = f.chol.triangularView<Eigen::Lower>().solve(x - means_[static_cast<size_t>(c)]);
    maha[c] = z.squaredNorm();
    scores[c] = log_priors_[c] - 0.5 * (d * log_2pi + f.log_det + maha[c]);
  }
  if (maha.allFinite()) return scores;
  // Far from every mean the quadratic terms dominate; compare them on a
  // common scale so the scores stay finite.
  double scale = 0.0;
  for (const auto& m : means_) scale = std::max(scale, (x - m).cwiseAbs().maxCoeff());
  for (int c = 0; c < num_classes(); ++c) {
    const auto& f = factors_[kind_ == DiscriminantKind::kLda ? 0 : static_cast<size_t>(c)];
    const Vector z = f.chol.triangularView<Eigen::Lower>().solve(
        (x - means_[static_cast<size_t>(c)]) / scale);
    scores[c] = std::isfinite(log_priors_[c]) ? -0.5 * z.squaredNorm()
                                              : -std::numeric_limits<double>::infinity();
  }
  return scores;
}

DiscriminantPrediction discriminant_predict(const DiscriminantModel& model,
                                            const Eigen::Ref<const Vector>& x) {
  const Vector scores = model.log_scores(x);
  return {softmax_from_log(scores), static_cast<int>(argmax_first(scores)) + 1};
}

std::vector<int> discriminant_predict_labels(const DiscriminantModel& model,
                                             const Matrix& features) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out.push_back(static_cast<int>(argmax_first(model.log_scores(features.row(i).transpose()))) +
                  1);
  }
  return out;
}

Vector class_log_priors(const GaussianStats& cal, bool uniform) {
  const int nc = cal.num_classes();
  if (uniform) return Vector::Constant(nc, -std::log(static_cast<double>(nc)));
  double total = 0.0;
  for (double n : cal.counts) total += n;
  Vector out(nc);
  for (int c = 0; c < nc; ++c) {
    const double n = cal.counts[static_cast<size_t>(c)];
    out[c] = n > 0.0 ? std::log(n / total) : -std::numeric_limits<double>::infinity();
  }
  return out;
}

DiscriminantModel fit_discriminant(const GaussianStats& stats, const Vector& log_priors,
                                   DiscriminantKind kind) {
  std::vector<Matrix> covs =
      kind == DiscriminantKind::kLda ? std::vector<Matrix>{stats.pooled} : stats.covariances;
  return DiscriminantModel(kind, stats.means, std::move(covs), log_priors);
}

DiscriminantModel adaptive_blend(const GaussianStats& src, const GaussianStats& cal, double tau,
                                 double lambda, DiscriminantKind kind, bool uniform_priors) {
  if (!(tau >= 0.0 && tau <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("tau and lambda must lie in [0, 1]");
  }
  if (src.num_classes() != cal.num_classes() || src.dim() != cal.dim()) {
    throw ConfigError("adaptive_blend: source and calibration statistics disagree in shape");
  }
  const int nc = cal.num_classes();
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (int c = 0; c < nc; ++c) {
    const auto i = static_cast<size_t>(c);
    // A side without samples of this class defers to the other side.
    const double t = !cal.has_class(c) ? 0.0 : !src.has_class(c) ? 1.0 : tau;
    means.push_back(t * cal.means[i] + (1.0 - t) * src.means[i]);
    if (kind == DiscriminantKind::kQda) {
      const double l = !cal.has_class(c) ? 0.0 : !src.has_class(c) ? 1.0 : lambda;
      covs.push_back(l * cal.covariances[i] + (1.0 - l) * src.covariances[i]);
    }
  }
  if (kind == DiscriminantKind::kLda) {
    covs.push_back(lambda * cal.pooled + (1.0 - lambda) * src.pooled);
  }
  return DiscriminantModel(kind, std::move(means), std::move(covs),
                           class_log_priors(cal, uniform_priors));
}

std::vector<double> blend_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(static_cast<double>(i) / 10.0);
  return g;
}

std::pair<FeatureSequence, FeatureSequence> temporal_halves(const FeatureSequence& cal,
                                                            int num_classes) {
  std::vector<Eigen::Index> per_class(static_cast<size_t>(num_classes), 0);
  for (int label : cal.labels) per_class.at(static_cast<size_t>(label - 1)) += 1;
  std::vector<Eigen::Index> seen(per_class.size(), 0);
  std::vector<Eigen::Index> first;
  std::vector<Eigen::Index> second;
  for (Eigen::Index i = 0; i < cal.size(); ++i) {
    const auto c = static_cast<size_t>(cal.labels[static_cast<size_t>(i)] - 1);
    (seen[c] < per_class[c] / 2 ? first : second).push_back(i);
    seen[c] += 1;
  }
  auto take = [&](const std::vector<Eigen::Index>& rows) {
    FeatureSequence out;
    out.subject_id = cal.subject_id;
    out.trial_id = cal.trial_id;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), cal.dim());
    for (size_t k = 0; k < rows.size(); ++k) {
      out.features.row(static_cast<Eigen::Index>(k)) = cal.features.row(rows[k]);
      out.labels.push_back(cal.labels[static_cast<size_t>(rows[k])]);
    }
    return out;
  };
  return {take(first), take(second)};
}

namespace {

double fold_accuracy(const DiscriminantModel& model, const FeatureSequence& test) {
  const auto predicted = discriminant_predict_labels(model, test.features);
  Eigen::Index correct = 0;
  for (size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

GridSearchResult grid_search_cv(const FeatureSequence& cal, const GaussianStats& src,
                                DiscriminantKind kind, bool uniform_priors) {
  const int nc = src.num_classes();
  auto [first, second] = temporal_halves(cal, nc);
  GridSearchResult result;
  if (first.empty() || second.empty()) {
    result.status = GridSearchStatus::kFallbackTooSmall;
    return result;
  }
  const GaussianStats stats_first = fit_gaussian_stats(first, nc);
  const GaussianStats stats_second = fit_gaussian_stats(second, nc);

  double best = -1.0;
  for (double tau : blend_grid()) {
    for (double lambda : blend_grid()) {
      const double acc_a = fold_accuracy(
          adaptive_blend(src, stats_first, tau, lambda, kind, uniform_priors), second);
      const double acc_b = fold_accuracy(
          adaptive_blend(src, stats_second, tau, lambda, kind, uniform_priors), first);
      const double score = 0.5 * (acc_a + acc_b);
      result.evaluated.push_back({tau, lambda, score});
      if (score > best) {
        best = score;
        result.tau = tau;
        result.lambda = lambda;
      }
    }
  }
  return result;
}

}  // namespace vtl
