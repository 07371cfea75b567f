#include "vtl/bayes_gcm.hpp"

#include "vtl/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vtl {
namespace {

struct MeanUpdate {
  double beta;
  Vector m;
  Matrix scatter_term;  // sum w x x^T + beta_p m_p m_p^T - beta m m^T
};

// Conjugate update of the mean hyperparameters from a (beta_p, m_p) prior
// with already weighted sufficient statistics.
MeanUpdate update_mean(double beta_p, const Vector& m_p, double count, const Vector& sum,
                       const Matrix& scatter) {
  MeanUpdate u;
  u.beta = count + beta_p;
  // No data leaves the mean at the prior exactly.
  u.m = count == 0.0 ? m_p : Vector((sum + beta_p * m_p) / u.beta);
  u.scatter_term = scatter + beta_p * m_p * m_p.transpose() - u.beta * u.m * u.m.transpose();
  return u;
}

std::string class_tag(const char* what, size_t c) {
  return std::string(what) + " (class " + std::to_string(c + 1) + ")";
}

}  // namespace

PriorHyperparams init_prior(Eigen::Index dim, const PriorOverrides& overrides) {
  if (dim < 1) throw InvalidPriorError("prior dimension must be >= 1");
  PriorHyperparams p;
  p.m0 = overrides.m0.value_or(Vector::Zero(dim));
  p.beta0 = overrides.beta0.value_or(1.0);
  p.nu0 = overrides.nu0.value_or(static_cast<double>(dim) + 1.0);
  p.W0 = overrides.W0.value_or(Matrix::Identity(dim, dim));
  p.alpha0 = overrides.alpha0.value_or(1.0);

  if (p.m0.size() != dim) throw InvalidPriorError("m0 must have length D");
  if (!p.m0.allFinite()) throw InvalidPriorError("m0 must be finite");
  if (!(p.beta0 > 0.0) || !std::isfinite(p.beta0)) throw InvalidPriorError("beta0 must be > 0");
  if (!(p.alpha0 > 0.0) || !std::isfinite(p.alpha0)) throw InvalidPriorError("alpha0 must be > 0");
  if (!(p.nu0 > static_cast<double>(dim) - 1.0) || !std::isfinite(p.nu0)) {
    throw InvalidPriorError("nu0 must exceed D - 1 (nu0=" + std::to_string(p.nu0) +
                            ", D=" + std::to_string(dim) + ")");
  }
  if (p.W0.rows() != dim || p.W0.cols() != dim) throw InvalidPriorError("W0 must be D x D");
  if (!p.W0.isApprox(p.W0.transpose(), 1e-12) || !is_spd(p.W0)) {
    throw InvalidPriorError("W0 must be symmetric positive definite");
  }
  p.W0 = symmetrize(p.W0);
  p.W0_inv = symmetrize(p.W0.llt().solve(Matrix::Identity(dim, dim)));
  return p;
}

std::vector<double> compute_weights(const WeightPolicy& policy, Eigen::Index n_cal,
                                    std::span<const Eigen::Index> n_sources) {
  if (n_cal < 1) throw ConfigError("calibration set must contain at least one sample");
  const double r = policy.kind == WeightPolicy::Kind::kRatioMatch ? 1.0 : policy.r;
  if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("transfer ratio r must be >= 0");
  std::vector<double> w;
  w.reserve(n_sources.size());
  for (Eigen::Index ns : n_sources) {
    if (ns < 1) throw ConfigError("every source subject needs at least one sample");
    w.push_back(r * static_cast<double>(n_cal) / static_cast<double>(ns));
  }
  return w;
}

double transfer_ratio(std::span<const double> weights, Eigen::Index n_cal,
                      std::span<const Eigen::Index> n_sources) {
  if (weights.size() != n_sources.size() || weights.empty() || n_cal < 1) {
    throw ConfigError("transfer_ratio: mismatched inputs");
  }
  double acc = 0.0;
  for (size_t s = 0; s < weights.size(); ++s) acc += weights[s] * static_cast<double>(n_sources[s]);
  return acc / (static_cast<double>(weights.size()) * static_cast<double>(n_cal));
}

std::vector<ClassStats> class_statistics(const FeatureSequence& seq, int num_classes,
                                         Eigen::Index dim) {
  if (!seq.empty() && seq.dim() != dim) {
    throw DataQualityError("sequence " + seq.subject_id + "/" + std::to_string(seq.trial_id) +
                           " has dimension " + std::to_string(seq.dim()) + ", expected " +
                           std::to_string(dim));
  }
  if (static_cast<Eigen::Index>(seq.labels.size()) != seq.size()) {
    throw DataQualityError("labels not aligned with features in " + seq.subject_id);
  }
  std::vector<ClassStats> stats(static_cast<size_t>(num_classes));
  for (auto& s : stats) {
    s.sum = Vector::Zero(dim);
    s.scatter = Matrix::Zero(dim, dim);
  }
  for (Eigen::Index i = 0; i < seq.size(); ++i) {
    const int label = seq.labels[static_cast<size_t>(i)];
    if (label < 1 || label > num_classes) {
      throw DataQualityError("label " + std::to_string(label) + " outside 1.." +
                             std::to_string(num_classes) + " in " + seq.subject_id);
    }
    auto& s = stats[static_cast<size_t>(label - 1)];
    const auto x = seq.features.row(i).transpose();
    s.count += 1.0;
    s.sum += x;
    s.scatter.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  for (auto& s : stats) s.scatter = s.scatter.selfadjointView<Eigen::Lower>();
  return stats;
}

SourcePosterior pretrain_source(const PriorHyperparams& prior, int num_classes,
                                std::span<const FeatureSequence> sources,
                                std::span<const double> weights) {
  if (num_classes < 1) throw ConfigError("need at least one class");
  if (sources.empty()) throw ConfigError("pre-training needs at least one source subject");
  if (weights.size() != sources.size()) {
    throw ConfigError("one weight per source subject is required");
  }
  const Eigen::Index dim = prior.dim();
  const auto num_sources = static_cast<double>(sources.size());
  const auto nc = static_cast<size_t>(num_classes);

  SourcePosterior post;
  post.num_classes = num_classes;
  post.dim = dim;
  post.weights.assign(weights.begin(), weights.end());
  post.nu_src.assign(nc, 0.0);
  post.W_inv_src.assign(nc, Matrix::Zero(dim, dim));
  post.beta_pooled.assign(nc, 0.0);
  std::vector<Vector> pooled_sum(nc, Vector::Zero(dim));

  for (size_t s = 0; s < sources.size(); ++s) {
    const double w = weights[s];
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("source weights must be >= 0");
    const auto stats = class_statistics(sources[s], num_classes, dim);
    post.subject_ids.push_back(sources[s].subject_id);
    auto& subject = post.subjects.emplace_back(nc);
    for (size_t c = 0; c < nc; ++c) {
      const double wn = w * stats[c].count;
      const Vector wsum = w * stats[c].sum;
      const auto u = update_mean(prior.beta0, prior.m0, wn, wsum, w * stats[c].scatter);
      subject[c].beta = u.beta;
      subject[c].m = u.m;
      subject[c].alpha = stats[c].count + prior.alpha0;
      post.nu_src[c] += wn;
      post.W_inv_src[c] += u.scatter_term;
      post.beta_pooled[c] += wn;
      pooled_sum[c] += wsum;
    }
  }

  post.m_pooled.resize(nc);
  for (size_t c = 0; c < nc; ++c) {
    post.nu_src[c] = post.nu_src[c] / num_sources + prior.nu0;
    post.W_inv_src[c] =
        ensure_spd(post.W_inv_src[c] / num_sources + prior.W0_inv, class_tag("source W^-1", c));
    const double pooled_count = post.beta_pooled[c] / num_sources;
    post.beta_pooled[c] = pooled_count + prior.beta0;
    post.m_pooled[c] = pooled_count == 0.0
                           ? prior.m0
                           : Vector((pooled_sum[c] / num_sources + prior.beta0 * prior.m0) /
                                    post.beta_pooled[c]);
  }
  return post;
}

std::string_view to_string(TransferMode mode) {
  switch (mode) {
    case TransferMode::kNone: return "none";
    case TransferMode::kMean: return "mean";
    case TransferMode::kVariance: return "variance";
    case TransferMode::kBoth: return "both";
  }
  return "unknown";
}

TransferMode parse_transfer_mode(std::string_view name) {
  for (auto mode : kAllTransferModes) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("unknown transfer mode '" + std::string(name) +
                    "' (expected none, mean, variance or both)");
}

namespace {

struct Seed {
  double beta;
  Vector m;
  double nu;
  Matrix W_inv;
};

TargetPosterior update_from_seeds(const PriorHyperparams& prior, std::span<const Seed> seeds,
                                  const FeatureSequence& data, TransferMode mode) {
  const auto num_classes = static_cast<int>(seeds.size());
  const auto stats = class_statistics(data, num_classes, prior.dim());
  TargetPosterior post;
  post.mode = mode;
  post.classes.resize(seeds.size());
  for (size_t c = 0; c < seeds.size(); ++c) {
    const auto& seed = seeds[c];
    auto& out = post.classes[c];
    const auto u = update_mean(seed.beta, seed.m, stats[c].count, stats[c].sum, stats[c].scatter);
    out.beta = u.beta;
    out.m = u.m;
    out.nu = stats[c].count + seed.nu;
    out.W_inv = ensure_spd(u.scatter_term + seed.W_inv, class_tag("target W^-1", c));
    out.alpha = stats[c].count + prior.alpha0;
  }
  return post;
}

}  // namespace

TargetPosterior transfer_update(const PriorHyperparams& prior, const SourcePosterior& source,
                                const FeatureSequence& calibration, const TransferConfig& cfg) {
  if (source.dim != prior.dim()) throw ConfigError("source posterior dimension differs from prior");
  const bool share_mean = cfg.mode == TransferMode::kMean || cfg.mode == TransferMode::kBoth;
  const bool share_var = cfg.mode == TransferMode::kVariance || cfg.mode == TransferMode::kBoth;
  std::vector<Seed> seeds;
  seeds.reserve(static_cast<size_t>(source.num_classes));
  for (size_t c = 0; c < static_cast<size_t>(source.num_classes); ++c) {
    seeds.push_back({share_mean ? source.beta_pooled[c] : prior.beta0,
                     share_mean ? source.m_pooled[c] : prior.m0,
                     share_var ? source.nu_src[c] : prior.nu0,
                     share_var ? source.W_inv_src[c] : prior.W0_inv});
  }
  return update_from_seeds(prior, seeds, calibration, cfg.mode);
}

TargetPosterior posterior_from_prior(const PriorHyperparams& prior, int num_classes,
                                     const FeatureSequence& data) {
  if (num_classes < 1) throw ConfigError("need at least one class");
  std::vector<Seed> seeds(static_cast<size_t>(num_classes),
                          Seed{prior.beta0, prior.m0, prior.nu0, prior.W0_inv});
  return update_from_seeds(prior, seeds, data, TransferMode::kNone);
}

StudentT::StudentT(Vector location, Matrix precision_scale, double dof)
    : location_(std::move(location)), precision_scale_(std::move(precision_scale)), dof_(dof) {
  if (!(dof_ > 0.0)) throw InvalidPosteriorError("Student-t dof must be positive");
  Eigen::LLT<Matrix> llt(precision_scale_);
  if (llt.info() != Eigen::Success) {
    throw NumericalDegeneracyError("Student-t precision scale is not positive definite");
  }
  chol_ = llt.matrixL();
  const auto d = static_cast<double>(location_.size());
  const double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = std::lgamma(0.5 * (dof_ + d)) - std::lgamma(0.5 * dof_) -
              0.5 * d * std::log(dof_ * std::numbers::pi) + 0.5 * log_det;
}

double StudentT::log_density(const Eigen::Ref<const Vector>& x) const {
  // (x-m)^T L (x-m) = |C^T (x-m)|^2 with L = C C^T.
  const Vector diff = x - location_;
  const auto d = static_cast<double>(location_.size());
  const double maha = (chol_.transpose() * diff).squaredNorm();
  if (std::isfinite(maha)) return log_norm_ - 0.5 * (dof_ + d) * std::log1p(maha / dof_);
  // Far tail: evaluate log(maha / dof) on a rescaled difference.
  const double scale = diff.cwiseAbs().maxCoeff();
  const double log_q =
      2.0 * (std::log(scale) + std::log((chol_.transpose() * (diff / scale)).norm())) -
      std::log(dof_);
  return log_norm_ - 0.5 * (dof_ + d) * (log_q + std::log1p(std::exp(-log_q)));
}

PredictiveModel build_predictive(const TargetPosterior& posterior) {
  if (posterior.classes.empty()) throw InvalidPosteriorError("posterior has no classes");
  const Eigen::Index dim = posterior.dim();
  const auto d = static_cast<double>(dim);
  PredictiveModel model;
  model.log_weights.resize(posterior.num_classes());
  double alpha_sum = 0.0;
  for (const auto& c : posterior.classes) alpha_sum += c.alpha;
  if (!(alpha_sum > 0.0)) throw InvalidPosteriorError("Dirichlet counts must have positive sum");

  for (size_t c = 0; c < posterior.classes.size(); ++c) {
    const auto& cp = posterior.classes[c];
    const double dof = cp.nu + 1.0 - d;
    if (!(dof > 0.0)) {
      throw InvalidPosteriorError(class_tag("predictive dof nu + 1 - D must be positive", c));
    }
    Eigen::LLT<Matrix> llt(cp.W_inv);
    if (llt.info() != Eigen::Success) {
      throw NumericalDegeneracyError(class_tag("posterior W^-1 is not positive definite", c));
    }
    const Matrix W = symmetrize(llt.solve(Matrix::Identity(dim, dim)));
    const double scale = dof * cp.beta / (1.0 + cp.beta);
    model.classes.emplace_back(cp.m, scale * W, dof);
    model.log_weights[static_cast<Eigen::Index>(c)] = std::log(cp.alpha / alpha_sum);
  }
  return model;
}

Prediction predict(const PredictiveModel& model, const Eigen::Ref<const Vector>& x) {
  Vector log_post(model.num_classes());
  for (int c = 0; c < model.num_classes(); ++c) {
    log_post[c] = model.log_weights[c] + model.classes[static_cast<size_t>(c)].log_density(x);
  }
  Prediction p;
  p.label = static_cast<int>(argmax_first(log_post)) + 1;
  p.probabilities = softmax_from_log(log_post);
  return p;
}

std::vector<int> predict_labels(const PredictiveModel& model, const Matrix& features) {
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    labels.push_back(predict(model, features.row(i).transpose()).label);
  }
  return labels;
}

}  // namespace vtl
