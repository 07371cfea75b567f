#include "vtl/experiments.hpp"

#include "csv_util.hpp"
#include "vtl/errors.hpp"
#include "vtl/serialization.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace vtl {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kProposed: return "proposed";
    case Method::kAdaptiveLda: return "adaptive_lda";
    case Method::kAdaptiveQda: return "adaptive_qda";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::kProposed, Method::kAdaptiveLda, Method::kAdaptiveQda}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected proposed, adaptive_lda or adaptive_qda)");
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    const json& dataset = j.at("dataset");
    if (dataset.contains("manifest")) {
      fs::path p = dataset.at("manifest").get<std::string>();
      cfg.manifest = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    } else if (dataset.contains("synthetic")) {
      cfg.synthetic = synthetic_config_from_json(dataset.at("synthetic"));
      cfg.synthetic->seed = cfg.seed;
    } else {
      throw ConfigError("dataset needs either \"manifest\" or \"synthetic\"");
    }
    if (j.contains("preprocess")) {
      const json& p = j.at("preprocess");
      cfg.preprocess.cutoff_hz = p.value("cutoff_hz", cfg.preprocess.cutoff_hz);
      cfg.preprocess.decimation = p.value("decimation", cfg.preprocess.decimation);
    }
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : j.at("methods")) cfg.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("modes")) {
      cfg.modes.clear();
      for (const auto& m : j.at("modes")) cfg.modes.push_back(parse_transfer_mode(m.get<std::string>()));
    }
    if (j.contains("calibration_fractions")) {
      cfg.calibration_fractions = j.at("calibration_fractions").get<std::vector<double>>();
    }
    if (j.contains("r_values")) cfg.r_values = j.at("r_values").get<std::vector<double>>();
    if (j.contains("prior")) {
      const json& p = j.at("prior");
      if (p.contains("m0")) cfg.prior.m0 = vector_from_json(p.at("m0"));
      if (p.contains("beta0")) cfg.prior.beta0 = p.at("beta0").get<double>();
      if (p.contains("nu0")) cfg.prior.nu0 = p.at("nu0").get<double>();
      if (p.contains("W0")) cfg.prior.W0 = matrix_from_json(p.at("W0"));
      if (p.contains("alpha0")) cfg.prior.alpha0 = p.at("alpha0").get<double>();
    }
    cfg.calibration_trial = j.value("calibration_trial", cfg.calibration_trial);
    cfg.uniform_class_priors = j.value("uniform_class_priors", cfg.uniform_class_priors);
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (cfg.methods.empty()) throw ConfigError("experiment config needs at least one method");
  if (cfg.modes.empty()) throw ConfigError("experiment config needs at least one transfer mode");
  if (cfg.calibration_fractions.empty()) throw ConfigError("need at least one calibration fraction");
  for (double f : cfg.calibration_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("calibration fractions must lie in (0, 1]");
  }
  for (double r : cfg.r_values) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("r values must be >= 0");
  }
  if (cfg.preprocess.decimation < 1) throw ConfigError("decimation must be >= 1");
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.manifest) j["dataset"] = {{"manifest", cfg.manifest->generic_string()}};
  if (cfg.synthetic) j["dataset"] = {{"synthetic", to_json(*cfg.synthetic)}};
  j["preprocess"] = {{"cutoff_hz", cfg.preprocess.cutoff_hz},
                     {"decimation", cfg.preprocess.decimation}};
  j["methods"] = json::array();
  for (auto m : cfg.methods) j["methods"].push_back(std::string(to_string(m)));
  j["modes"] = json::array();
  for (auto m : cfg.modes) j["modes"].push_back(std::string(to_string(m)));
  j["calibration_fractions"] = cfg.calibration_fractions;
  j["r_values"] = cfg.r_values;
  json prior = json::object();
  if (cfg.prior.m0) prior["m0"] = vector_to_json(*cfg.prior.m0);
  if (cfg.prior.beta0) prior["beta0"] = *cfg.prior.beta0;
  if (cfg.prior.nu0) prior["nu0"] = *cfg.prior.nu0;
  if (cfg.prior.W0) prior["W0"] = matrix_to_json(*cfg.prior.W0);
  if (cfg.prior.alpha0) prior["alpha0"] = *cfg.prior.alpha0;
  j["prior"] = std::move(prior);
  j["calibration_trial"] = cfg.calibration_trial;
  j["uniform_class_priors"] = cfg.uniform_class_priors;
  j["out_dir"] = cfg.out_dir.generic_string();
  j["seed"] = cfg.seed;
  return j;
}

void apply_override(json& doc, std::string_view assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value, got '" + std::string(assignment) +
                      "'");
  }
  std::string pointer;
  std::string_view key = assignment.substr(0, eq);
  while (!key.empty()) {
    const size_t dot = key.find('.');
    pointer += '/';
    pointer += key.substr(0, dot);
    key = dot == std::string_view::npos ? std::string_view{} : key.substr(dot + 1);
  }
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  doc[json::json_pointer(pointer)] = std::move(value);
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  if (cfg.manifest) return load_dataset(*cfg.manifest, cfg.preprocess);
  if (cfg.synthetic) return generate_synthetic(*cfg.synthetic);
  throw ConfigError("experiment config names no dataset");
}

// ---------------------------------------------------------------------------
// Metrics

double evaluate_accuracy(const LabelPredictor& predictor, std::span<const FeatureSequence> test) {
  Eigen::Index correct = 0;
  Eigen::Index total = 0;
  for (const auto& seq : test) {
    const auto predicted = predictor(seq.features);
    for (size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == seq.labels[i];
    total += seq.size();
  }
  if (total == 0) throw ConfigError("evaluate_accuracy: empty test set");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double accuracy_from_predictions(std::span<const PredictionRecord> predictions) {
  if (predictions.empty()) throw ConfigError("accuracy_from_predictions: empty log");
  Eigen::Index correct = 0;
  for (const auto& p : predictions) correct += p.truth == p.predicted;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

double ReportRow::ci95_half_width() const {
  if (subjects.empty()) return 0.0;
  return 1.96 * std_accuracy / std::sqrt(static_cast<double>(subjects.size()));
}

// ---------------------------------------------------------------------------
// Runners

namespace {

constexpr double kNoRatio = std::numeric_limits<double>::quiet_NaN();

// Predictions of one model over the target's test trials.
SubjectResult score_subject(const std::string& subject_id, const LabelPredictor& predictor,
                            std::span<const FeatureSequence> test, double fraction, double r) {
  SubjectResult res;
  res.subject_id = subject_id;
  for (const auto& seq : test) {
    const auto predicted = predictor(seq.features);
    for (size_t i = 0; i < predicted.size(); ++i) {
      res.predictions.push_back({fraction, r, seq.trial_id, static_cast<Eigen::Index>(i),
                                 seq.labels[i], predicted[i]});
    }
  }
  res.accuracy = accuracy_from_predictions(res.predictions);
  return res;
}

void finalize_row(ReportRow& row) {
  std::vector<double> acc;
  for (const auto& s : row.subjects) acc.push_back(s.accuracy);
  std::tie(row.mean_accuracy, row.std_accuracy) = mean_and_std(acc);
}

struct TargetContext {
  RoleSplit split;  // calibration already truncated
  double fraction;
};

TargetContext make_context(const ExperimentConfig& cfg, const Dataset& ds,
                           const std::string& target, double fraction) {
  TargetContext ctx{split_roles(ds, target, cfg.calibration_trial), fraction};
  ctx.split.calibration = truncate_calibration(ctx.split.calibration, fraction);
  return ctx;
}

std::vector<Eigen::Index> source_sizes(const RoleSplit& split) {
  std::vector<Eigen::Index> n;
  for (const auto& s : split.source) n.push_back(s.size());
  return n;
}

SourcePosterior pretrain_for(const PriorHyperparams& prior, const Dataset& ds,
                             const RoleSplit& split, const WeightPolicy& policy) {
  const auto n_src = source_sizes(split);
  const auto weights = compute_weights(policy, split.calibration.size(), n_src);
  return pretrain_source(prior, ds.num_classes, split.source, weights);
}

LabelPredictor gcm_predictor(const PredictiveModel& model) {
  return [model](const Matrix& x) { return predict_labels(model, x); };
}

std::string ratio_label(double r) { return detail::format_exact(r); }

template <typename Fn>
auto with_context(const std::string& what, const std::string& subject, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(what + " (target " + subject + "): " + e.what());
  }
}

}  // namespace

ReportTable run_ablation(const ExperimentConfig& cfg, const Dataset& ds) {
  const PriorHyperparams prior = init_prior(ds.dim, cfg.prior);
  ReportTable table{"ablation", {}};
  for (double fraction : cfg.calibration_fractions) {
    std::vector<ReportRow> rows;
    for (auto mode : cfg.modes) {
      rows.push_back({ds.name, std::string(to_string(mode)), fraction, 1.0, 0, 0, {}});
    }
    for (const auto& subject : ds.subjects) {
      with_context("ablation", subject.id, [&] {
        const auto ctx = make_context(cfg, ds, subject.id, fraction);
        const auto source = pretrain_for(prior, ds, ctx.split, WeightPolicy::ratio_match());
        for (size_t m = 0; m < cfg.modes.size(); ++m) {
          const TransferConfig tc{cfg.modes[m], WeightPolicy::ratio_match()};
          const auto model =
              build_predictive(transfer_update(prior, source, ctx.split.calibration, tc));
          auto res = score_subject(subject.id, gcm_predictor(model), ctx.split.test, fraction, 1.0);
          res.hyperparameters = "r=1";
          rows[m].subjects.push_back(std::move(res));
        }
        return 0;
      });
    }
    for (auto& row : rows) {
      finalize_row(row);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

ReportTable run_comparison(const ExperimentConfig& cfg, const Dataset& ds) {
  const PriorHyperparams prior = init_prior(ds.dim, cfg.prior);
  ReportTable table{"comparison", {}};
  for (double fraction : cfg.calibration_fractions) {
    std::vector<ReportRow> rows;
    for (auto method : cfg.methods) {
      rows.push_back({ds.name, std::string(to_string(method)), fraction, std::nullopt, 0, 0, {}});
    }
    for (const auto& subject : ds.subjects) {
      with_context("comparison", subject.id, [&] {
        const auto ctx = make_context(cfg, ds, subject.id, fraction);
        std::optional<GaussianStats> src_stats;
        for (size_t m = 0; m < cfg.methods.size(); ++m) {
          SubjectResult res;
          if (cfg.methods[m] == Method::kProposed) {
            const auto source = pretrain_for(prior, ds, ctx.split, WeightPolicy::ratio_match());
            const TransferConfig tc{TransferMode::kVariance, WeightPolicy::ratio_match()};
            const auto model =
                build_predictive(transfer_update(prior, source, ctx.split.calibration, tc));
            res = score_subject(subject.id, gcm_predictor(model), ctx.split.test, fraction, 1.0);
            res.hyperparameters = "r=1";
          } else {
            const auto kind = cfg.methods[m] == Method::kAdaptiveLda ? DiscriminantKind::kLda
                                                                      : DiscriminantKind::kQda;
            if (!src_stats) src_stats = fit_gaussian_stats(ctx.split.source, ds.num_classes);
            const auto cal_stats = fit_gaussian_stats(ctx.split.calibration, ds.num_classes);
            const auto gs =
                grid_search_cv(ctx.split.calibration, *src_stats, kind, cfg.uniform_class_priors);
            const auto model = adaptive_blend(*src_stats, cal_stats, gs.tau, gs.lambda, kind,
                                              cfg.uniform_class_priors);
            res = score_subject(
                subject.id,
                [&model](const Matrix& x) { return discriminant_predict_labels(model, x); },
                ctx.split.test, fraction, kNoRatio);
            res.hyperparameters = fmt::format("tau={} lambda={}", ratio_label(gs.tau),
                                              ratio_label(gs.lambda));
            if (gs.status == GridSearchStatus::kFallbackTooSmall) res.hyperparameters += " fallback";
          }
          rows[m].subjects.push_back(std::move(res));
        }
        return 0;
      });
    }
    for (auto& row : rows) {
      finalize_row(row);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

ReportTable run_r_sweep(const ExperimentConfig& cfg, const Dataset& ds) {
  const PriorHyperparams prior = init_prior(ds.dim, cfg.prior);
  ReportTable table{"r_sweep", {}};
  for (double fraction : cfg.calibration_fractions) {
    std::vector<ReportRow> rows;
    for (double r : cfg.r_values) {
      rows.push_back({ds.name, "variance", fraction, r, 0, 0, {}});
    }
    for (const auto& subject : ds.subjects) {
      with_context("r sweep", subject.id, [&] {
        const auto ctx = make_context(cfg, ds, subject.id, fraction);
        for (size_t k = 0; k < cfg.r_values.size(); ++k) {
          const double r = cfg.r_values[k];
          const auto policy = WeightPolicy::explicit_ratio(r);
          const auto source = pretrain_for(prior, ds, ctx.split, policy);
          const TransferConfig tc{TransferMode::kVariance, policy};
          const auto model =
              build_predictive(transfer_update(prior, source, ctx.split.calibration, tc));
          auto res = score_subject(subject.id, gcm_predictor(model), ctx.split.test, fraction, r);
          res.hyperparameters = "r=" + ratio_label(r);
          rows[k].subjects.push_back(std::move(res));
        }
        return 0;
      });
    }
    for (auto& row : rows) {
      finalize_row(row);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string fixed6(double v) { return fmt::format("{:.6f}", v); }

std::string subject_accuracies(const ReportRow& row) {
  std::string out;
  for (const auto& s : row.subjects) {
    if (!out.empty()) out += ';';
    out += s.subject_id + "=" + fixed6(s.accuracy);
  }
  return out;
}

std::string subject_hyperparameters(const ReportRow& row) {
  std::string out;
  for (const auto& s : row.subjects) {
    if (!out.empty()) out += ';';
    out += s.subject_id + "(" + s.hyperparameters + ")";
  }
  return out;
}

std::string log_name(const ReportTable& table, const ReportRow& row) {
  if (table.kind == "r_sweep") return row.method + "_r" + ratio_label(row.r.value_or(0.0));
  return row.method;
}

}  // namespace

std::string report_csv(const ReportTable& table) {
  std::ostringstream out;
  if (table.kind == "r_sweep") {
    out << "dataset,r,calibration_fraction,mean_accuracy,std_across_subjects,ci95_low,ci95_high,"
           "n_subjects,subject_accuracies\n";
    for (const auto& row : table.rows) {
      const double h = row.ci95_half_width();
      out << row.dataset << ',' << ratio_label(row.r.value_or(0.0)) << ','
          << ratio_label(row.calibration_fraction) << ',' << fixed6(row.mean_accuracy) << ','
          << fixed6(row.std_accuracy) << ',' << fixed6(row.mean_accuracy - h) << ','
          << fixed6(row.mean_accuracy + h) << ',' << row.subjects.size() << ','
          << subject_accuracies(row) << '\n';
    }
    return out.str();
  }
  out << "dataset," << (table.kind == "ablation" ? "transfer" : "method")
      << ",calibration_fraction,mean_accuracy,std_across_subjects,n_subjects,subject_accuracies,"
         "selected_hyperparameters\n";
  for (const auto& row : table.rows) {
    out << row.dataset << ',' << row.method << ',' << ratio_label(row.calibration_fraction) << ','
        << fixed6(row.mean_accuracy) << ',' << fixed6(row.std_accuracy) << ','
        << row.subjects.size() << ',' << subject_accuracies(row) << ','
        << subject_hyperparameters(row) << '\n';
  }
  return out.str();
}

void write_report_csv(const ReportTable& table, const fs::path& path) {
  auto out = detail::open_for_write(path);
  out << report_csv(table);
}

void write_prediction_logs(const ReportTable& table, const fs::path& out_dir) {
  // Rows that share a file (different fractions) are appended in table order.
  std::map<fs::path, std::vector<const PredictionRecord*>> files;
  for (const auto& row : table.rows) {
    const std::string name = log_name(table, row) + ".csv";
    for (const auto& s : row.subjects) {
      auto& bucket = files[out_dir / "predictions" / s.subject_id / name];
      for (const auto& p : s.predictions) bucket.push_back(&p);
    }
  }
  for (const auto& [path, records] : files) {
    auto out = detail::open_for_write(path);
    out << "fraction,r,trial,row,true,predicted\n";
    for (const auto* p : records) {
      out << ratio_label(p->fraction) << ',' << (std::isnan(p->r) ? "" : ratio_label(p->r)) << ','
          << p->trial_id << ',' << p->row << ',' << p->truth << ',' << p->predicted << '\n';
    }
  }
}

std::vector<PredictionRecord> read_prediction_log(const fs::path& path) {
  auto in = detail::open_for_read(path);
  std::string line;
  std::getline(in, line);
  std::vector<PredictionRecord> out;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    PredictionRecord p;
    bool ok = f.size() == 6 && detail::parse_number(f[0], p.fraction) &&
              detail::parse_number(f[2], p.trial_id) && detail::parse_number(f[3], p.row) &&
              detail::parse_number(f[4], p.truth) && detail::parse_number(f[5], p.predicted);
    if (ok) {
      if (f[1].empty()) {
        p.r = kNoRatio;
      } else {
        ok = detail::parse_number(f[1], p.r);
      }
    }
    if (!ok) throw LoadError(path.string() + ": malformed row " + std::to_string(row));
    out.push_back(p);
  }
  return out;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

void write_run_meta(const ExperimentConfig& cfg, std::string_view command,
                    const std::vector<std::string>& outputs, const fs::path& path) {
  const json config = to_json(cfg);
  const json meta = {{"command", std::string(command)},
                     {"config", config},
                     {"config_hash", fnv1a_hex(config.dump())},
                     {"seed", cfg.seed},
                     {"version", std::string(kVersion)},
                     {"eigen_version", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION,
                                                   EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                     {"std_definition", "sample standard deviation across target subjects"},
                     {"ci95_definition", "mean +/- 1.96 * std / sqrt(n_subjects)"},
                     {"outputs", outputs}};
  auto out = detail::open_for_write(path);
  out << meta.dump(2) << '\n';
}

}  // namespace vtl
