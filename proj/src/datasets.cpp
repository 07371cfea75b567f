#include "vtl/datasets.hpp"

#include "csv_util.hpp"
#include "vtl/errors.hpp"
#include "vtl/serialization.hpp"

#include <cmath>
#include <random>
#include <set>

namespace vtl {

using nlohmann::json;
namespace fs = std::filesystem;

const SubjectData& Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown subject '" + id + "'");
}

void validate_dataset(const Dataset& ds) {
  if (ds.num_classes < 1 || ds.dim < 1) throw DataQualityError("dataset needs C >= 1 and D >= 1");
  std::set<std::string> ids;
  for (const auto& s : ds.subjects) {
    if (!ids.insert(s.id).second) throw DataQualityError("duplicate subject id '" + s.id + "'");
    for (const auto& t : s.trials) {
      const std::string where = s.id + "/" + std::to_string(t.trial_id);
      if (t.dim() != ds.dim) {
        throw DataQualityError(where + ": dimension " + std::to_string(t.dim()) + " != D=" +
                               std::to_string(ds.dim));
      }
      if (static_cast<Eigen::Index>(t.labels.size()) != t.size()) {
        throw DataQualityError(where + ": labels not aligned with rows");
      }
      if (!t.features.allFinite()) throw DataQualityError(where + ": non-finite feature");
      for (int label : t.labels) {
        if (label < 1 || label > ds.num_classes) {
          throw DataQualityError(where + ": label " + std::to_string(label) + " out of range");
        }
      }
    }
  }
}

FeatureSequence read_feature_csv(const fs::path& path, Eigen::Index dim, int num_classes) {
  auto in = detail::open_for_read(path);
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line)) throw LoadError(file + ": empty file");
  const auto cols = static_cast<size_t>(dim) + 1;
  if (detail::split_csv_line(line).size() != cols) {
    throw LoadError(file + ": dimension mismatch, expected " + std::to_string(dim) + " channels");
  }
  std::vector<double> values;
  FeatureSequence seq;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != cols) {
      throw LoadError(file + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                      " fields, expected " + std::to_string(cols));
    }
    for (size_t k = 0; k + 1 < cols; ++k) {
      double v = 0.0;
      if (!detail::parse_number(f[k], v)) {
        throw LoadError(file + ": row " + std::to_string(row) + ": bad number");
      }
      values.push_back(v);
    }
    int label = 0;
    if (!detail::parse_number(f.back(), label) || label < 1 || label > num_classes) {
      throw LoadError(file + ": row " + std::to_string(row) + ": unknown label '" +
                      std::string(f.back()) + "'");
    }
    seq.labels.push_back(label);
  }
  seq.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(seq.labels.size()), dim);
  return seq;
}

void write_feature_csv(const fs::path& path, const FeatureSequence& seq) {
  auto out = detail::open_for_write(path);
  for (Eigen::Index ch = 0; ch < seq.dim(); ++ch) out << "ch" << ch + 1 << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < seq.size(); ++i) {
    for (Eigen::Index ch = 0; ch < seq.dim(); ++ch) {
      out << detail::format_exact(seq.features(i, ch)) << ',';
    }
    out << seq.labels[static_cast<size_t>(i)] << '\n';
  }
}

Dataset load_dataset(const fs::path& manifest, const PreprocessConfig& cfg) {
  auto in = detail::open_for_read(manifest);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError(manifest.string() + ": " + e.what());
  }
  Dataset ds;
  std::string kind;
  std::vector<std::pair<std::string, std::vector<std::string>>> entries;
  try {
    ds.name = j.value("name", manifest.stem().string());
    ds.num_classes = j.at("C").get<int>();
    ds.dim = j.at("D").get<Eigen::Index>();
    ds.fs = j.at("fs").get<double>();
    kind = j.value("kind", "raw");
    for (const auto& s : j.at("subjects")) {
      entries.emplace_back(s.at("id").get<std::string>(),
                           s.at("trials").get<std::vector<std::string>>());
    }
  } catch (const json::exception& e) {
    throw LoadError(manifest.string() + ": malformed manifest: " + e.what());
  }
  if (kind != "raw" && kind != "features") {
    throw LoadError(manifest.string() + ": unknown manifest kind '" + kind + "'");
  }
  if (ds.num_classes < 1 || ds.dim < 1 || !(ds.fs > 0.0)) {
    throw LoadError(manifest.string() + ": C, D and fs must be positive");
  }
  const fs::path base = manifest.parent_path();
  for (const auto& [id, trials] : entries) {
    auto& subject = ds.subjects.emplace_back();
    subject.id = id;
    int trial_id = 0;
    for (const auto& rel : trials) {
      ++trial_id;
      const fs::path file = base / rel;
      if (!fs::exists(file)) throw LoadError(file.string() + ": missing trial file");
      FeatureSequence seq;
      if (kind == "raw") {
        RawTrial raw =
            read_raw_trial_csv(file, ds.fs, static_cast<int>(ds.dim), ds.num_classes);
        raw.subject_id = id;
        raw.trial_id = trial_id;
        try {
          seq = extract_features(raw, cfg);
        } catch (const Error& e) {
          throw LoadError(file.string() + ": " + e.what());
        }
      } else {
        seq = read_feature_csv(file, ds.dim, ds.num_classes);
      }
      seq.subject_id = id;
      seq.trial_id = trial_id;
      subject.trials.push_back(std::move(seq));
    }
  }
  validate_dataset(ds);
  return ds;
}

fs::path save_feature_dataset(const Dataset& ds, const fs::path& dir) {
  json subjects = json::array();
  for (const auto& s : ds.subjects) {
    json trials = json::array();
    for (const auto& t : s.trials) {
      const std::string rel = "features/" + s.id + "/trial" + std::to_string(t.trial_id) + ".csv";
      write_feature_csv(dir / rel, t);
      trials.push_back(rel);
    }
    subjects.push_back({{"id", s.id}, {"trials", std::move(trials)}});
  }
  json manifest = {{"name", ds.name},     {"kind", "features"}, {"C", ds.num_classes},
                   {"D", ds.dim},         {"fs", ds.fs},        {"subjects", std::move(subjects)}};
  const fs::path path = dir / "manifest.json";
  auto out = detail::open_for_write(path);
  out << manifest.dump(2) << '\n';
  return path;
}

FeatureSequence concatenate(std::span<const FeatureSequence> parts, const std::string& subject_id) {
  Eigen::Index rows = 0;
  Eigen::Index dim = parts.empty() ? 0 : parts.front().dim();
  for (const auto& p : parts) {
    if (p.dim() != dim) throw DataQualityError("concatenate: dimension mismatch");
    rows += p.size();
  }
  FeatureSequence out;
  out.subject_id = subject_id;
  out.features.resize(rows, dim);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.features.middleRows(at, p.size()) = p.features;
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    at += p.size();
  }
  return out;
}

RoleSplit split_roles(const Dataset& ds, const std::string& target_id, int calibration_trial) {
  const SubjectData& target = ds.subject(target_id);
  if (ds.subjects.size() < 2) throw ConfigError("leave-one-subject-out needs at least two subjects");
  if (target.trials.size() < 2) {
    throw ConfigError("target '" + target_id + "' needs at least two trials (calibration + test)");
  }
  if (calibration_trial < 1 || calibration_trial > static_cast<int>(target.trials.size())) {
    throw ConfigError("calibration trial " + std::to_string(calibration_trial) +
                      " does not exist for target '" + target_id + "'");
  }
  RoleSplit split;
  split.target_subject_id = target_id;
  for (const auto& s : ds.subjects) {
    if (s.id == target_id) continue;
    split.source.push_back(concatenate(s.trials, s.id));
  }
  for (size_t k = 0; k < target.trials.size(); ++k) {
    if (static_cast<int>(k) + 1 == calibration_trial) {
      split.calibration = target.trials[k];
    } else {
      split.test.push_back(target.trials[k]);
    }
  }
  return split;
}

FeatureSequence truncate_calibration(const FeatureSequence& cal, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("calibration fraction must lie in (0, 1]");
  }
  // The small guard absorbs representation error such as 0.29 * 100 = 28.999...
  const auto keep = static_cast<Eigen::Index>(
      std::floor(fraction * static_cast<double>(cal.size()) + 1e-9));
  if (keep < 1) {
    throw ConfigError("truncating " + std::to_string(cal.size()) + " calibration rows to fraction " +
                      std::to_string(fraction) + " leaves no data");
  }
  FeatureSequence out;
  out.subject_id = cal.subject_id;
  out.trial_id = cal.trial_id;
  out.features = cal.features.topRows(keep);
  out.labels.assign(cal.labels.begin(), cal.labels.begin() + keep);
  return out;
}

namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x5eedu};
  return std::mt19937_64(seq);
}

Vector standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

void check_config(const SyntheticConfig& cfg) {
  if (cfg.num_subjects < 1 || cfg.num_classes < 1 || cfg.dim < 1 || cfg.samples_per_class < 1 ||
      cfg.trials_per_subject < 1) {
    throw ConfigError("synthetic config counts must all be >= 1");
  }
  if (!(cfg.subject_dispersion >= 0.0) || !(cfg.class_separation >= 0.0) ||
      !(cfg.within_class_std > 0.0) || !(cfg.gain_dispersion >= 0.0)) {
    throw ConfigError("synthetic config scales must be nonnegative (within_class_std positive)");
  }
  if (!cfg.class_covariances.empty()) {
    if (static_cast<int>(cfg.class_covariances.size()) != cfg.num_classes) {
      throw ConfigError("need one covariance per class");
    }
    for (const auto& cov : cfg.class_covariances) {
      if (cov.rows() != cfg.dim || cov.cols() != cfg.dim ||
          !cov.isApprox(cov.transpose(), 1e-12) || !is_spd(cov)) {
        throw ConfigError("synthetic class covariances must be D x D symmetric positive definite");
      }
    }
  }
}

}  // namespace

SyntheticTruth synthetic_truth(const SyntheticConfig& cfg) {
  check_config(cfg);
  auto rng = make_stream(cfg.seed, 0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SyntheticTruth truth;
  for (int c = 0; c < cfg.num_classes; ++c) {
    truth.prototypes.push_back(cfg.class_separation * standard_normal(rng, cfg.dim));
  }
  if (!cfg.class_covariances.empty()) {
    truth.covariances = cfg.class_covariances;
    return truth;
  }
  // Random orientation, eigenvalues spread over a factor of 16.
  const double var = cfg.within_class_std * cfg.within_class_std;
  for (int c = 0; c < cfg.num_classes; ++c) {
    Matrix g(cfg.dim, cfg.dim);
    for (Eigen::Index k = 0; k < cfg.dim; ++k) g.col(k) = standard_normal(rng, cfg.dim);
    const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
    Vector eig(cfg.dim);
    for (Eigen::Index k = 0; k < cfg.dim; ++k) eig[k] = var * std::pow(4.0, unit(rng));
    truth.covariances.push_back(symmetrize(q * eig.asDiagonal() * q.transpose()));
  }
  return truth;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  const SyntheticTruth truth = synthetic_truth(cfg);
  std::vector<Matrix> chol;
  for (const auto& cov : truth.covariances) chol.push_back(cov.llt().matrixL());

  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = cfg.num_classes;
  ds.dim = cfg.dim;
  ds.fs = 1.0;
  for (int s = 0; s < cfg.num_subjects; ++s) {
    auto rng = make_stream(cfg.seed, static_cast<std::uint64_t>(s) + 1);
    SubjectData subject;
    subject.id = "S" + std::to_string(s + 1);
    std::vector<Vector> means;
    for (int c = 0; c < cfg.num_classes; ++c) {
      means.push_back(truth.prototypes[static_cast<size_t>(c)] +
                      cfg.subject_dispersion * standard_normal(rng, cfg.dim));
    }
    const Vector gain = (cfg.gain_dispersion * standard_normal(rng, cfg.dim)).array().exp();
    for (int t = 0; t < cfg.trials_per_subject; ++t) {
      FeatureSequence seq;
      seq.subject_id = subject.id;
      seq.trial_id = t + 1;
      seq.features.resize(static_cast<Eigen::Index>(cfg.num_classes) * cfg.samples_per_class,
                          cfg.dim);
      Eigen::Index row = 0;
      for (int c = 0; c < cfg.num_classes; ++c) {
        for (int n = 0; n < cfg.samples_per_class; ++n, ++row) {
          const Vector noise = chol[static_cast<size_t>(c)] * standard_normal(rng, cfg.dim);
          seq.features.row(row) = (means[static_cast<size_t>(c)] + gain.cwiseProduct(noise)).transpose();
          seq.labels.push_back(c + 1);
        }
      }
      subject.trials.push_back(std::move(seq));
    }
    ds.subjects.push_back(std::move(subject));
  }
  return ds;
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig cfg;
  try {
    cfg.num_subjects = j.value("num_subjects", cfg.num_subjects);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.samples_per_class = j.value("samples_per_class", cfg.samples_per_class);
    cfg.trials_per_subject = j.value("trials_per_subject", cfg.trials_per_subject);
    cfg.subject_dispersion = j.value("subject_dispersion", cfg.subject_dispersion);
    cfg.class_separation = j.value("class_separation", cfg.class_separation);
    cfg.within_class_std = j.value("within_class_std", cfg.within_class_std);
    cfg.gain_dispersion = j.value("gain_dispersion", cfg.gain_dispersion);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("class_covariances")) {
      for (const auto& m : j.at("class_covariances")) {
        Matrix cov = matrix_from_json(m);
        cfg.class_covariances.push_back(std::move(cov));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  check_config(cfg);
  return cfg;
}

json to_json(const SyntheticConfig& cfg) {
  json j = {{"num_subjects", cfg.num_subjects},
            {"num_classes", cfg.num_classes},
            {"dim", cfg.dim},
            {"samples_per_class", cfg.samples_per_class},
            {"trials_per_subject", cfg.trials_per_subject},
            {"subject_dispersion", cfg.subject_dispersion},
            {"class_separation", cfg.class_separation},
            {"within_class_std", cfg.within_class_std},
            {"gain_dispersion", cfg.gain_dispersion},
            {"seed", cfg.seed}};
  if (!cfg.class_covariances.empty()) {
    json covs = json::array();
    for (const auto& m : cfg.class_covariances) {
      covs.push_back(matrix_to_json(m));
    }
    j["class_covariances"] = std::move(covs);
  }
  return j;
}

}  // namespace vtl
