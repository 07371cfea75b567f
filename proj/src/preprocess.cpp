#include "vtl/preprocess.hpp"

#include "csv_util.hpp"
#include "vtl/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vtl {

void validate_trial(const RawTrial& trial, int num_classes) {
  const std::string where = "trial " + trial.subject_id + "/" + std::to_string(trial.trial_id);
  if (trial.samples.rows() < 1 || trial.samples.cols() < 1) {
    throw DataQualityError(where + ": trial needs at least one sample and one channel");
  }
  if (!(trial.fs > 0.0)) throw DataQualityError(where + ": sampling frequency must be positive");
  if (static_cast<Eigen::Index>(trial.labels.size()) != trial.samples.rows()) {
    throw DataQualityError(where + ": label count does not match sample count");
  }
  for (size_t i = 0; i < trial.labels.size(); ++i) {
    if (trial.labels[i] < 1 || trial.labels[i] > num_classes) {
      throw DataQualityError(where + ": label " + std::to_string(trial.labels[i]) + " at row " +
                             std::to_string(i + 1) + " outside 1.." + std::to_string(num_classes));
    }
  }
  if (!trial.samples.allFinite()) throw DataQualityError(where + ": non-finite sample");
}

RawTrial full_wave_rectify(const RawTrial& trial) {
  if (!trial.samples.allFinite()) {
    throw DataQualityError("full_wave_rectify: non-finite sample in trial " + trial.subject_id +
                           "/" + std::to_string(trial.trial_id));
  }
  RawTrial out = trial;
  out.samples = trial.samples.cwiseAbs();
  return out;
}

FilterCoefficients design_butterworth2_lowpass(double fs, double fc) {
  if (!(fs > 0.0) || !(fc > 0.0) || !(fc < fs / 2.0)) {
    throw InvalidDesignError("Butterworth design needs 0 < fc < fs/2 (fs=" + std::to_string(fs) +
                             ", fc=" + std::to_string(fc) + ")");
  }
  // Prewarped analog cutoff, normalized by 2*fs.
  const double k = std::tan(std::numbers::pi * fc / fs);
  const double k2 = k * k;
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
  FilterCoefficients c;
  c.b0 = k2 * norm;
  c.b1 = 2.0 * c.b0;
  c.b2 = c.b0;
  c.a1 = 2.0 * (k2 - 1.0) * norm;
  c.a2 = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
  return c;
}

RawTrial apply_filter(const FilterCoefficients& coeffs, const RawTrial& trial) {
  RawTrial out = trial;
  const Eigen::Index n = trial.samples.rows();
  for (Eigen::Index ch = 0; ch < trial.samples.cols(); ++ch) {
    // Transposed direct form II.
    double z1 = 0.0;
    double z2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = trial.samples(i, ch);
      const double y = coeffs.b0 * x + z1;
      z1 = coeffs.b1 * x - coeffs.a1 * y + z2;
      z2 = coeffs.b2 * x - coeffs.a2 * y;
      out.samples(i, ch) = y;
    }
  }
  if (!out.samples.allFinite()) {
    throw DataQualityError("apply_filter: non-finite output in trial " + trial.subject_id + "/" +
                           std::to_string(trial.trial_id));
  }
  return out;
}

FeatureSequence extract_features(const RawTrial& trial, const PreprocessConfig& cfg) {
  if (cfg.decimation < 1) throw ConfigError("decimation factor must be >= 1");
  const auto coeffs = design_butterworth2_lowpass(trial.fs, cfg.cutoff_hz);
  const RawTrial smoothed = apply_filter(coeffs, full_wave_rectify(trial));

  const Eigen::Index n = smoothed.samples.rows();
  const Eigen::Index k = cfg.decimation;
  const Eigen::Index kept = (n + k - 1) / k;
  FeatureSequence seq;
  seq.subject_id = trial.subject_id;
  seq.trial_id = trial.trial_id;
  seq.features.resize(kept, smoothed.samples.cols());
  seq.labels.reserve(static_cast<size_t>(kept));
  for (Eigen::Index i = 0, row = 0; i < n; i += k, ++row) {
    seq.features.row(row) = smoothed.samples.row(i);
    seq.labels.push_back(trial.labels[static_cast<size_t>(i)]);
  }
  return seq;
}

RawTrial read_raw_trial_csv(const std::filesystem::path& path, double fs, int num_channels,
                            int num_classes) {
  auto in = detail::open_for_read(path);
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line)) throw LoadError(file + ": empty file");
  const auto header = detail::split_csv_line(line);
  const auto expected_cols = static_cast<size_t>(num_channels) + 2;
  if (header.size() != expected_cols) {
    throw LoadError(file + ": dimension mismatch, header has " +
                    std::to_string(static_cast<long>(header.size()) - 2) + " channels, expected " +
                    std::to_string(num_channels));
  }
  if (header.front() != "t" || header.back() != "label") {
    throw LoadError(file + ": header must be t,ch1..chD,label");
  }

  std::vector<double> values;
  std::vector<int> labels;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != expected_cols) {
      throw LoadError(file + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(expected_cols));
    }
    for (int ch = 0; ch < num_channels; ++ch) {
      double v = 0.0;
      if (!detail::parse_number(fields[static_cast<size_t>(ch) + 1], v)) {
        throw LoadError(file + ": row " + std::to_string(row) + ": bad number in column ch" +
                        std::to_string(ch + 1));
      }
      values.push_back(v);
    }
    int label = 0;
    if (!detail::parse_number(fields.back(), label) || label < 1 || label > num_classes) {
      throw LoadError(file + ": row " + std::to_string(row) + ": unknown label '" +
                      std::string(fields.back()) + "'");
    }
    labels.push_back(label);
  }
  if (labels.empty()) throw LoadError(file + ": no samples");

  RawTrial trial;
  trial.fs = fs;
  trial.labels = std::move(labels);
  trial.samples = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(trial.labels.size()), num_channels);
  return trial;
}

void write_raw_trial_csv(const std::filesystem::path& path, const RawTrial& trial) {
  auto out = detail::open_for_write(path);
  out << "t";
  for (Eigen::Index ch = 0; ch < trial.samples.cols(); ++ch) out << ",ch" << ch + 1;
  out << ",label\n";
  for (Eigen::Index i = 0; i < trial.samples.rows(); ++i) {
    out << detail::format_exact(static_cast<double>(i) / trial.fs);
    for (Eigen::Index ch = 0; ch < trial.samples.cols(); ++ch) {
      out << ',' << detail::format_exact(trial.samples(i, ch));
    }
    out << ',' << trial.labels[static_cast<size_t>(i)] << '\n';
  }
}

}  // namespace vtl
