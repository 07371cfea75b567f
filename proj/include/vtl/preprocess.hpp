#pragma once

#include "vtl/linalg.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vtl {

/// One recorded trial: N samples by D channels of raw signal.
struct RawTrial {
  Matrix samples;           // N x D
  double fs = 0.0;          // Hz
  std::vector<int> labels;  // one class index in 1..C per row
  std::string subject_id;
  int trial_id = 0;
};

/// Biquad coefficients with a0 normalized to 1:
///   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct FilterCoefficients {
  double b0 = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// Time-ordered feature vectors of one trial with aligned class labels.
struct FeatureSequence {
  Matrix features;          // N x D
  std::vector<int> labels;  // 1..C, aligned with rows
  std::string subject_id;
  int trial_id = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  bool empty() const { return features.rows() == 0; }
};

struct PreprocessConfig {
  double cutoff_hz = 1.0;
  int decimation = 1;  // keep every k-th sample
};

/// Throws DataQualityError unless the trial is well formed and every label is in 1..num_classes.
void validate_trial(const RawTrial& trial, int num_classes);

RawTrial full_wave_rectify(const RawTrial& trial);

/// Second-order Butterworth low-pass, bilinear transform with the cutoff prewarped.
FilterCoefficients design_butterworth2_lowpass(double fs, double fc);

/// Causal filtering of every channel with zero initial state.
RawTrial apply_filter(const FilterCoefficients& coeffs, const RawTrial& trial);

/// Rectify, low-pass, then decimate.
FeatureSequence extract_features(const RawTrial& trial, const PreprocessConfig& cfg);

/// Reads a `t,ch1..chD,label` CSV. The column count must match `num_channels`.
RawTrial read_raw_trial_csv(const std::filesystem::path& path, double fs, int num_channels,
                            int num_classes);

void write_raw_trial_csv(const std::filesystem::path& path, const RawTrial& trial);

}  // namespace vtl
