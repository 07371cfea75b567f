#pragma once

#include <stdexcept>
#include <string>

namespace vtl {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise unusable input samples.
class DataQualityError : public Error {
 public:
  using Error::Error;
};

/// Filter parameters outside the realizable range.
class InvalidDesignError : public Error {
 public:
  using Error::Error;
};

/// Prior hyperparameters violate nu0 > D-1, W0 SPD, beta0 > 0 or alpha0 > 0.
class InvalidPriorError : public Error {
 public:
  using Error::Error;
};

/// Posterior is not usable for prediction (for example eta <= 0).
class InvalidPosteriorError : public Error {
 public:
  using Error::Error;
};

/// A scale matrix lost positive definiteness even after jitter.
class NumericalDegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Manifest, CSV or snapshot could not be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vtl
