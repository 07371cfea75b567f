#include "vtl/linalg.hpp"

#include "vtl/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace vtl {

Matrix symmetrize(const Matrix& a) { return (a + a.transpose()) * 0.5; }

bool is_spd(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0 || !a.allFinite()) return false;
  Eigen::LLT<Matrix> llt(a);
  return llt.info() == Eigen::Success;
}

Matrix ensure_spd(const Matrix& a, std::string_view what) {
  Matrix sym = symmetrize(a);
  if (is_spd(sym)) return sym;
  if (!sym.allFinite()) {
    throw NumericalDegeneracyError(std::string(what) + ": matrix has non-finite entries");
  }
  const auto d = static_cast<double>(sym.rows());
  const double scale = sym.trace() / d;
  if (scale > 0.0) {
    sym.diagonal().array() += kSpdJitter * scale;
    if (is_spd(sym)) return sym;
  }
  throw NumericalDegeneracyError(std::string(what) + ": matrix is not positive definite");
}

double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

Vector softmax_from_log(const Vector& log_weights) {
  const double lse = log_sum_exp({log_weights.data(), static_cast<size_t>(log_weights.size())});
  return (log_weights.array() - lse).exp().matrix();
}

Eigen::Index argmax_first(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace vtl
