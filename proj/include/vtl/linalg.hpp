#pragma once

#include <Eigen/Dense>

#include <span>
#include <string_view>

namespace vtl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// (A + A^T) / 2.
Matrix symmetrize(const Matrix& a);

/// Relative jitter used by ensure_spd.
inline constexpr double kSpdJitter = 1e-10;

/// Returns a symmetric positive-definite version of `a`.
///
/// The matrix is symmetrized first. If the Cholesky factorization fails,
/// kSpdJitter * tr(A)/D is added to the diagonal and the factorization is
/// retried once; a second failure raises NumericalDegeneracyError with
/// `what` in the message.
Matrix ensure_spd(const Matrix& a, std::string_view what);

/// True when the Cholesky factorization of `a` succeeds.
bool is_spd(const Matrix& a);

/// log(sum(exp(v))) without overflow. Returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

/// Normalizes log-weights into probabilities that sum to one.
Vector softmax_from_log(const Vector& log_weights);

/// Index of the largest entry; the lowest index wins ties.
Eigen::Index argmax_first(const Vector& v);

}  // namespace vtl
