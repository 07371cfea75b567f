#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library code paths it is compared against.

#include "vtl/linalg.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

/// Butterworth low-pass from the analog prototype Wc^2 / (s^2 + sqrt2 Wc s + Wc^2)
/// with s = T (1 - z^-1) / (1 + z^-1), T = 2 fs, Wc = T tan(pi fc / fs),
/// expanded by hand in long double. Returns {b0, b1, b2, a1, a2}.
inline std::array<double, 5> butterworth2(double fs, double fc) {
  const long double pi = std::numbers::pi_v<long double>;
  const long double t = 2.0L * fs;
  const long double wc = t * std::tan(pi * fc / fs);
  const long double r2 = std::sqrt(2.0L);
  const long double d0 = t * t + r2 * wc * t + wc * wc;
  const long double d1 = -2.0L * t * t + 2.0L * wc * wc;
  const long double d2 = t * t - r2 * wc * t + wc * wc;
  const long double n0 = wc * wc;
  return {static_cast<double>(n0 / d0), static_cast<double>(2.0L * n0 / d0),
          static_cast<double>(n0 / d0), static_cast<double>(d1 / d0),
          static_cast<double>(d2 / d0)};
}

/// Magnitudes of the roots of z^2 + a1 z + a2.
inline std::array<double, 2> pole_magnitudes(double a1, double a2) {
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
  return {std::abs((-a1 + disc) / 2.0), std::abs((-a1 - disc) / 2.0)};
}

/// Direct-form I recursion, written out term by term.
inline std::vector<double> direct_recursion(const std::array<double, 5>& c,
                                            const std::vector<double>& x) {
  std::vector<double> y(x.size(), 0.0);
  for (size_t n = 0; n < x.size(); ++n) {
    double acc = c[0] * x[n];
    if (n >= 1) acc += c[1] * x[n - 1] - c[3] * y[n - 1];
    if (n >= 2) acc += c[2] * x[n - 2] - c[4] * y[n - 2];
    y[n] = acc;
  }
  return y;
}

/// Normal-Wishart hyperparameters in rank-one sequential form.
struct NormalWishart {
  double beta;
  vtl::Vector m;
  double nu;
  vtl::Matrix W_inv;
  double count = 0.0;

  void absorb(const vtl::Vector& x) {
    const vtl::Vector d = x - m;
    W_inv += (beta / (beta + 1.0)) * d * d.transpose();
    m = (beta * m + x) / (beta + 1.0);
    beta += 1.0;
    nu += 1.0;
    count += 1.0;
  }
};

/// D = 1 marginal likelihood p(x) = int int N(x|mu, 1/lam) N(mu|m, 1/(beta lam))
/// Gam(lam | nu/2, rate W_inv/2) dmu dlam by nested adaptive quadrature.
inline double predictive_density_1d(double x, double beta, double m, double nu, double w_inv) {
  using boost::math::quadrature::exp_sinh;
  using boost::math::quadrature::gauss_kronrod;
  const double a = 0.5 * nu;
  const double b = 0.5 * w_inv;
  const double log_gamma_norm = a * std::log(b) - std::lgamma(a);
  auto inner = [&](double lam) {
    if (lam <= 0.0) return 0.0;
    auto integrand = [&](double mu) {
      const double ll = 0.5 * std::log(lam / (2.0 * std::numbers::pi)) - 0.5 * lam * (x - mu) * (x - mu);
      const double lp = 0.5 * std::log(beta * lam / (2.0 * std::numbers::pi)) -
                        0.5 * beta * lam * (mu - m) * (mu - m);
      return std::exp(ll + lp);
    };
    // The mu-integrand is Gaussian with this center and precision.
    const double center = (x + beta * m) / (1.0 + beta);
    const double sd = 1.0 / std::sqrt(lam * (1.0 + beta));
    const double mu_int = gauss_kronrod<double, 61>::integrate(integrand, center - 40.0 * sd,
                                                               center + 40.0 * sd, 15, 1e-13);
    const double log_g = log_gamma_norm + (a - 1.0) * std::log(lam) - b * lam;
    return mu_int * std::exp(log_g);
  };
  exp_sinh<double> outer;
  return outer.integrate(inner, 1e-13);
}

/// Integral over the real line of a one-dimensional density.
inline double integrate_real_line(const std::function<double(double)>& f) {
  boost::math::quadrature::sinh_sinh<double> integrator;
  return integrator.integrate(f, 1e-12);
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace oracle
