#pragma once

// Scalar Gaussian special functions and the truncated moments
//   E[y 1(y>0)]   and   E[y^2 1(y>0)]   for y ~ N(mu, sigma^2)
// used by every weighted and standard chance-constraint reformulation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "wccopf/errors.hpp"

namespace wccopf {

/// One-dimensional Gaussian, in MW.
struct Gauss1D {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Partial derivatives of a scalar function of (mu, sigma).
struct MomentGrad {
  double d_mu = 0.0;
  double d_sigma = 0.0;
};

namespace gauss_detail {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kMinExponent = -745.0;

inline bool valid(const Gauss1D& g) {
  return std::isfinite(g.mu) && std::isfinite(g.sigma) && g.sigma >= 0.0;
}

inline void require_valid(const Gauss1D& g) {
  if (!valid(g)) throw DomainError("Gauss1D requires finite mu and sigma >= 0");
}

}  // namespace gauss_detail

/// Standard normal density; exponent clamped to avoid underflow traps.
inline double std_pdf(double x) {
  const double e = std::max(-0.5 * x * x, gauss_detail::kMinExponent);
  return gauss_detail::kInvSqrt2Pi * std::exp(e);
}

/// Standard normal CDF through the complementary error function.
inline double std_cdf(double x) {
  return 0.5 * std::erfc(-x * (1.0 / std::numbers::sqrt2));
}

/// Inverse standard normal CDF for q in (0, 1).
///
/// Rational initial guess followed by safeguarded Newton steps inside a
/// shrinking bracket. The lower tail is solved directly and the upper tail by
/// symmetry, so tiny tail probabilities keep full relative accuracy.
inline double std_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("std_quantile: q must lie in (0, 1)");
  if (q == 0.5) return 0.0;
  if (q > 0.5) return -std_quantile(1.0 - q);

  // Lower tail: x < 0.
  const double t = std::sqrt(-2.0 * std::log(q));
  double x = -(t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                       (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
  double lo = -40.0;
  double hi = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double f = std_cdf(x) - q;
    if (f > 0.0) hi = x; else lo = x;
    const double d = std_pdf(x);
    double next = (d > 0.0) ? x - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

/// E[y 1(y>0)] for y ~ N(mu, sigma^2). sigma = 0 gives max(mu, 0).
inline double trunc_mean(const Gauss1D& g) {
  gauss_detail::require_valid(g);
  if (g.sigma == 0.0) return std::max(g.mu, 0.0);
  const double a = g.mu / g.sigma;
  const double v = g.mu * std_cdf(a) + g.sigma * std_pdf(a);
  return std::max(v, 0.0);
}

/// E[y^2 1(y>0)] for y ~ N(mu, sigma^2). sigma = 0 gives max(mu, 0)^2.
inline double trunc_second_moment(const Gauss1D& g) {
  gauss_detail::require_valid(g);
  if (g.sigma == 0.0) {
    const double m = std::max(g.mu, 0.0);
    return m * m;
  }
  const double a = g.mu / g.sigma;
  const double v = (g.mu * g.mu + g.sigma * g.sigma) * std_cdf(a) + g.mu * g.sigma * std_pdf(a);
  return std::max(v, 0.0);
}

/// Gradient of trunc_mean. d/dmu = Phi(mu/sigma), d/dsigma = phi(mu/sigma).
inline MomentGrad trunc_mean_grad(const Gauss1D& g) {
  gauss_detail::require_valid(g);
  if (g.sigma == 0.0) throw DomainError("trunc_mean_grad: sigma must be positive");
  const double a = g.mu / g.sigma;
  return {std_cdf(a), std_pdf(a)};
}

/// Gradient of trunc_second_moment. d/dmu = 2 trunc_mean, d/dsigma = 2 sigma Phi(mu/sigma).
inline MomentGrad trunc_second_moment_grad(const Gauss1D& g) {
  gauss_detail::require_valid(g);
  if (g.sigma == 0.0) throw DomainError("trunc_second_moment_grad: sigma must be positive");
  const double a = g.mu / g.sigma;
  const double cdf = std_cdf(a);
  return {2.0 * (g.mu * cdf + g.sigma * std_pdf(a)), 2.0 * g.sigma * cdf};
}

}  // namespace wccopf
