#pragma once

// Quadrature oracles built on Boost.Math, independent of the library's own
// Gauss-Legendre rules.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>

namespace testing_support {

/// int_0^inf y^k N(y; mu, sigma) dy by adaptive Gauss-Kronrod, split at the peak.
inline double truncated_moment_oracle(double mu, double sigma, int k) {
  auto f = [&](double y) {
    const double z = (y - mu) / sigma;
    return std::pow(y, k) * std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
  };
  using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double lo = std::max(0.0, mu - 40.0 * sigma);
  const double hi = std::max(lo, mu + 40.0 * sigma);
  if (hi <= lo) return 0.0;
  const double peak = std::clamp(mu, lo, hi);
  double err = 0.0;
  return gk::integrate(f, lo, peak, 15, 1e-12, &err) + gk::integrate(f, peak, hi, 15, 1e-12, &err);
}

}  // namespace testing_support
