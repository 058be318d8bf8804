#pragma once

// Generation-control policies: the affine rule p - alpha * Omega, its
// piecewise-affine extension with reserve blocks beta+/beta-, and the general
// linear-in-parameter family p - sum_k alpha_k g_k(omega).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wccopf/errors.hpp"
#include "wccopf/gaussmath.hpp"
#include "wccopf/netmodel.hpp"

namespace wccopf {

enum class Side { upper, lower };

inline const char* to_string(Side s) { return s == Side::upper ? "upper" : "lower"; }

/// Zero-mean Gaussian wind deviations omega ~ N(0, Sigma), one entry per wind source.
class FluctuationModel {
 public:
  FluctuationModel() = default;

  explicit FluctuationModel(Matrix covariance) : sigma_(std::move(covariance)) {
    if (sigma_.rows() != sigma_.cols()) throw DimensionError("covariance must be square");
    if (!sigma_.allFinite()) throw DomainError("covariance has non-finite entries");
    const double scale = std::max(1.0, sigma_.cwiseAbs().maxCoeff());
    if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw DomainError("covariance is not symmetric");
    }
    sigma_ = 0.5 * (sigma_ + sigma_.transpose());
    if (sigma_.rows() > 0) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_);
      const Vector ev = es.eigenvalues();
      if (ev.minCoeff() < -1e-10 * scale) throw DomainError("covariance is not positive semidefinite");
      if (ev.minCoeff() < 0.0) {
        sigma_ = es.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
        sigma_ = 0.5 * (sigma_ + sigma_.transpose());
      }
    }
    cross_ = sigma_ * Vector::Ones(sigma_.rows());
    total_variance_ = cross_.sum();
  }

  /// Covariance from per-source standard deviations and one common correlation.
  static FluctuationModel from_std(const std::vector<double>& std_mw, double correlation) {
    const int k = static_cast<int>(std_mw.size());
    Matrix s(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) s(i, j) = (i == j ? 1.0 : correlation) * std_mw[i] * std_mw[j];
    return FluctuationModel(s);
  }

  const Matrix& covariance() const { return sigma_; }
  int dimension() const { return static_cast<int>(sigma_.rows()); }
  /// 1' Sigma 1, the variance of the total deviation Omega.
  double total_variance() const { return total_variance_; }
  double total_std() const { return std::sqrt(std::max(total_variance_, 0.0)); }
  /// Sigma 1.
  const Vector& cross() const { return cross_; }

 private:
  Matrix sigma_;
  Vector cross_;
  double total_variance_ = 0.0;
};

/// p - alpha * Omega with sum(alpha) = 1.
struct AffinePolicy {
  Vector p;
  Vector alpha;
};

/// Affine response plus reserve blocks deployed outside [omega_minus, omega_plus].
struct PiecewiseAffinePolicy {
  AffinePolicy base;
  Vector beta_plus;
  Vector beta_minus;
  double omega_plus = 0.0;
  double omega_minus = 0.0;
};

/// Reserve deployment for a realized total deviation. The middle interval is closed.
inline Vector beta_at(const PiecewiseAffinePolicy& pol, double omega_total) {
  if (omega_total > pol.omega_plus) return pol.beta_plus;
  if (omega_total < pol.omega_minus) return pol.beta_minus;
  return Vector::Zero(pol.base.p.size());
}

inline void validate_policy(const AffinePolicy& pol) {
  if (pol.p.size() != pol.alpha.size()) throw DimensionError("affine policy: p and alpha sizes differ");
}

inline void validate_policy(const PiecewiseAffinePolicy& pol) {
  validate_policy(pol.base);
  const auto n = pol.base.p.size();
  if (pol.beta_plus.size() != n || pol.beta_minus.size() != n) {
    throw DimensionError("piecewise policy: beta sizes differ from p");
  }
  if (!(std::isfinite(pol.omega_plus) && std::isfinite(pol.omega_minus))) {
    throw DomainError("piecewise policy: thresholds must be finite");
  }
  if (!(pol.omega_minus < 0.0 && 0.0 < pol.omega_plus)) {
    throw DomainError("piecewise policy: need omega_minus < 0 < omega_plus");
  }
}

// ---------------------------------------------------------------------------
// General linear-in-parameter policies.

namespace basis {
/// g(omega) = omega_k.
struct SourceDeviation {
  int source = 0;
};
/// g(omega) = Omega^degree.
struct TotalPower {
  int degree = 1;
};
/// g(omega) = 1 if Omega > threshold.
struct Above {
  double threshold = 0.0;
};
/// g(omega) = 1 if Omega < threshold.
struct Below {
  double threshold = 0.0;
};
/// g(omega) = 1 if lo <= Omega <= hi.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
}  // namespace basis

using BasisFunction = std::variant<basis::SourceDeviation, basis::TotalPower, basis::Above, basis::Below,
                                   basis::Interval>;

inline double evaluate_basis(const BasisFunction& g, const Vector& omega) {
  const double total = omega.sum();
  return std::visit(
      [&](const auto& b) -> double {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, basis::SourceDeviation>) {
          if (b.source < 0 || b.source >= omega.size()) throw DimensionError("basis source index out of range");
          return omega(b.source);
        } else if constexpr (std::is_same_v<T, basis::TotalPower>) {
          return std::pow(total, b.degree);
        } else if constexpr (std::is_same_v<T, basis::Above>) {
          return total > b.threshold ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<T, basis::Below>) {
          return total < b.threshold ? 1.0 : 0.0;
        } else {
          return (total >= b.lo && total <= b.hi) ? 1.0 : 0.0;
        }
      },
      g);
}

struct PolicyTerm {
  Vector alpha;  // one entry per generator
  BasisFunction basis;
};

/// p - sum_k alpha_k g_k(omega).
struct GeneralPolicy {
  Vector p;
  std::vector<PolicyTerm> terms;
};

/// Full matrix-alpha affine rule p - A omega written as a general policy.
inline GeneralPolicy general_from_matrix(const Vector& p, const Matrix& alpha) {
  GeneralPolicy g{p, {}};
  for (int k = 0; k < alpha.cols(); ++k) g.terms.push_back({alpha.col(k), basis::SourceDeviation{k}});
  return g;
}

inline GeneralPolicy general_from(const AffinePolicy& pol) {
  return GeneralPolicy{pol.p, {{pol.alpha, basis::TotalPower{1}}}};
}

inline GeneralPolicy general_from(const PiecewiseAffinePolicy& pol) {
  GeneralPolicy g = general_from(pol.base);
  g.terms.push_back({-pol.beta_plus, basis::Above{pol.omega_plus}});
  g.terms.push_back({-pol.beta_minus, basis::Below{pol.omega_minus}});
  return g;
}

// ---------------------------------------------------------------------------
// Response.

inline Vector respond(const AffinePolicy& pol, const Vector& omega) {
  return pol.p - pol.alpha * omega.sum();
}

inline Vector respond(const PiecewiseAffinePolicy& pol, const Vector& omega) {
  const double total = omega.sum();
  return pol.base.p - pol.base.alpha * total + beta_at(pol, total);
}

inline Vector respond(const GeneralPolicy& pol, const Vector& omega) {
  Vector out = pol.p;
  for (const auto& t : pol.terms) {
    if (t.alpha.size() != pol.p.size()) throw DimensionError("general policy term size differs from p");
    out -= t.alpha * evaluate_basis(t.basis, omega);
  }
  return out;
}

using Policy = std::variant<AffinePolicy, PiecewiseAffinePolicy, GeneralPolicy>;

inline Vector respond(const Policy& pol, const Vector& omega) {
  return std::visit([&](const auto& p) { return respond(p, omega); }, pol);
}

/// Line flows M (p~(omega) - d + v + omega).
template <typename P>
Vector line_flow(const NetworkCase& c, const FlowMatrix& fm, const P& policy, const Vector& omega) {
  return line_flow_from_outputs(c, fm, respond(policy, omega), omega);
}

// ---------------------------------------------------------------------------
// Power balance.

struct BalanceReport {
  bool balanced = true;
  double max_residual = 0.0;
  int worst_sample = -1;
  double worst_residual = 0.0;  // signed
};

/// sum_i p~_i(omega) + v_i + omega_i - d_i for one realization.
template <typename P>
double balance_residual(const P& policy, const NetworkCase& c, const Vector& omega) {
  const Vector out = respond(policy, omega);
  if (out.size() != c.gen_count()) throw DimensionError("check_balance: policy size differs from generator count");
  return out.sum() + c.total_forecast() + omega.sum() - c.total_demand();
}

/// Checks total power balance on every sample row (one row per realization).
template <typename P>
BalanceReport check_balance(const P& policy, const NetworkCase& c, const Matrix& samples, double tol = 1e-8) {
  if (samples.cols() != c.wind_count()) throw DimensionError("check_balance: sample width differs from wind count");
  BalanceReport r;
  for (int s = 0; s < samples.rows(); ++s) {
    const double res = balance_residual(policy, c, samples.row(s).transpose());
    if (r.worst_sample < 0 || std::abs(res) > r.max_residual) {
      r.max_residual = std::abs(res);
      r.worst_sample = s;
      r.worst_residual = res;
    }
  }
  r.balanced = r.max_residual <= tol;
  return r;
}

// ---------------------------------------------------------------------------
// Overload maps and conditional moments.

/// Overload y(omega) = sign * (q(omega) - limit), where the monitored quantity is
///   q = offset + coef_p'(p + beta(Omega)) + (wind_coef - (coef_p'alpha) 1)' omega.
/// For generator i: coef_p = e_i, wind_coef = 0. For a line: coef_p = M G row,
/// wind_coef = M W row, offset = M (v - d) row.
struct OverloadMap {
  Vector coef_p;
  Vector wind_coef;
  double offset = 0.0;
  double limit = 0.0;
  double sign = 1.0;
};

inline OverloadMap generator_overload_map(const NetworkCase& c, int gen, Side side) {
  if (gen < 0 || gen >= c.gen_count()) throw DimensionError("generator index out of range");
  OverloadMap m;
  m.coef_p = Vector::Zero(c.gen_count());
  m.coef_p(gen) = 1.0;
  m.wind_coef = Vector::Zero(c.wind_count());
  m.offset = 0.0;
  m.limit = side == Side::upper ? c.generators[gen].p_max : c.generators[gen].p_min;
  m.sign = side == Side::upper ? 1.0 : -1.0;
  return m;
}

inline OverloadMap line_overload_map(const NetworkCase& c, const FlowMatrix& fm, int line, Side side) {
  if (line < 0 || line >= c.line_count()) throw DimensionError("line index out of range");
  const Eigen::RowVectorXd row = fm.M.row(line);
  OverloadMap m;
  m.coef_p = (row * c.generator_incidence()).transpose();
  m.wind_coef = (row * c.wind_incidence()).transpose();
  m.offset = row.dot(c.forecast_injection() - c.demand);
  m.limit = side == Side::upper ? c.lines[line].flow_limit : -c.lines[line].flow_limit;
  m.sign = side == Side::upper ? 1.0 : -1.0;
  return m;
}

/// Conditional law of y given Omega under a piecewise-affine policy.
///   mean     = sign * (offset + coef_p'(p + beta(Omega)) - limit + (k'Sigma 1 / 1'Sigma 1) Omega)
///   variance = k'Sigma k - (k'Sigma 1)^2 / 1'Sigma 1
/// with k = wind_coef - (coef_p'alpha) 1. The variance does not depend on alpha or beta.
inline Gauss1D conditional_moments(const OverloadMap& map, const PiecewiseAffinePolicy& pol,
                                   const FluctuationModel& fm, double omega_total) {
  const double total_var = fm.total_variance();
  if (!(total_var > 0.0)) throw DomainError("conditional moments need a positive total variance");
  const double kappa = map.coef_p.dot(pol.base.alpha);
  const Vector k = map.wind_coef - kappa * Vector::Ones(map.wind_coef.size());
  const double k_cross = k.dot(fm.cross());
  const double base = map.offset + map.coef_p.dot(pol.base.p + beta_at(pol, omega_total)) - map.limit;
  const double var = (k.dot(fm.covariance() * k) - k_cross * k_cross / total_var);
  return {map.sign * (base + k_cross / total_var * omega_total), std::sqrt(std::max(var, 0.0))};
}

inline Gauss1D conditional_moments_gen(const PiecewiseAffinePolicy& pol, const FluctuationModel& fm,
                                       const NetworkCase& c, int gen, Side side, double omega_total) {
  validate_policy(pol);
  return conditional_moments(generator_overload_map(c, gen, side), pol, fm, omega_total);
}

inline Gauss1D conditional_moments_line(const PiecewiseAffinePolicy& pol, const FluctuationModel& fm,
                                        const NetworkCase& c, const FlowMatrix& flows, int line, Side side,
                                        double omega_total) {
  validate_policy(pol);
  return conditional_moments(line_overload_map(c, flows, line, side), pol, fm, omega_total);
}

}  // namespace wccopf
