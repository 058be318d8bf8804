#pragma once

// Chance-constraint reformulations for Gaussian wind deviations.
//
// Every constraint bounds a risk functional of an overload y (generator or
// line, upper or lower limit):
//   standard   P[y > 0] <= eps        evaluated as mu + z_{1-eps} sigma <= 0 (MW)
//   linear     E[y 1(y>0)] <= eps     (MW)
//   quadratic  E[y^2 1(y>0)] <= eps   (MW^2)
// Under an affine policy y is Gaussian and the weighted risks are truncated
// moments. Under a piecewise-affine policy y | Omega is Gaussian and the risk
// is integrated over the three Omega regions by Gauss-Legendre quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wccopf/errors.hpp"
#include "wccopf/gaussmath.hpp"
#include "wccopf/netmodel.hpp"
#include "wccopf/policy.hpp"
#include "wccopf/quadrature.hpp"

namespace wccopf {

enum class Kind { standard, linear, quadratic };
enum class TargetType { generator, line };
enum class PolicyForm { affine, piecewise };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::standard: return "standard";
    case Kind::linear: return "linear";
    case Kind::quadratic: return "quadratic";
  }
  return "?";
}
inline const char* to_string(TargetType t) { return t == TargetType::generator ? "generator" : "line"; }
inline const char* to_string(PolicyForm f) { return f == PolicyForm::affine ? "affine" : "piecewise"; }

/// Sigma floor (MW) applied before any division by sigma.
inline constexpr double kSigmaFloor = 1e-9;

struct ConstraintSpec {
  Kind kind = Kind::standard;
  TargetType target = TargetType::line;
  int index = 0;
  Side side = Side::upper;
  /// Probability (standard), MW (linear) or MW^2 (quadratic).
  double epsilon = 0.1;
  PolicyForm policy_form = PolicyForm::affine;

  std::string id() const {
    return std::string(target == TargetType::generator ? "gen" : "line") + std::to_string(index) + "_" +
           to_string(side);
  }
};

/// Decision variables. beta_plus / beta_minus are empty for affine runs.
struct DecisionVector {
  Vector p;
  Vector alpha;
  Vector beta_plus;
  Vector beta_minus;

  bool piecewise() const { return beta_plus.size() > 0; }
};

/// Thresholds of the piecewise-affine policy; ignored for affine.
struct PolicyShape {
  PolicyForm form = PolicyForm::affine;
  double omega_plus = 0.0;
  double omega_minus = 0.0;
};

inline PiecewiseAffinePolicy to_piecewise(const DecisionVector& z, const PolicyShape& shape) {
  PiecewiseAffinePolicy pol{{z.p, z.alpha}, z.beta_plus, z.beta_minus, shape.omega_plus, shape.omega_minus};
  if (!z.piecewise()) {
    pol.beta_plus = Vector::Zero(z.p.size());
    pol.beta_minus = Vector::Zero(z.p.size());
  }
  return pol;
}

inline Policy to_policy(const DecisionVector& z, const PolicyShape& shape) {
  if (shape.form == PolicyForm::affine) return AffinePolicy{z.p, z.alpha};
  return to_piecewise(z, shape);
}

/// Risk functional evaluated on (mu, sigma): value, risk, and d value / d(mu, sigma).
struct RiskValue {
  double value = 0.0;
  double risk = 0.0;
  MomentGrad grad;
};

/// Residual and gradient with respect to every decision block.
struct ConstraintEval {
  double value = 0.0;  // <= 0 means satisfied
  double risk = 0.0;   // P[y>0], E[y+] or E[y+^2]
  Vector grad_p;
  Vector grad_alpha;
  Vector grad_beta_plus;
  Vector grad_beta_minus;
};

// ---------------------------------------------------------------------------
// Affine policy: y ~ N(mu, sigma^2).

/// mu = sign (offset + coef_p'p - limit), sigma^2 = k'Sigma k, k = wind_coef - (coef_p'alpha) 1.
inline Gauss1D affine_moments(const OverloadMap& map, const FluctuationModel& fm, const Vector& p,
                              const Vector& alpha) {
  const double kappa = map.coef_p.dot(alpha);
  const Vector k = map.wind_coef - kappa * Vector::Ones(map.wind_coef.size());
  const double var = fm.dimension() > 0 ? k.dot(fm.covariance() * k) : 0.0;
  return {map.sign * (map.offset + map.coef_p.dot(p) - map.limit), std::sqrt(std::max(var, 0.0))};
}

inline Gauss1D affine_overload_moments(const ConstraintSpec& spec, const Vector& p, const Vector& alpha,
                                       const NetworkCase& c, const FlowMatrix& flows, const FluctuationModel& fm) {
  if (p.size() != c.gen_count() || alpha.size() != c.gen_count()) {
    throw DimensionError("affine_overload_moments: decision size differs from generator count");
  }
  const OverloadMap map = spec.target == TargetType::generator ? generator_overload_map(c, spec.index, spec.side)
                                                               : line_overload_map(c, flows, spec.index, spec.side);
  return affine_moments(map, fm, p, alpha);
}

/// mu + Phi^-1(1 - eps) sigma.
inline RiskValue eval_standard(const ConstraintSpec& spec, const Gauss1D& g) {
  if (!(spec.epsilon > 0.0 && spec.epsilon < 1.0)) throw DomainError("standard chance constraint: eps must lie in (0, 1)");
  const double z = std_quantile(1.0 - spec.epsilon);
  RiskValue r;
  r.value = g.mu + z * g.sigma;
  r.risk = g.sigma > 0.0 ? std_cdf(g.mu / g.sigma) : (g.mu > 0.0 ? 1.0 : 0.0);
  r.grad = {1.0, z};
  return r;
}

inline RiskValue eval_linear_affine(const ConstraintSpec& spec, const Gauss1D& g) {
  RiskValue r;
  r.risk = trunc_mean(g);
  r.value = r.risk - spec.epsilon;
  r.grad = trunc_mean_grad({g.mu, std::max(g.sigma, kSigmaFloor)});
  return r;
}

inline RiskValue eval_quadratic_affine(const ConstraintSpec& spec, const Gauss1D& g) {
  RiskValue r;
  r.risk = trunc_second_moment(g);
  r.value = r.risk - spec.epsilon;
  r.grad = trunc_second_moment_grad({g.mu, std::max(g.sigma, kSigmaFloor)});
  return r;
}

inline RiskValue eval_affine_risk(const ConstraintSpec& spec, const Gauss1D& g) {
  switch (spec.kind) {
    case Kind::standard: return eval_standard(spec, g);
    case Kind::linear: return eval_linear_affine(spec, g);
    case Kind::quadratic: return eval_quadratic_affine(spec, g);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Piecewise-affine policy: integrate the conditional truncated moment over Omega.

namespace chance_detail {

/// Integrand sums: F = int f(mu(W)) pdf, I0 = int f_mu pdf, I1 = int f_mu W pdf.
struct RegionSums {
  double F = 0.0;
  double I0 = 0.0;
  double I1 = 0.0;

  RegionSums& operator+=(const RegionSums& o) {
    F += o.F;
    I0 += o.I0;
    I1 += o.I1;
    return *this;
  }
  RegionSums operator*(double s) const { return {F * s, I0 * s, I1 * s}; }
};

/// Weighted risk integrand for y | Omega ~ N(a + b Omega, sigma^2) and Omega ~ N(0, sd^2).
struct Integrand {
  Kind kind;
  double a;
  double b;
  double sigma;
  double sd;

  RegionSums operator()(double w) const {
    const double mu = a + b * w;
    const double pdf = std_pdf(w / sd) / sd;
    double f = 0.0;
    double fmu = 0.0;
    if (sigma > 0.0) {
      const Gauss1D g{mu, sigma};
      if (kind == Kind::linear) {
        f = trunc_mean(g);
        fmu = std_cdf(mu / sigma);
      } else {
        f = trunc_second_moment(g);
        fmu = 2.0 * trunc_mean(g);
      }
    } else if (mu > 0.0) {
      f = kind == Kind::linear ? mu : mu * mu;
      fmu = kind == Kind::linear ? 1.0 : 2.0 * mu;
    }
    return {f * pdf, fmu * pdf, fmu * w * pdf};
  }
};

inline constexpr double kTailStd = 8.0;
inline constexpr double kRelTol = 1e-8;
inline constexpr int kMaxDepth = 14;

inline RegionSums adaptive(const Integrand& fn, double lo, double hi, const RegionSums& coarse, double abs_floor,
                           int depth, double& worst) {
  const auto& gl = GaussLegendre<64>::instance();
  const double mid = 0.5 * (lo + hi);
  RegionSums fine = gl.integrate(fn, lo, mid);
  const RegionSums right = gl.integrate(fn, mid, hi);
  RegionSums left = fine;
  fine += right;
  const double err = std::max(std::abs(fine.F - coarse.F), std::abs(fine.I0 - coarse.I0));
  const double scale = std::max(std::abs(fine.F), std::abs(fine.I0));
  if (err <= kRelTol * scale + abs_floor) return fine;
  if (depth >= kMaxDepth) {
    worst = std::max(worst, scale > 0.0 ? err / scale : err);
    return fine;
  }
  RegionSums out = adaptive(fn, lo, mid, left, abs_floor, depth + 1, worst);
  out += adaptive(fn, mid, hi, right, abs_floor, depth + 1, worst);
  return out;
}

/// Integrate over [lo, hi], splitting where mu(Omega) crosses zero so each
/// piece is smooth on the scale of the Gauss-Legendre rule.
inline RegionSums integrate_region(const Integrand& fn, double lo, double hi) {
  RegionSums total;
  if (!(hi > lo)) return total;
  std::vector<double> cuts{lo, hi};
  if (fn.b != 0.0) {
    const double root = -fn.a / fn.b;
    const double width = fn.sigma / std::abs(fn.b);
    for (double x : {root - 8.0 * width, root, root + 8.0 * width})
      if (x > lo && x < hi) cuts.push_back(x);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto& gl = GaussLegendre<64>::instance();
  // Absolute floor relative to the integrand magnitude at the region scale.
  const double scale = 1.0 + std::abs(fn.a) + std::abs(fn.b) * fn.sd + fn.sigma;
  const double abs_floor = 1e-15 * scale * scale;
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const RegionSums coarse = gl.integrate(fn, cuts[i], cuts[i + 1]);
    total += adaptive(fn, cuts[i], cuts[i + 1], coarse, abs_floor, 0, worst);
  }
  if (worst > 0.0) throw NumericalError("piecewise risk quadrature did not converge", worst);
  return total;
}

}  // namespace chance_detail

/// Weighted risk and gradient of a linear or quadratic constraint under a
/// piecewise-affine policy, given the overload map of its target.
inline ConstraintEval eval_weighted_piecewise(const ConstraintSpec& spec, const OverloadMap& map,
                                              const PiecewiseAffinePolicy& pol, const FluctuationModel& fm) {
  using namespace chance_detail;
  if (spec.kind == Kind::standard) {
    throw DomainError("standard chance constraints are not available for piecewise-affine policies");
  }
  const double total_var = fm.total_variance();
  if (!(total_var > 0.0)) throw DomainError("piecewise evaluation needs a positive total variance");
  const double sd = std::sqrt(total_var);
  const double s = map.sign;

  const double w_cross = map.wind_coef.dot(fm.cross());
  const double w_var = map.wind_coef.dot(fm.covariance() * map.wind_coef);
  const double sigma_c = std::sqrt(std::max(w_var - w_cross * w_cross / total_var, 0.0));
  const double kappa = map.coef_p.dot(pol.base.alpha);
  const double slope = s * (w_cross / total_var - kappa);
  const double base = map.offset + map.coef_p.dot(pol.base.p) - map.limit;

  const double lo = -kTailStd * sd;
  const double hi = kTailStd * sd;
  const double a_minus = s * (base + map.coef_p.dot(pol.beta_minus));
  const double a_mid = s * base;
  const double a_plus = s * (base + map.coef_p.dot(pol.beta_plus));

  const RegionSums r_minus =
      integrate_region({spec.kind, a_minus, slope, sigma_c, sd}, lo, std::min(pol.omega_minus, hi));
  const RegionSums r_mid = integrate_region({spec.kind, a_mid, slope, sigma_c, sd}, std::max(pol.omega_minus, lo),
                                            std::min(pol.omega_plus, hi));
  const RegionSums r_plus =
      integrate_region({spec.kind, a_plus, slope, sigma_c, sd}, std::max(pol.omega_plus, lo), hi);

  ConstraintEval e;
  e.risk = r_minus.F + r_mid.F + r_plus.F;
  e.value = e.risk - spec.epsilon;
  const double i0 = r_minus.I0 + r_mid.I0 + r_plus.I0;
  const double i1 = r_minus.I1 + r_mid.I1 + r_plus.I1;
  e.grad_p = s * i0 * map.coef_p;
  e.grad_alpha = -s * i1 * map.coef_p;
  e.grad_beta_plus = s * r_plus.I0 * map.coef_p;
  e.grad_beta_minus = s * r_minus.I0 * map.coef_p;
  return e;
}

inline ConstraintEval eval_weighted_piecewise(const ConstraintSpec& spec, const PiecewiseAffinePolicy& pol,
                                              const NetworkCase& c, const FlowMatrix& flows,
                                              const FluctuationModel& fm) {
  validate_policy(pol);
  const OverloadMap map = spec.target == TargetType::generator ? generator_overload_map(c, spec.index, spec.side)
                                                               : line_overload_map(c, flows, spec.index, spec.side);
  return eval_weighted_piecewise(spec, map, pol, fm);
}

/// Evaluates any constraint of a fixed network. Overload maps are built once.
class ConstraintSystem {
 public:
  ConstraintSystem(const NetworkCase& c, const FlowMatrix& flows, FluctuationModel fm)
      : gen_count_(c.gen_count()), fm_(std::move(fm)) {
    if (fm_.dimension() != c.wind_count()) {
      throw DimensionError("fluctuation model dimension differs from wind source count");
    }
    for (int g = 0; g < c.gen_count(); ++g) {
      gen_maps_.push_back({generator_overload_map(c, g, Side::upper), generator_overload_map(c, g, Side::lower)});
    }
    for (int l = 0; l < c.line_count(); ++l) {
      line_maps_.push_back({line_overload_map(c, flows, l, Side::upper), line_overload_map(c, flows, l, Side::lower)});
    }
  }

  const FluctuationModel& fluctuations() const { return fm_; }
  int gen_count() const { return gen_count_; }

  const OverloadMap& map(const ConstraintSpec& spec) const {
    const auto& maps = spec.target == TargetType::generator ? gen_maps_ : line_maps_;
    if (spec.index < 0 || spec.index >= static_cast<int>(maps.size())) {
      throw DimensionError("constraint target index out of range: " + spec.id());
    }
    return maps[spec.index][spec.side == Side::upper ? 0 : 1];
  }

  /// Affine moments of the overload of this constraint.
  Gauss1D moments(const ConstraintSpec& spec, const DecisionVector& z) const {
    return affine_moments(map(spec), fm_, z.p, z.alpha);
  }

  ConstraintEval evaluate(const ConstraintSpec& spec, const DecisionVector& z, const PolicyShape& shape) const {
    if (z.p.size() != gen_count_ || z.alpha.size() != gen_count_) {
      throw DimensionError("decision size differs from generator count");
    }
    const OverloadMap& m = map(spec);
    if (shape.form == PolicyForm::piecewise) {
      if (spec.kind == Kind::standard) {
        throw DomainError("standard chance constraints are not available for piecewise-affine policies");
      }
      return eval_weighted_piecewise(spec, m, to_piecewise(z, shape), fm_);
    }
    const Gauss1D g = affine_moments(m, fm_, z.p, z.alpha);
    const RiskValue rv = eval_affine_risk(spec, g);
    ConstraintEval e;
    e.value = rv.value;
    e.risk = rv.risk;
    e.grad_p = rv.grad.d_mu * m.sign * m.coef_p;
    // d sigma / d alpha = -coef_p (k'Sigma 1) / sigma.
    const double kappa = m.coef_p.dot(z.alpha);
    const Vector k = m.wind_coef - kappa * Vector::Ones(m.wind_coef.size());
    const double k_cross = fm_.dimension() > 0 ? k.dot(fm_.cross()) : 0.0;
    e.grad_alpha = -rv.grad.d_sigma * k_cross / std::max(g.sigma, kSigmaFloor) * m.coef_p;
    e.grad_beta_plus = Vector::Zero(0);
    e.grad_beta_minus = Vector::Zero(0);
    return e;
  }

 private:
  int gen_count_;
  FluctuationModel fm_;
  std::vector<std::array<OverloadMap, 2>> gen_maps_;
  std::vector<std::array<OverloadMap, 2>> line_maps_;
};

// ---------------------------------------------------------------------------
// Constraint sets.

struct BudgetOverride {
  TargetType target = TargetType::line;
  int index = 0;
  std::optional<Side> side;  // both sides when empty
  double value = 0.0;
};

/// Risk budgets of one formulation: family defaults plus per-element overrides.
struct EpsilonBudget {
  std::optional<double> line;
  std::optional<double> gen;
  std::vector<BudgetOverride> overrides;
};

inline double budget_for(const EpsilonBudget& b, TargetType t, int index, Side side) {
  double v = 0.0;
  bool found = false;
  for (const auto& o : b.overrides) {
    if (o.target == t && o.index == index && (!o.side || *o.side == side)) {
      v = o.value;
      found = true;
    }
  }
  if (!found) {
    const auto& fam = t == TargetType::line ? b.line : b.gen;
    if (!fam) throw ConfigError(std::string("missing epsilon for ") + to_string(t) + " constraints");
    v = *fam;
  }
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("epsilon must be positive and finite");
  return v;
}

/// Two specs (upper, lower) per generator, then two per line.
inline std::vector<ConstraintSpec> build_constraint_set(const NetworkCase& c, Kind kind, PolicyForm form,
                                                        const EpsilonBudget& budget) {
  std::vector<ConstraintSpec> out;
  out.reserve(2 * (c.gen_count() + c.line_count()));
  for (int g = 0; g < c.gen_count(); ++g) {
    for (Side s : {Side::upper, Side::lower}) {
      out.push_back({kind, TargetType::generator, g, s, budget_for(budget, TargetType::generator, g, s), form});
    }
  }
  for (int l = 0; l < c.line_count(); ++l) {
    for (Side s : {Side::upper, Side::lower}) {
      out.push_back({kind, TargetType::line, l, s, budget_for(budget, TargetType::line, l, s), form});
    }
  }
  return out;
}

}  // namespace wccopf
