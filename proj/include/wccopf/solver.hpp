#pragma once

// Cutting-plane solver for the chance-constrained and weighted
// chance-constrained DC-OPF.
//
//   min  c'p
//   s.t. sum(p) = sum(d) - sum(v),  sum(alpha) = 1,  sum(beta+) = sum(beta-) = 0
//        0 <= p <= p_max,  0 <= alpha <= 1,  |beta+-| <= p_max - p_min
//        g_j(p, alpha, beta) <= 0   for every chance constraint j
//
// Each g_j is convex, so its linearisation at any point is a global
// under-estimator. The LP over all cuts gives a lower bound; a feasible
// incumbent comes from a line search between the LP optimum and a strictly
// feasible centre found in a first phase. Cuts are added at LP optima
// (violated constraints) and at the line-search boundary point (supporting
// hyperplanes). The run stops once incumbent and bound agree to the
// requested relative gap.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wccopf/chance.hpp"
#include "wccopf/errors.hpp"
#include "wccopf/lp.hpp"
#include "wccopf/netmodel.hpp"
#include "wccopf/policy.hpp"

namespace wccopf {

enum class Formulation { cc, wcc_linear, wcc_quadratic };
enum class SolveStatus { optimal, infeasible, iteration_limit };

inline const char* to_string(Formulation f) {
  switch (f) {
    case Formulation::cc: return "cc";
    case Formulation::wcc_linear: return "wcc-linear";
    case Formulation::wcc_quadratic: return "wcc-quadratic";
  }
  return "?";
}

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

inline Kind kind_of(Formulation f) {
  switch (f) {
    case Formulation::cc: return Kind::standard;
    case Formulation::wcc_linear: return Kind::linear;
    case Formulation::wcc_quadratic: return Kind::quadratic;
  }
  return Kind::standard;
}

struct SolveOptions {
  int max_iterations = 5000;
  int phase1_max_iterations = 2000;
  double objective_rel_tol = 1e-6;
  double residual_tol_probability = 1e-6;
  double residual_tol_linear = 1e-4;      // MW
  double residual_tol_quadratic = 1e-3;   // MW^2
  std::size_t max_cuts = 5000;
  LpOptions lp;
};

/// Residual tolerance for a constraint kind, in the units of its epsilon.
inline double residual_tolerance(const SolveOptions& o, Kind k) {
  switch (k) {
    case Kind::standard: return o.residual_tol_probability;
    case Kind::linear: return o.residual_tol_linear;
    case Kind::quadratic: return o.residual_tol_quadratic;
  }
  return 0.0;
}

struct IterationLog {
  int iteration = 0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  double max_violation = 0.0;  // max constraint value at the LP optimum
  int cuts = 0;
};

struct ConstraintResidual {
  ConstraintSpec spec;
  double value = 0.0;     // solver-form value (MW for standard)
  double risk = 0.0;
  double residual = 0.0;  // risk - epsilon
};

struct SolutionReport {
  SolveStatus status = SolveStatus::infeasible;
  Formulation formulation = Formulation::cc;
  PolicyShape shape;
  DecisionVector decision;
  double objective = 0.0;
  double lower_bound = 0.0;
  double gap = 0.0;
  int iterations = 0;
  int phase1_iterations = 0;
  std::vector<ConstraintResidual> constraints;
  std::vector<IterationLog> log;
  std::string message;
};

/// A linearisation value + grad'(z - at) <= 0 of one constraint.
struct Cut {
  int constraint = 0;
  Vector grad;
  double rhs = 0.0;  // grad'z <= rhs
};

/// Linearise constraint `index` at `at`. Returns false when the cut is skipped
/// (point comfortably feasible) or duplicates an existing one.
inline bool add_cut(std::vector<Cut>& cuts, int index, const ConstraintEval& e, const Vector& grad, const Vector& at,
                    double tolerance) {
  if (!std::isfinite(e.value) || !grad.allFinite()) throw NumericalError("add_cut: non-finite linearisation");
  if (e.value < -tolerance / 10.0) return false;
  Cut c{index, grad, grad.dot(at) - e.value};
  const double norm = grad.norm();
  for (const auto& old : cuts) {
    if (old.constraint != index) continue;
    const double on = old.grad.norm();
    if (norm == 0.0 && on == 0.0 && std::abs(old.rhs - c.rhs) <= 1e-12 * (1.0 + std::abs(c.rhs))) return false;
    if (norm == 0.0 || on == 0.0) continue;
    if ((old.grad / on - grad / norm).cwiseAbs().maxCoeff() <= 1e-12 &&
        std::abs(old.rhs / on - c.rhs / norm) <= 1e-12 * (1.0 + std::abs(c.rhs / norm))) {
      return false;
    }
  }
  cuts.push_back(std::move(c));
  return true;
}

namespace solver_detail {

struct Layout {
  int gens = 0;
  bool piecewise = false;
  int size() const { return (piecewise ? 4 : 2) * gens; }
  int p(int g) const { return g; }
  int alpha(int g) const { return gens + g; }
  int beta_plus(int g) const { return 2 * gens + g; }
  int beta_minus(int g) const { return 3 * gens + g; }

  DecisionVector unpack(const Vector& z) const {
    DecisionVector d;
    d.p = z.segment(0, gens);
    d.alpha = z.segment(gens, gens);
    if (piecewise) {
      d.beta_plus = z.segment(2 * gens, gens);
      d.beta_minus = z.segment(3 * gens, gens);
    }
    return d;
  }

  Vector pack(const DecisionVector& d) const {
    Vector z(size());
    z.segment(0, gens) = d.p;
    z.segment(gens, gens) = d.alpha;
    if (piecewise) {
      z.segment(2 * gens, gens) = d.beta_plus.size() ? d.beta_plus : Vector::Zero(gens);
      z.segment(3 * gens, gens) = d.beta_minus.size() ? d.beta_minus : Vector::Zero(gens);
    }
    return z;
  }

  Vector gradient(const ConstraintEval& e) const {
    Vector g = Vector::Zero(size());
    g.segment(0, gens) = e.grad_p;
    g.segment(gens, gens) = e.grad_alpha;
    if (piecewise) {
      g.segment(2 * gens, gens) = e.grad_beta_plus;
      g.segment(3 * gens, gens) = e.grad_beta_minus;
    }
    return g;
  }
};

class Problem {
 public:
  Problem(const NetworkCase& c, const FlowMatrix& flows, const FluctuationModel& fm, std::vector<ConstraintSpec> specs,
          PolicyShape shape, const SolveOptions& opts)
      : case_(c), system_(c, flows, fm), specs_(std::move(specs)), shape_(shape), opts_(opts) {
    layout_.gens = c.gen_count();
    layout_.piecewise = shape.form == PolicyForm::piecewise;
    cost_ = Vector::Zero(layout_.size());
    cost_.segment(0, layout_.gens) = c.costs();
    lower_ = Vector::Zero(layout_.size());
    upper_ = Vector::Zero(layout_.size());
    for (int g = 0; g < layout_.gens; ++g) {
      const auto& gen = c.generators[g];
      upper_(layout_.p(g)) = gen.p_max;
      upper_(layout_.alpha(g)) = 1.0;
      if (layout_.piecewise) {
        const double range = gen.p_max - gen.p_min;
        lower_(layout_.beta_plus(g)) = -range;
        upper_(layout_.beta_plus(g)) = range;
        lower_(layout_.beta_minus(g)) = -range;
        upper_(layout_.beta_minus(g)) = range;
      }
    }
  }

  const Layout& layout() const { return layout_; }
  const std::vector<ConstraintSpec>& specs() const { return specs_; }
  const Vector& cost() const { return cost_; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const ConstraintSystem& system() const { return system_; }

  /// Linear equalities as (row, rhs) pairs.
  std::vector<std::pair<Vector, double>> equalities() const {
    std::vector<std::pair<Vector, double>> eq;
    const int n = layout_.size();
    const int G = layout_.gens;
    Vector row = Vector::Zero(n);
    row.segment(0, G).setOnes();
    eq.emplace_back(row, case_.total_demand() - case_.total_forecast());
    row.setZero();
    row.segment(G, G).setOnes();
    eq.emplace_back(row, 1.0);
    if (layout_.piecewise) {
      row.setZero();
      row.segment(2 * G, G).setOnes();
      eq.emplace_back(row, 0.0);
      row.setZero();
      row.segment(3 * G, G).setOnes();
      eq.emplace_back(row, 0.0);
    }
    return eq;
  }

  ConstraintEval eval(int j, const Vector& z) const { return system_.evaluate(specs_[j], layout_.unpack(z), shape_); }

  /// Value tolerance in the solver-form units of constraint j.
  double value_tolerance(int j) const {
    const Kind k = specs_[j].kind;
    return k == Kind::standard ? opts_.residual_tol_probability : residual_tolerance(opts_, k);
  }

  /// Scale used to normalise constraint values during the first phase.
  double phase1_scale(int j) const { return specs_[j].kind == Kind::standard ? 1.0 : specs_[j].epsilon; }

 private:
  const NetworkCase& case_;
  ConstraintSystem system_;
  std::vector<ConstraintSpec> specs_;
  PolicyShape shape_;
  const SolveOptions& opts_;
  Layout layout_;
  Vector cost_;
  Vector lower_;
  Vector upper_;
};

/// Deterministic dispatch with line limits at face value; alpha uniform.
inline std::optional<Vector> deterministic_start(const NetworkCase& c, const FlowMatrix& flows, const Layout& lay,
                                                 const LpOptions& lp_opts) {
  const int G = c.gen_count();
  Vector cost = c.costs();
  Vector lo = Vector::Zero(G);
  Vector hi(G);
  for (int g = 0; g < G; ++g) hi(g) = c.generators[g].p_max;
  std::optional<Vector> dispatch;
  for (int with_lines = 1; with_lines >= 0 && !dispatch; --with_lines) {
    DualSimplex lp(cost, lo, hi, lp_opts);
    lp.add_row(Vector::Ones(G), RowSense::equal, c.total_demand() - c.total_forecast());
    if (with_lines) {
      for (int l = 0; l < c.line_count(); ++l) {
        const OverloadMap m = line_overload_map(c, flows, l, Side::upper);
        lp.add_row(m.coef_p, RowSense::less_equal, c.lines[l].flow_limit - m.offset);
        lp.add_row(m.coef_p, RowSense::greater_equal, -c.lines[l].flow_limit - m.offset);
      }
    }
    const LpResult r = lp.solve();
    if (r.status == LpStatus::optimal) dispatch = r.x;
  }
  if (!dispatch) return std::nullopt;
  DecisionVector d;
  d.p = *dispatch;
  d.alpha = Vector::Zero(G);
  int active = 0;
  for (int g = 0; g < G; ++g) active += c.generators[g].p_max > 0.0;
  for (int g = 0; g < G; ++g) {
    d.alpha(g) = active > 0 ? (c.generators[g].p_max > 0.0 ? 1.0 / active : 0.0) : 1.0 / G;
  }
  return lay.pack(d);
}

/// Largest t in [0, 1] with g(centre + t (target - centre)) <= 0, given g(centre) < 0 < g(target).
template <typename G>
double boundary_step(G&& value_at, double g0, double g1) {
  double lo = 0.0;
  double hi = 1.0;
  double flo = g0;
  double fhi = g1;
  int side = 0;
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    // Illinois false position, bisection when the secant degenerates.
    double t = (fhi - flo) != 0.0 ? lo - flo * (hi - lo) / (fhi - flo) : 0.5 * (lo + hi);
    if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
    const double ft = value_at(t);
    if (ft <= 0.0) {
      lo = t;
      flo = ft;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      hi = t;
      fhi = ft;
      if (side == 1) flo *= 0.5;
      side = 1;
    }
  }
  return lo;
}

}  // namespace solver_detail

/// Residuals of every constraint at a decision.
inline std::vector<ConstraintResidual> evaluate_residuals(const ConstraintSystem& sys,
                                                          const std::vector<ConstraintSpec>& specs,
                                                          const DecisionVector& z, const PolicyShape& shape) {
  std::vector<ConstraintResidual> out;
  out.reserve(specs.size());
  for (const auto& s : specs) {
    const ConstraintEval e = sys.evaluate(s, z, shape);
    out.push_back({s, e.value, e.risk, e.risk - s.epsilon});
  }
  return out;
}

inline SolutionReport solve(const NetworkCase& c, const FluctuationModel& fm, Formulation formulation,
                            const PolicyShape& shape, const EpsilonBudget& budget, const SolveOptions& opts = {}) {
  using namespace solver_detail;
  const Kind kind = kind_of(formulation);
  if (kind == Kind::standard && shape.form == PolicyForm::piecewise) {
    throw ConfigError("formulation cc supports only the affine policy");
  }
  if (shape.form == PolicyForm::piecewise && !(shape.omega_minus < 0.0 && 0.0 < shape.omega_plus)) {
    throw ConfigError("piecewise policy needs omega_minus < 0 < omega_plus");
  }
  if (fm.dimension() != c.wind_count()) throw DimensionError("fluctuation model dimension differs from wind count");

  const FlowMatrix flows = build_flow_matrix(c);
  auto specs = build_constraint_set(c, kind, shape.form, budget);
  if (kind == Kind::standard) {
    for (const auto& s : specs) {
      if (s.epsilon > 0.5) throw ConfigError("cc epsilon must lie in (0, 0.5]: " + s.id());
    }
  }
  Problem prob(c, flows, fm, specs, shape, opts);
  const Layout& lay = prob.layout();
  const int n = lay.size();
  const int J = static_cast<int>(specs.size());

  SolutionReport rep;
  rep.formulation = formulation;
  rep.shape = shape;

  const auto start = deterministic_start(c, flows, lay, opts.lp);
  if (!start) {
    rep.status = SolveStatus::infeasible;
    rep.message = "deterministic constraints are infeasible";
    return rep;
  }

  // ---- Phase 1: strictly feasible centre, min t s.t. g_j(z) <= s_j t. ----
  std::vector<Cut> cuts;
  Vector centre;
  {
    Vector cost1 = Vector::Zero(n + 1);
    cost1(n) = 1.0;
    Vector lo1(n + 1);
    Vector hi1(n + 1);
    lo1 << prob.lower(), -1.0;
    hi1 << prob.upper(), 1e6;
    DualSimplex lp1(cost1, lo1, hi1, opts.lp);
    for (const auto& [row, rhs] : prob.equalities()) {
      Vector r1 = Vector::Zero(n + 1);
      r1.head(n) = row;
      lp1.add_row(r1, RowSense::equal, rhs);
    }
    std::size_t pushed = 0;
    auto push_new_cuts = [&] {
      for (; pushed < cuts.size(); ++pushed) {
        const Cut& cut = cuts[pushed];
        const double s = prob.phase1_scale(cut.constraint);
        Vector r1(n + 1);
        r1.head(n) = cut.grad / s;
        r1(n) = -1.0;
        lp1.add_row(r1, RowSense::less_equal, cut.rhs / s);
      }
    };

    Vector z = *start;
    double t_lp = -1.0;
    double best_max = std::numeric_limits<double>::infinity();
    Vector best;
    bool done = false;
    for (int it = 0; it <= opts.phase1_max_iterations; ++it) {
      double true_max = -std::numeric_limits<double>::infinity();
      std::vector<ConstraintEval> evals(J);
      for (int j = 0; j < J; ++j) {
        evals[j] = prob.eval(j, z);
        true_max = std::max(true_max, evals[j].value / prob.phase1_scale(j));
      }
      if (true_max < best_max) {
        best_max = true_max;
        best = z;
      }
      rep.phase1_iterations = it;
      if (true_max < 0.0 && (true_max <= 0.5 * t_lp || it == opts.phase1_max_iterations)) {
        done = true;
        break;
      }
      if (it == opts.phase1_max_iterations) break;
      for (int j = 0; j < J; ++j) {
        const double s = prob.phase1_scale(j);
        if (evals[j].value / s >= t_lp - 1e-12) {
          // Phase-1 cuts are stored in phase-2 form: grad'z <= grad'z_k - g.
          ConstraintEval shifted = evals[j];
          add_cut(cuts, j, shifted, lay.gradient(evals[j]), z, std::numeric_limits<double>::infinity());
        }
      }
      push_new_cuts();
      const LpResult r = lp1.solve();
      if (r.status != LpStatus::optimal) {
        rep.status = r.status == LpStatus::infeasible ? SolveStatus::infeasible : SolveStatus::iteration_limit;
        rep.message = std::string("phase-1 LP ") + to_string(r.status);
        return rep;
      }
      t_lp = r.x(n);
      if (t_lp >= 0.0) {
        rep.status = SolveStatus::infeasible;
        rep.message = "chance constraints admit no strictly feasible point";
        return rep;
      }
      z = r.x.head(n);
    }
    if (!done) {
      if (best_max < 0.0) {
        done = true;
      } else {
        rep.status = SolveStatus::iteration_limit;
        rep.message = "no strictly feasible point found";
        return rep;
      }
    }
    centre = best;
  }

  // ---- Phase 2: Kelley cuts plus supporting hyperplanes. ----
  DualSimplex lp(prob.cost(), prob.lower(), prob.upper(), opts.lp);
  for (const auto& [row, rhs] : prob.equalities()) lp.add_row(row, RowSense::equal, rhs);
  const int eq_rows = lp.row_count();
  std::size_t pushed = 0;
  auto push_cuts = [&] {
    for (; pushed < cuts.size(); ++pushed) lp.add_row(cuts[pushed].grad, RowSense::less_equal, cuts[pushed].rhs);
  };
  push_cuts();

  Vector incumbent = centre;
  double upper_bound = prob.cost().dot(centre);
  double lower_bound = -std::numeric_limits<double>::infinity();
  rep.status = SolveStatus::iteration_limit;

  for (int it = 1; it <= opts.max_iterations; ++it) {
    const LpResult r = lp.solve();
    if (r.status != LpStatus::optimal) {
      rep.status = r.status == LpStatus::infeasible ? SolveStatus::infeasible : SolveStatus::iteration_limit;
      rep.message = std::string("master LP ") + to_string(r.status);
      break;
    }
    const Vector zk = r.x;
    lower_bound = std::max(lower_bound, r.objective);

    double max_violation = -std::numeric_limits<double>::infinity();
    std::vector<double> values(J);
    for (int j = 0; j < J; ++j) {
      const ConstraintEval e = prob.eval(j, zk);
      values[j] = e.value;
      max_violation = std::max(max_violation, e.value);
      add_cut(cuts, j, e, lay.gradient(e), zk, prob.value_tolerance(j));
    }

    // An LP optimum feasible to well inside the certificate tolerance closes the gap directly.
    bool within = true;
    for (int j = 0; j < J && within; ++j) within = values[j] <= 1e-3 * prob.value_tolerance(j);
    if (within && r.objective < upper_bound) {
      upper_bound = r.objective;
      incumbent = zk;
    }

    // Line search from the centre towards the LP optimum.
    const Vector dir = zk - centre;
    double step = 1.0;
    for (int j = 0; j < J; ++j) {
      if (values[j] <= 0.0) continue;
      const double g0 = prob.eval(j, centre).value;
      const double t = boundary_step([&](double tt) { return prob.eval(j, centre + tt * dir).value; }, g0, values[j]);
      step = std::min(step, t);
    }
    const Vector boundary = centre + step * dir;
    const double boundary_cost = prob.cost().dot(boundary);
    if (boundary_cost < upper_bound) {
      upper_bound = boundary_cost;
      incumbent = boundary;
    }
    if (step < 1.0) {
      for (int j = 0; j < J; ++j) {
        const ConstraintEval e = prob.eval(j, boundary);
        if (e.value >= -prob.value_tolerance(j)) {
          add_cut(cuts, j, e, lay.gradient(e), boundary, prob.value_tolerance(j));
        }
      }
    }

    // Cap: drop the slackest cuts that are not in the working set.
    if (cuts.size() > opts.max_cuts) {
      std::vector<std::pair<double, int>> slack;
      for (int i = 0; i < static_cast<int>(pushed); ++i) {
        const int row = eq_rows + i;
        if (!lp.in_working_set(row)) slack.emplace_back(lp.row_activity(row, zk), i);
      }
      std::sort(slack.begin(), slack.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      const std::size_t excess = cuts.size() - opts.max_cuts;
      std::vector<int> drop_rows;
      std::vector<char> drop(cuts.size(), 0);
      for (std::size_t k = 0; k < std::min(excess, slack.size()); ++k) {
        drop_rows.push_back(eq_rows + slack[k].second);
        drop[slack[k].second] = 1;
      }
      lp.remove_rows(drop_rows);
      std::vector<Cut> kept;
      std::size_t kept_pushed = 0;
      for (std::size_t i = 0; i < cuts.size(); ++i) {
        if (drop[i]) continue;
        if (i < pushed) ++kept_pushed;
        kept.push_back(std::move(cuts[i]));
      }
      cuts = std::move(kept);
      pushed = kept_pushed;
    }
    push_cuts();

    const double gap = (upper_bound - lower_bound) / std::max(std::abs(lower_bound), 1.0);
    rep.log.push_back({it, lower_bound, upper_bound, max_violation, static_cast<int>(cuts.size())});
    rep.iterations = it;
    rep.gap = gap;
    if (gap <= opts.objective_rel_tol) {
      rep.status = SolveStatus::optimal;
      break;
    }
  }

  // Convex combinations can leave bound roundoff such as alpha = -1e-16.
  incumbent = incumbent.cwiseMax(prob.lower()).cwiseMin(prob.upper());
  rep.decision = lay.unpack(incumbent);
  rep.objective = prob.cost().dot(incumbent);
  rep.lower_bound = lower_bound;
  rep.constraints = evaluate_residuals(prob.system(), specs, rep.decision, shape);
  if (rep.status == SolveStatus::optimal) {
    for (const auto& res : rep.constraints) {
      if (res.residual > residual_tolerance(opts, res.spec.kind)) {
        rep.message = "residual above tolerance at " + res.spec.id();
      }
    }
  }
  return rep;
}

}  // namespace wccopf
