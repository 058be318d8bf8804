#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "wccopf/solver.hpp"

using namespace wccopf;
using testing_support::data_path;

namespace {

const EpsilonBudget kCcBudget{0.1, 0.01, {}};
const EpsilonBudget kLinearBudget{0.05, 0.001, {}};
const EpsilonBudget kQuadraticBudget{0.5, 0.01, {}};

NetworkCase toy() { return load_case(data_path("toy3.json")); }
FluctuationModel toy_fm() { return FluctuationModel::from_std({10.0}, 0.0); }

PolicyShape piecewise_shape(const FluctuationModel& fm) {
  return {PolicyForm::piecewise, 1.5 * fm.total_std(), -1.5 * fm.total_std()};
}

void expect_certificate(const NetworkCase& c, const SolutionReport& r, const SolveOptions& opts = {}) {
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.message;
  EXPECT_LE(r.gap, opts.objective_rel_tol);
  EXPECT_LE(r.lower_bound, r.objective + 1e-9 * std::abs(r.objective));
  EXPECT_TRUE(r.message.empty()) << r.message;
  for (const auto& res : r.constraints) {
    EXPECT_LE(res.residual, residual_tolerance(opts, res.spec.kind)) << res.spec.id();
  }
  const DecisionVector& z = r.decision;
  EXPECT_NEAR(z.p.sum(), c.total_demand() - c.total_forecast(), 1e-8);
  EXPECT_NEAR(z.alpha.sum(), 1.0, 1e-8);
  EXPECT_TRUE((z.alpha.array() >= 0.0).all());
  if (r.shape.form == PolicyForm::piecewise) {
    EXPECT_NEAR(z.beta_plus.sum(), 0.0, 1e-8);
    EXPECT_NEAR(z.beta_minus.sum(), 0.0, 1e-8);
  }
}

}  // namespace

TEST(Solver, UncongestedCaseUsesCheapestGenerator) {
  NetworkCase c;
  c.bus_count = 2;
  c.slack_bus = 0;
  c.lines.push_back({0, 1, 10.0, 1e4});
  c.generators.push_back({0, 10.0, 0.0, 500.0});
  c.generators.push_back({1, 30.0, 0.0, 500.0});
  c.wind.push_back({1, 20.0});
  c.demand = Vector::Zero(2);
  c.demand(1) = 100.0;
  const SolutionReport r = solve(c, FluctuationModel::from_std({5.0}, 0.0), Formulation::cc, {}, kCcBudget);
  expect_certificate(c, r);
  EXPECT_NEAR(r.decision.p(0), 80.0, 1e-3);
  EXPECT_NEAR(r.objective, 800.0, 1e-3);
}

TEST(Solver, ToyCcBindsLineOneAtTenPercent) {
  const NetworkCase c = toy();
  const SolutionReport r = solve(c, toy_fm(), Formulation::cc, {}, kCcBudget);
  expect_certificate(c, r);
  double worst = 0.0;
  std::string id;
  for (const auto& res : r.constraints) {
    if (res.risk > worst) {
      worst = res.risk;
      id = res.spec.id();
    }
  }
  EXPECT_EQ(id, "line1_upper");
  EXPECT_NEAR(worst, 0.1, 1e-5);
}

TEST(Solver, EveryFormulationAndPolicyCertifies) {
  const NetworkCase c = toy();
  const auto fm = toy_fm();
  expect_certificate(c, solve(c, fm, Formulation::wcc_linear, {}, kLinearBudget));
  expect_certificate(c, solve(c, fm, Formulation::wcc_quadratic, {}, kQuadraticBudget));
  expect_certificate(c, solve(c, fm, Formulation::wcc_linear, piecewise_shape(fm), kLinearBudget));
  expect_certificate(c, solve(c, fm, Formulation::wcc_quadratic, piecewise_shape(fm), kQuadraticBudget));
}

TEST(Solver, PiecewiseIsNeverCostlierThanAffine) {
  const NetworkCase c = toy();
  const auto fm = toy_fm();
  for (Formulation f : {Formulation::wcc_linear, Formulation::wcc_quadratic}) {
    const EpsilonBudget& b = f == Formulation::wcc_linear ? kLinearBudget : kQuadraticBudget;
    const SolutionReport aff = solve(c, fm, f, {}, b);
    const SolutionReport pw = solve(c, fm, f, piecewise_shape(fm), b);
    ASSERT_EQ(aff.status, SolveStatus::optimal);
    ASSERT_EQ(pw.status, SolveStatus::optimal);
    EXPECT_LE(pw.objective, aff.objective + 1e-6 * std::abs(aff.objective)) << to_string(f);
  }
}

TEST(Solver, TighterBudgetNeverCheaper) {
  const NetworkCase c = toy();
  const auto fm = toy_fm();
  double prev = -1.0;
  for (double eps : {0.3, 0.1, 0.03, 0.01}) {
    const SolutionReport r = solve(c, fm, Formulation::wcc_linear, {}, EpsilonBudget{eps, 0.001, {}});
    ASSERT_EQ(r.status, SolveStatus::optimal);
    EXPECT_GE(r.objective, prev - 1e-6 * std::abs(r.objective));
    prev = r.objective;
  }
}

TEST(Solver, BoundsAreMonotoneAcrossIterations) {
  const NetworkCase c = toy();
  const SolutionReport r = solve(c, toy_fm(), Formulation::wcc_quadratic, {}, kQuadraticBudget);
  ASSERT_FALSE(r.log.empty());
  for (std::size_t i = 1; i < r.log.size(); ++i) {
    EXPECT_GE(r.log[i].lower_bound, r.log[i - 1].lower_bound);
    EXPECT_LE(r.log[i].upper_bound, r.log[i - 1].upper_bound);
  }
  EXPECT_LE(r.log.back().lower_bound, r.log.back().upper_bound);
}

TEST(Solver, DeterministicForIdenticalInput) {
  const NetworkCase c = toy();
  const auto fm = toy_fm();
  const SolutionReport a = solve(c, fm, Formulation::wcc_linear, piecewise_shape(fm), kLinearBudget);
  const SolutionReport b = solve(c, fm, Formulation::wcc_linear, piecewise_shape(fm), kLinearBudget);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(testing_support::stack(a.decision), testing_support::stack(b.decision));
}

TEST(Solver, InsufficientCapacityIsInfeasible) {
  NetworkCase c = toy();
  c.demand(1) = 600.0;
  const SolutionReport r = solve(c, toy_fm(), Formulation::cc, {}, kCcBudget);
  EXPECT_EQ(r.status, SolveStatus::infeasible);
}

TEST(Solver, UnreachableRiskBudgetIsInfeasible) {
  NetworkCase c = toy();
  // Line 1 carries wind fluctuation whatever the dispatch; a 1 MW limit cannot hold.
  c.lines[1].flow_limit = 1.0;
  const SolutionReport r = solve(c, toy_fm(), Formulation::cc, {}, kCcBudget);
  EXPECT_EQ(r.status, SolveStatus::infeasible) << r.message;
}

TEST(Solver, RejectsUnsupportedConfigurations) {
  const NetworkCase c = toy();
  const auto fm = toy_fm();
  EXPECT_THROW(solve(c, fm, Formulation::cc, piecewise_shape(fm), kCcBudget), ConfigError);
  EXPECT_THROW(solve(c, fm, Formulation::wcc_linear, {PolicyForm::piecewise, 5.0, 2.0}, kLinearBudget), ConfigError);
  EXPECT_THROW(solve(c, fm, Formulation::cc, {}, EpsilonBudget{0.6, 0.01, {}}), ConfigError);
  EXPECT_THROW(solve(c, FluctuationModel::from_std({1.0, 1.0}, 0.0), Formulation::cc, {}, kCcBudget), DimensionError);
}

TEST(Solver, SmallCutCapStillConverges) {
  const NetworkCase c = toy();
  SolveOptions opts;
  opts.max_cuts = 40;
  const SolutionReport r = solve(c, toy_fm(), Formulation::wcc_linear, {}, kLinearBudget, opts);
  expect_certificate(c, r, opts);
  const SolutionReport full = solve(c, toy_fm(), Formulation::wcc_linear, {}, kLinearBudget);
  EXPECT_NEAR(r.objective, full.objective, 2e-6 * std::abs(full.objective));
}

TEST(Cuts, SkipFeasibleAndDuplicateLinearisations) {
  std::vector<Cut> cuts;
  ConstraintEval e;
  e.value = -1.0;
  const Vector g = (Vector(2) << 1.0, 2.0).finished();
  const Vector at = (Vector(2) << 3.0, 4.0).finished();
  EXPECT_FALSE(add_cut(cuts, 0, e, g, at, 1e-3));
  e.value = 0.5;
  EXPECT_TRUE(add_cut(cuts, 0, e, g, at, 1e-3));
  EXPECT_DOUBLE_EQ(cuts[0].rhs, g.dot(at) - 0.5);
  EXPECT_FALSE(add_cut(cuts, 0, e, g, at, 1e-3));
  ConstraintEval scaled = e;
  scaled.value = 1.0;
  EXPECT_FALSE(add_cut(cuts, 0, scaled, 2.0 * g, at, 1e-3));
  EXPECT_TRUE(add_cut(cuts, 1, e, g, at, 1e-3));
  e.value = std::nan("");
  EXPECT_THROW(add_cut(cuts, 0, e, g, at, 1e-3), NumericalError);
}

TEST(Cuts, LinearisationsUnderestimateEveryConstraint) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (PolicyForm form : {PolicyForm::affine, PolicyForm::piecewise}) {
    for (Kind kind : {Kind::standard, Kind::linear, Kind::quadratic}) {
      if (form == PolicyForm::piecewise && kind == Kind::standard) continue;
      for (int trial = 0; trial < 5; ++trial) {
        const auto d = testing_support::random_desk_instance(rng, form);
        const ConstraintSystem sys(d.c, d.flows, d.fm);
        const EpsilonBudget b{kind == Kind::standard ? 0.1 : 1.0, kind == Kind::standard ? 0.1 : 1.0, {}};
        for (const auto& spec : build_constraint_set(d.c, kind, form, b)) {
          std::vector<Cut> cuts;
          const Vector x = testing_support::stack(d.z);
          const ConstraintEval e = sys.evaluate(spec, d.z, d.shape);
          add_cut(cuts, 0, e, testing_support::stacked_grad(e), x, std::numeric_limits<double>::infinity());
          ASSERT_EQ(cuts.size(), 1u);
          for (int k = 0; k < 10; ++k) {
            Vector y = x;
            for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += (unit(rng) - 0.5) * (i < d.z.p.size() ? 60.0 : 0.8);
            const double v = sys.evaluate(spec, testing_support::unstack(y, d.z), d.shape).value;
            const double cut = cuts[0].grad.dot(y) - cuts[0].rhs;
            EXPECT_LE(cut, v + 1e-9 * std::max(1.0, std::abs(v))) << spec.id();
          }
        }
      }
    }
  }
}

TEST(BoundaryStep, FindsRootOfMonotoneFunction) {
  const double t = solver_detail::boundary_step([](double s) { return std::exp(3.0 * s) - 2.0; }, -1.0, std::exp(3.0) - 2.0);
  EXPECT_NEAR(t, std::log(2.0) / 3.0, 1e-12);
  EXPECT_LE(std::exp(3.0 * t) - 2.0, 0.0);
}
