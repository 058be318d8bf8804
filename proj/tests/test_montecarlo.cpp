#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"
#include "wccopf/montecarlo.hpp"
#include "wccopf/solver.hpp"

using namespace wccopf;
using testing_support::data_path;

namespace {

NetworkCase toy() { return load_case(data_path("toy3.json")); }

int csv_rows(const std::string& text) {
  int n = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) ++n;
  return n - 1;  // header
}

ViolationReport toy_report(const std::string& label, double objective) {
  const NetworkCase c = toy();
  const FlowMatrix flows = build_flow_matrix(c);
  const auto fm = FluctuationModel::from_std({10.0}, 0.0);
  ValidationConfig cfg;
  cfg.sample_count = 2000;
  ViolationReport r = validate(c, flows, AffinePolicy{Vector::Constant(2, 85.0), Vector::Constant(2, 0.5)}, fm, cfg);
  r.formulation = label;
  r.policy = "affine";
  r.objective = objective;
  return r;
}

}  // namespace

TEST(Rng, SplitMixReferenceValue) {
  // First output of the reference splitmix64 stream seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_NE(block_seed(42, 0), block_seed(42, 1));
  EXPECT_NE(block_seed(42, 0), block_seed(43, 0));
}

TEST(Rng, OpenUniformExcludesEndpoints) {
  EXPECT_GT(open_uniform(0), 0.0);
  EXPECT_LT(open_uniform(~0ULL), 1.0);
  EXPECT_NEAR(open_uniform(1ULL << 63), 0.5, 1e-15);
}

TEST(Sampling, ZeroCovarianceGivesZeroDeviations) {
  const FluctuationModel fm(Matrix::Zero(2, 2));
  EXPECT_TRUE(sample_fluctuations(fm, 100, 1).isZero(0.0));
}

TEST(Sampling, SampleCovarianceMatchesModel) {
  const auto fm = FluctuationModel::from_std({9.4, 13.1, 5.0}, 0.3);
  const Matrix s = sample_fluctuations(fm, 1000000, 7);
  const Matrix centered = s.rowwise() - s.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(s.rows() - 1);
  EXPECT_LE((cov - fm.covariance()).norm(), 0.05 * fm.covariance().norm());
  EXPECT_LE(s.colwise().mean().cwiseAbs().maxCoeff(), 0.1);
}

TEST(Sampling, PerfectlyCorrelatedSourcesUseEigenFactor) {
  const auto fm = FluctuationModel::from_std({3.0, 4.0}, 1.0);
  const Matrix f = covariance_factor(fm);
  EXPECT_TRUE((f * f.transpose()).isApprox(fm.covariance(), 1e-10));
  const Matrix s = sample_fluctuations(fm, 1000, 3);
  for (int i = 0; i < s.rows(); ++i) EXPECT_NEAR(s(i, 1), 4.0 / 3.0 * s(i, 0), 1e-9);
}

TEST(Sampling, SameSeedSameStreamAndSlicesAgree) {
  const auto fm = FluctuationModel::from_std({2.0, 5.0}, 0.1);
  EXPECT_EQ(sample_fluctuations(fm, 9000, 42), sample_fluctuations(fm, 9000, 42));
  EXPECT_NE(sample_fluctuations(fm, 10, 42), sample_fluctuations(fm, 10, 43));
  const Matrix all = standard_normals(2, 0, 9000, 42);
  EXPECT_EQ(standard_normals(2, 4000, 1000, 42), all.middleRows(4000, 1000));
  EXPECT_THROW(sample_fluctuations(fm, -1, 1), DomainError);
}

TEST(Validation, ConfigChecks) {
  ValidationConfig cfg;
  cfg.thresholds = {0.0, 5.0, 5.0};
  EXPECT_THROW(cfg.check(), ConfigError);
  cfg.thresholds = {};
  EXPECT_THROW(cfg.check(), ConfigError);
  cfg.thresholds = {0.0};
  cfg.sample_count = 0;
  EXPECT_THROW(cfg.check(), ConfigError);
}

TEST(Validation, EmpiricalRiskIsMonotoneInThreshold) {
  const ViolationReport r = toy_report("x", 0.0);
  for (const auto& c : r.constraints) {
    for (std::size_t t = 1; t < c.epsilon_e.size(); ++t) EXPECT_LE(c.epsilon_e[t], c.epsilon_e[t - 1]) << c.id;
    EXPECT_GE(c.mean_overload, 0.0);
  }
}

TEST(Validation, NoViolationsUnderHugeLimits) {
  NetworkCase c = toy();
  for (auto& l : c.lines) l.flow_limit = 1e6;
  for (auto& g : c.generators) g.p_max = 1e6;
  const FlowMatrix flows = build_flow_matrix(c);
  const ViolationReport r = validate(c, flows, AffinePolicy{Vector::Constant(2, 85.0), Vector::Constant(2, 0.5)},
                                     FluctuationModel::from_std({10.0}, 0.0), ValidationConfig{});
  for (const auto& s : r.constraints) {
    for (double e : s.epsilon_e) EXPECT_EQ(e, 0.0) << s.id;
    EXPECT_LT(s.max_overload, 0.0);
  }
}

TEST(Validation, StrictThresholdComparison) {
  // Generator 0 output 100 - 0 * Omega = exactly p_max: y = 0 is not a violation.
  NetworkCase c = toy();
  c.generators[0].p_max = 100.0;
  const FlowMatrix flows = build_flow_matrix(c);
  ValidationConfig cfg;
  cfg.sample_count = 500;
  const ViolationReport r =
      validate(c, flows, AffinePolicy{(Vector(2) << 100.0, 70.0).finished(), (Vector(2) << 0.0, 1.0).finished()},
               FluctuationModel::from_std({10.0}, 0.0), cfg);
  EXPECT_EQ(r.find("gen0_upper").epsilon_e[0], 0.0);
  EXPECT_EQ(r.find("gen0_upper").max_overload, 0.0);
}

TEST(Validation, AffineRatesAgreeWithGaussianTails) {
  const NetworkCase c = toy();
  const FlowMatrix flows = build_flow_matrix(c);
  const auto fm = FluctuationModel::from_std({10.0}, 0.0);
  const DecisionVector z{(Vector(2) << 120.0, 50.0).finished(), (Vector(2) << 0.3, 0.7).finished(), {}, {}};
  ValidationConfig cfg;
  cfg.sample_count = 100000;
  const ViolationReport r = validate(c, flows, z, {}, fm, cfg);
  const ConstraintSystem sys(c, flows, fm);
  for (const auto& spec : build_constraint_set(c, Kind::linear, PolicyForm::affine, EpsilonBudget{1.0, 1.0, {}})) {
    const Gauss1D g = sys.moments(spec, z);
    const ConstraintStats& st = r.find(spec.id());
    const double p = g.sigma > 0.0 ? std_cdf(g.mu / g.sigma) : (g.mu > 0.0 ? 1.0 : 0.0);
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / cfg.sample_count);
    EXPECT_NEAR(st.epsilon_e[0], p, 4.0 * se + 1e-5) << spec.id();
    // Moment comparisons need enough violating samples for the sample spread to mean anything.
    if (p * cfg.sample_count < 20.0) continue;
    EXPECT_NEAR(st.mean_overload, trunc_mean(g), 4.0 * st.std_overload / std::sqrt(cfg.sample_count) + 1e-9)
        << spec.id();
    EXPECT_NEAR(st.mean_sq_overload, trunc_second_moment(g),
                4.0 * st.std_sq_overload / std::sqrt(cfg.sample_count) + 1e-9)
        << spec.id();
  }
  EXPECT_NEAR(r.cost_mean, c.costs().dot(z.p), 4.0 * r.cost_std / std::sqrt(cfg.sample_count));
  EXPECT_DOUBLE_EQ(r.objective, c.costs().dot(z.p));
  EXPECT_EQ(r.policy, "affine");
}

TEST(Validation, CcSolutionCalibratesAtTheBindingLine) {
  const NetworkCase c = toy();
  const auto fm = FluctuationModel::from_std({10.0}, 0.0);
  const SolutionReport s = solve(c, fm, Formulation::cc, {}, EpsilonBudget{0.1, 0.01, {}});
  ASSERT_EQ(s.status, SolveStatus::optimal);
  const ViolationReport r = validate(c, build_flow_matrix(c), s.decision, s.shape, fm, ValidationConfig{});
  EXPECT_NEAR(r.find("line1_upper").epsilon_e[0], 0.1, 0.009);
}

TEST(Export, CsvHasOneRowPerConstraintAndThreshold) {
  const NetworkCase c = toy();
  ValidationConfig cfg;
  cfg.sample_count = 100;
  cfg.thresholds = {0.0, 5.0};
  const ViolationReport r = validate(c, build_flow_matrix(c), AffinePolicy{Vector::Constant(2, 85.0), Vector::Constant(2, 0.5)},
                                     FluctuationModel::from_std({10.0}, 0.0), cfg);
  const int constraints = 2 * (c.gen_count() + c.line_count());
  EXPECT_EQ(csv_rows(report_csv(r)), 2 * constraints);
  EXPECT_EQ(csv_rows(threshold_chart_csv(r)), 2 * c.line_count());
  EXPECT_EQ(report_csv(r), report_csv(r));
}

TEST(Export, ChartCombinesBothDirections) {
  ViolationReport r;
  r.formulation = "cc";
  r.policy = "affine";
  r.thresholds = {0.0};
  ConstraintStats up{"line0_upper", TargetType::line, 0, Side::upper, {0.25}};
  ConstraintStats lo{"line0_lower", TargetType::line, 0, Side::lower, {0.125}};
  r.constraints = {up, lo};
  EXPECT_EQ(threshold_chart_csv(r), "line,formulation,policy,threshold_mw,epsilon_e\n0,cc,affine,0,0.375\n");
}

TEST(Export, JsonRoundTripPreservesReport) {
  const ViolationReport r = toy_report("wcc-linear", 1234.5);
  const ViolationReport back = report_from_json(nlohmann::json::parse(report_to_json(r).dump()));
  EXPECT_EQ(back.formulation, r.formulation);
  EXPECT_EQ(back.thresholds, r.thresholds);
  ASSERT_EQ(back.constraints.size(), r.constraints.size());
  for (std::size_t i = 0; i < r.constraints.size(); ++i) {
    EXPECT_EQ(back.constraints[i].id, r.constraints[i].id);
    EXPECT_EQ(back.constraints[i].epsilon_e, r.constraints[i].epsilon_e);
    EXPECT_EQ(back.constraints[i].max_overload, r.constraints[i].max_overload);
  }
  EXPECT_EQ(report_csv(back), report_csv(r));
  EXPECT_THROW(report_from_json(nlohmann::json::parse("{\"formulation\": 1}")), ParseError);
}

TEST(Compare, CostDeltaFormatting) {
  EXPECT_EQ(format_cost_delta(16546.0, 16547.0), "16547 (+0.01%)");
  EXPECT_EQ(format_cost_delta(16546.0, 16546.0), "16546 (+0.00%)");
  EXPECT_EQ(format_cost_delta(16546.0, 16512.9), "16513 (-0.20%)");
}

TEST(Compare, IdenticalReportsHaveZeroDeltas) {
  const ViolationReport a = toy_report("cc", 1000.0);
  const Comparison cmp = compare({a, a});
  EXPECT_EQ(cmp.cost_cells[1], "1000 (+0.00%)");
  for (const auto& row : cmp.rows) {
    EXPECT_FALSE(row.ordering_flip);
    EXPECT_EQ(row.epsilon_e[0], row.epsilon_e[1]);
  }
  EXPECT_FALSE(cmp.piecewise_not_costlier.has_value());
}

TEST(Compare, FlagsOrderingFlipsAndPolicyCosts) {
  ViolationReport a = toy_report("wcc-linear", 1000.0);
  ViolationReport b = a;
  b.policy = "piecewise";
  b.objective = 990.0;
  b.constraints[0].epsilon_e.front() += 0.05;
  b.constraints[0].epsilon_e.back() -= 0.01;
  const Comparison cmp = compare({a, b});
  EXPECT_TRUE(cmp.rows[0].ordering_flip);
  ASSERT_TRUE(cmp.piecewise_not_costlier.has_value());
  EXPECT_TRUE(*cmp.piecewise_not_costlier);
  b.objective = 1001.0;
  EXPECT_FALSE(*compare({a, b}).piecewise_not_costlier);
}

TEST(Compare, RejectsMismatchedOrTooFewReports) {
  ViolationReport a = toy_report("cc", 1.0);
  EXPECT_THROW(compare({a}), ConfigError);
  ViolationReport b = a;
  b.thresholds = {0.0, 1.0};
  EXPECT_THROW(compare({a, b}), ConfigError);
}
