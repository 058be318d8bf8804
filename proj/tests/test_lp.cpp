#include <gtest/gtest.h>

#include <optional>
#include <random>
#include <vector>

#include "wccopf/lp.hpp"

using namespace wccopf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LpData {
  MatrixXd A;
  VectorXd b;
  std::vector<RowSense> sense;
  VectorXd c;
  VectorXd lo;
  VectorXd hi;
};

// Minimum over all vertices of the (bounded) feasible region, found by
// enumerating every n-subset of constraints written as a'x <= b.
std::optional<double> vertex_enumeration(const LpData& lp) {
  const int n = static_cast<int>(lp.c.size());
  std::vector<VectorXd> rows;
  std::vector<double> rhs;
  for (int i = 0; i < lp.A.rows(); ++i) {
    if (lp.sense[i] != RowSense::greater_equal) {
      rows.push_back(lp.A.row(i).transpose());
      rhs.push_back(lp.b(i));
    }
    if (lp.sense[i] != RowSense::less_equal) {
      rows.push_back(-lp.A.row(i).transpose());
      rhs.push_back(-lp.b(i));
    }
  }
  for (int j = 0; j < n; ++j) {
    rows.push_back(VectorXd::Unit(n, j));
    rhs.push_back(lp.hi(j));
    rows.push_back(-VectorXd::Unit(n, j));
    rhs.push_back(-lp.lo(j));
  }
  const int k = static_cast<int>(rows.size());
  std::optional<double> best;
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = i;
  while (true) {
    MatrixXd m(n, n);
    VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      m.row(i) = rows[pick[i]].transpose();
      r(i) = rhs[pick[i]];
    }
    Eigen::FullPivLU<MatrixXd> lu(m);
    if (lu.rank() == n) {
      const VectorXd x = lu.solve(r);
      bool feasible = true;
      for (int i = 0; i < k && feasible; ++i) feasible = rows[i].dot(x) <= rhs[i] + 1e-9 * (1.0 + std::abs(rhs[i]));
      if (feasible && (!best || lp.c.dot(x) < *best)) best = lp.c.dot(x);
    }
    int i = n - 1;
    while (i >= 0 && pick[i] == k - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

LpData random_lp(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LpData lp;
  lp.c = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return nd(rng); });
  lp.lo = VectorXd::Constant(n, -10.0);
  lp.hi = VectorXd::Constant(n, 10.0);
  lp.A = MatrixXd::NullaryExpr(m, n, [&](Eigen::Index, Eigen::Index) { return nd(rng); });
  lp.b.resize(m);
  const VectorXd x0 = VectorXd::NullaryExpr(n, [&](Eigen::Index) { return 4.0 * nd(rng); });
  for (int i = 0; i < m; ++i) {
    const double u = unit(rng);
    lp.sense.push_back(u < 0.45 ? RowSense::less_equal : u < 0.9 ? RowSense::greater_equal : RowSense::equal);
    const double act = lp.A.row(i).dot(x0);
    // Mostly satisfied at x0; occasionally shifted so the system may be infeasible.
    const double slack = unit(rng) < 0.9 ? 3.0 * unit(rng) : -5.0 * unit(rng);
    if (lp.sense[i] == RowSense::less_equal) lp.b(i) = act + slack;
    if (lp.sense[i] == RowSense::greater_equal) lp.b(i) = act - slack;
    if (lp.sense[i] == RowSense::equal) lp.b(i) = act;
  }
  return lp;
}

LpResult solve(const LpData& lp) { return lp_solve(lp.A, lp.b, lp.sense, lp.c, lp.lo, lp.hi); }

}  // namespace

TEST(Lp, SingleLowerRow) {
  MatrixXd A(1, 1);
  A << 1.0;
  const LpResult r = lp_solve(A, VectorXd::Constant(1, 3.0), {RowSense::greater_equal}, VectorXd::Ones(1),
                              VectorXd::Zero(1), VectorXd::Constant(1, 10.0));
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x(0), 3.0, 1e-12);
  EXPECT_NEAR(r.objective, 3.0, 1e-12);
  EXPECT_NEAR(r.row_duals(0), -1.0, 1e-12);
}

TEST(Lp, EqualitiesFixTheVertex) {
  MatrixXd A(2, 2);
  A << 1.0, 1.0, 1.0, -1.0;
  const VectorXd inf = VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  const LpResult r = lp_solve(A, (VectorXd(2) << 4.0, 2.0).finished(), {RowSense::equal, RowSense::equal},
                              (VectorXd(2) << 1.0, 2.0).finished(), -inf, inf);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x(0), 3.0, 1e-12);
  EXPECT_NEAR(r.x(1), 1.0, 1e-12);
}

TEST(Lp, InfeasibleRows) {
  MatrixXd A(2, 1);
  A << 1.0, 1.0;
  const LpResult r = lp_solve(A, (VectorXd(2) << 1.0, 2.0).finished(), {RowSense::less_equal, RowSense::greater_equal},
                              VectorXd::Ones(1), VectorXd::Constant(1, -5.0), VectorXd::Constant(1, 5.0));
  EXPECT_EQ(r.status, LpStatus::infeasible);
}

TEST(Lp, ZeroRowWithImpossibleRhsIsInfeasible) {
  MatrixXd A = MatrixXd::Zero(1, 2);
  const LpResult r = lp_solve(A, VectorXd::Constant(1, -1.0), {RowSense::less_equal}, VectorXd::Ones(2),
                              VectorXd::Zero(2), VectorXd::Ones(2));
  EXPECT_EQ(r.status, LpStatus::infeasible);
}

TEST(Lp, UnboundedDirection) {
  const VectorXd inf = VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  MatrixXd A(1, 2);
  A << 1.0, -1.0;
  const LpResult r = lp_solve(A, VectorXd::Zero(1), {RowSense::less_equal}, (VectorXd(2) << -1.0, -1.0).finished(),
                              VectorXd::Zero(2), inf);
  EXPECT_EQ(r.status, LpStatus::unbounded);
}

TEST(Lp, RejectsBadInput) {
  EXPECT_THROW(DualSimplex(VectorXd::Ones(2), VectorXd::Zero(3), VectorXd::Ones(2)), DimensionError);
  EXPECT_THROW(DualSimplex(VectorXd::Ones(1), VectorXd::Ones(1), VectorXd::Zero(1)), DomainError);
  DualSimplex lp(VectorXd::Ones(2), VectorXd::Zero(2), VectorXd::Ones(2));
  EXPECT_THROW(lp.add_row(VectorXd::Ones(3), RowSense::less_equal, 1.0), DimensionError);
  EXPECT_THROW(lp.add_row(VectorXd::Ones(2), RowSense::less_equal, std::nan("")), DomainError);
}

TEST(Lp, MatchesVertexEnumerationOnRandomPrograms) {
  std::mt19937_64 rng(77);
  int infeasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 3;
    const LpData lp = random_lp(rng, n, 3 + trial % 5);
    const std::optional<double> oracle = vertex_enumeration(lp);
    const LpResult r = solve(lp);
    EXPECT_EQ(r.blocked_rows, 0);
    if (!oracle) {
      ++infeasible;
      EXPECT_EQ(r.status, LpStatus::infeasible) << trial;
      continue;
    }
    ASSERT_EQ(r.status, LpStatus::optimal) << trial;
    EXPECT_NEAR(r.objective, *oracle, 1e-9 * std::max(1.0, std::abs(*oracle))) << trial;
    // Primal feasibility of the returned point.
    for (int i = 0; i < lp.A.rows(); ++i) {
      const double act = lp.A.row(i).dot(r.x);
      if (lp.sense[i] != RowSense::greater_equal) {
        EXPECT_LE(act, lp.b(i) + 1e-8);
      }
      if (lp.sense[i] != RowSense::less_equal) {
        EXPECT_GE(act, lp.b(i) - 1e-8);
      }
    }
    EXPECT_TRUE((r.x.array() >= lp.lo.array() - 1e-9).all());
    EXPECT_TRUE((r.x.array() <= lp.hi.array() + 1e-9).all());
  }
  EXPECT_GT(infeasible, 0);
}

TEST(Lp, DualsSatisfyComplementarityAndSigns) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const LpData lp = random_lp(rng, 3, 6);
    const LpResult r = solve(lp);
    if (r.status != LpStatus::optimal) continue;
    for (int i = 0; i < lp.A.rows(); ++i) {
      const double slack = lp.A.row(i).dot(r.x) - lp.b(i);
      if (std::abs(slack) > 1e-7) {
        EXPECT_NEAR(r.row_duals(i), 0.0, 1e-12);
      }
      if (lp.sense[i] == RowSense::less_equal) {
        EXPECT_GE(r.row_duals(i), -1e-12);
      }
      if (lp.sense[i] == RowSense::greater_equal) {
        EXPECT_LE(r.row_duals(i), 1e-12);
      }
    }
  }
}

TEST(Lp, WarmStartAfterAddingRowsMatchesColdSolve) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    LpData lp = random_lp(rng, 3, 4);
    DualSimplex warm(lp.c, lp.lo, lp.hi);
    for (int i = 0; i < lp.A.rows(); ++i) warm.add_row(lp.A.row(i).transpose(), lp.sense[i], lp.b(i));
    const LpResult first = warm.solve();
    if (first.status != LpStatus::optimal) continue;
    // A cut through the current optimum.
    const VectorXd a = VectorXd::NullaryExpr(3, [&](Eigen::Index) { return std::normal_distribution<double>()(rng); });
    const double rhs = a.dot(first.x) - 0.5;
    warm.add_row(a, RowSense::less_equal, rhs);
    const LpResult second = warm.solve();

    lp.A.conservativeResize(lp.A.rows() + 1, Eigen::NoChange);
    lp.A.row(lp.A.rows() - 1) = a.transpose();
    lp.b.conservativeResize(lp.b.size() + 1);
    lp.b(lp.b.size() - 1) = rhs;
    lp.sense.push_back(RowSense::less_equal);
    const LpResult cold = solve(lp);
    ASSERT_EQ(second.status, cold.status) << trial;
    if (cold.status == LpStatus::optimal) {
      EXPECT_NEAR(second.objective, cold.objective, 1e-9 * std::max(1.0, std::abs(cold.objective)));
      EXPECT_GE(second.objective, first.objective - 1e-9);
    }
  }
}

TEST(Lp, RemovingInactiveRowsKeepsTheOptimum) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const LpData lp = random_lp(rng, 3, 8);
    DualSimplex s(lp.c, lp.lo, lp.hi);
    for (int i = 0; i < lp.A.rows(); ++i) s.add_row(lp.A.row(i).transpose(), lp.sense[i], lp.b(i));
    const LpResult before = s.solve();
    if (before.status != LpStatus::optimal) continue;
    std::vector<int> inactive;
    for (int i = 0; i < s.row_count(); ++i)
      if (!s.in_working_set(i)) inactive.push_back(i);
    const std::vector<int> map = s.remove_rows(inactive);
    EXPECT_EQ(s.row_count(), lp.A.rows() - static_cast<int>(inactive.size()));
    for (int r : inactive) EXPECT_EQ(map[r], -1);
    const LpResult after = s.solve();
    ASSERT_EQ(after.status, LpStatus::optimal);
    EXPECT_NEAR(after.objective, before.objective, 1e-9 * std::max(1.0, std::abs(before.objective)));
  }
}

TEST(Lp, DegenerateDuplicateRowsTerminate) {
  // Many copies of the same facets through one vertex.
  const int n = 3;
  DualSimplex s(VectorXd::Ones(n), VectorXd::Constant(n, -100.0), VectorXd::Constant(n, 100.0));
  for (int k = 0; k < 40; ++k) {
    for (int j = 0; j < n; ++j) s.add_row(VectorXd::Unit(n, j), RowSense::greater_equal, 1.0);
    s.add_row(VectorXd::Ones(n), RowSense::greater_equal, 3.0);
  }
  const LpResult r = s.solve();
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.objective, 3.0, 1e-10);
}

TEST(Lp, NearlyParallelCutsStayFinite) {
  // Tangent cuts of a circle at closely spaced angles, as produced by cutting planes.
  DualSimplex s((VectorXd(2) << 1.0, 1.0).finished(), VectorXd::Constant(2, -10.0), VectorXd::Constant(2, 10.0));
  LpResult r;
  for (int k = 0; k < 400; ++k) {
    const double th = M_PI + M_PI / 4.0 + 1e-9 * (k % 7) + 1e-4 * std::sin(k);
    const VectorXd a = (VectorXd(2) << std::cos(th), std::sin(th)).finished();
    s.add_row(a, RowSense::less_equal, 1.0);
    r = s.solve();
    ASSERT_EQ(r.status, LpStatus::optimal) << k;
    ASSERT_TRUE(r.x.allFinite()) << k;
  }
  EXPECT_NEAR(r.objective, -std::sqrt(2.0), 1e-3);
}
