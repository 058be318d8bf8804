#pragma once

// Dense dual simplex for   min c'x  s.t.  rows (<=, >=, =),  l <= x <= u.
//
// The method works on the inequality form directly: a working set of n active
// constraints defines a vertex, and the multipliers of that vertex are kept
// dual feasible. Each pivot brings the most violated constraint into the
// working set and drops the member chosen by the dual ratio test. Appending a
// row keeps the current vertex dual feasible, so re-optimisation after adding
// cutting planes continues from the previous basis. The basis matrix is only
// n x n, which suits problems with few variables and many rows.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "wccopf/errors.hpp"

namespace wccopf {

enum class RowSense { less_equal, greater_equal, equal };
enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  /// Row multipliers y with c + A'y + (bound multipliers) = 0; y >= 0 on active
  /// <= rows, y <= 0 on active >= rows, zero on inactive rows.
  Eigen::VectorXd row_duals;
  int iterations = 0;
  /// Rows skipped because entering them made the working set near-singular.
  int blocked_rows = 0;
};

struct LpOptions {
  double feasibility_tol = 1e-9;
  /// Pivots smaller than this, relative to the largest entry, are rejected.
  double pivot_tol = 1e-9;
  /// Dual feasibility slack allowed by the Harris ratio test.
  double dual_tol = 1e-10;
  /// Substitute for infinite bounds needed by the initial vertex.
  double artificial_bound = 1e9;
  int max_pivots = 200000;
  /// Consecutive zero-step pivots before switching to Bland's rule.
  int stall_limit = 50;
  /// Reciprocal condition estimate below which a pivot is undone.
  double min_rcond = 1e-13;
};

class DualSimplex {
 public:
  DualSimplex(Eigen::VectorXd cost, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
              LpOptions opts = {})
      : n_(static_cast<int>(cost.size())), cost_(std::move(cost)), opts_(opts) {
    if (lower.size() != n_ || upper.size() != n_) throw DimensionError("lp: bound sizes differ from cost size");
    if (!cost_.allFinite()) throw DomainError("lp: non-finite cost");
    // Bound constraints come first: 2j = lower, 2j + 1 = upper.
    for (int j = 0; j < n_; ++j) {
      if (lower(j) > upper(j)) throw DomainError("lp: lower bound exceeds upper bound");
      for (int side = 0; side < 2; ++side) {
        Constraint c;
        c.a = Eigen::VectorXd::Zero(n_);
        const bool is_lower = side == 0;
        const double bound = is_lower ? lower(j) : upper(j);
        c.a(j) = is_lower ? -1.0 : 1.0;
        c.artificial = !std::isfinite(bound);
        const double b = c.artificial ? (is_lower ? -opts_.artificial_bound : opts_.artificial_bound) : bound;
        c.b = is_lower ? -b : b;
        cons_.push_back(c);
      }
    }
    for (int j = 0; j < n_; ++j) {
      int pick = 2 * j;  // lower bound
      if (cost_(j) < 0.0 || (cost_(j) == 0.0 && cons_[2 * j].artificial && !cons_[2 * j + 1].artificial)) {
        pick = 2 * j + 1;
      }
      working_.push_back({pick, 1.0});
    }
  }

  int variable_count() const { return n_; }
  int row_count() const { return static_cast<int>(rows_.size()); }

  /// Appends a row and returns its index.
  int add_row(const Eigen::VectorXd& a, RowSense sense, double rhs) {
    if (a.size() != n_) throw DimensionError("lp: row size differs from variable count");
    if (!a.allFinite() || !std::isfinite(rhs)) throw DomainError("lp: non-finite row data");
    const double norm = a.norm();
    Constraint c;
    c.equality = sense == RowSense::equal;
    c.row = static_cast<int>(rows_.size());
    if (norm == 0.0) {
      const bool ok = sense == RowSense::less_equal ? rhs >= 0.0 : sense == RowSense::greater_equal ? rhs <= 0.0 : rhs == 0.0;
      if (!ok) trivially_infeasible_ = true;
      c.a = Eigen::VectorXd::Zero(n_);
      c.b = 0.0;
      c.scale = 1.0;
      c.ignored = true;
    } else {
      const double s = sense == RowSense::greater_equal ? -1.0 : 1.0;
      c.a = (s / norm) * a;
      c.b = (s / norm) * rhs;
      c.scale = s / norm;
    }
    rows_.push_back(static_cast<int>(cons_.size()));
    cons_.push_back(std::move(c));
    return c_row_last();
  }

  /// Slack b - a'x of a row at x, in the row's original scaling and <= orientation.
  double row_activity(int row, const Eigen::VectorXd& x) const {
    const Constraint& c = cons_[rows_.at(row)];
    return c.ignored ? 0.0 : (c.b - c.a.dot(x)) / std::abs(c.scale);
  }

  bool in_working_set(int row) const {
    const int id = rows_.at(row);
    return std::any_of(working_.begin(), working_.end(), [&](const Member& m) { return m.id == id; });
  }

  /// Removes rows that are not in the working set. Indices of the remaining
  /// rows are compacted; the returned vector maps old row index to new (-1 if removed).
  std::vector<int> remove_rows(const std::vector<int>& rows) {
    std::vector<char> drop(cons_.size(), 0);
    for (int r : rows) {
      if (!in_working_set(r)) drop[rows_.at(r)] = 1;
    }
    std::vector<int> id_map(cons_.size(), -1);
    std::vector<Constraint> kept;
    for (std::size_t i = 0; i < cons_.size(); ++i) {
      if (!drop[i]) {
        id_map[i] = static_cast<int>(kept.size());
        kept.push_back(std::move(cons_[i]));
      }
    }
    cons_ = std::move(kept);
    for (auto& m : working_) m.id = id_map[m.id];
    std::vector<int> row_map(rows_.size(), -1);
    std::vector<int> new_rows;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const int id = id_map[rows_[r]];
      if (id >= 0) {
        row_map[r] = static_cast<int>(new_rows.size());
        cons_[id].row = static_cast<int>(new_rows.size());
        new_rows.push_back(id);
      }
    }
    rows_ = std::move(new_rows);
    return row_map;
  }

  LpResult solve() {
    LpResult res;
    res.row_duals = Eigen::VectorXd::Zero(row_count());
    if (trivially_infeasible_) {
      res.status = LpStatus::infeasible;
      return res;
    }
    if (n_ == 0) {
      res.status = LpStatus::optimal;
      res.x = Eigen::VectorXd::Zero(0);
      return res;
    }
    int stalls = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd lambda;
    // A pivot that leaves the working matrix near-singular is undone and its
    // entering row is skipped for the rest of this solve. Skipping a row only
    // relaxes the problem.
    std::vector<char> blocked(cons_.size(), 0);
    // Last swap, undone if it leaves the basis ill-conditioned. slot < 0 means none.
    int last_slot = -1;
    Member last_previous{0, 1.0};
    int last_entered = -1;
    for (int pivot = 0;; ++pivot) {
      Eigen::MatrixXd aw(n_, n_);
      Eigen::VectorXd bw(n_);
      for (int i = 0; i < n_; ++i) {
        const Constraint& c = cons_[working_[i].id];
        aw.row(i) = working_[i].orient * c.a.transpose();
        bw(i) = working_[i].orient * c.b;
      }
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(aw);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu_t(aw.transpose());
      x = lu.solve(bw);
      lambda = -lu_t.solve(cost_);
      if (last_slot >= 0) {
        const Eigen::VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
        const bool ill = !(lu.rcond() >= opts_.min_rcond) || !(diag.minCoeff() >= opts_.min_rcond * diag.maxCoeff()) ||
                         !x.allFinite() || !lambda.allFinite();
        if (ill) {
          working_[last_slot] = last_previous;
          blocked[last_entered] = 1;
          ++res.blocked_rows;
          last_slot = -1;
          continue;
        }
      }
      last_slot = -1;
      for (int i = 0; i < n_; ++i) {
        if (!cons_[working_[i].id].equality) lambda(i) = std::max(lambda(i), 0.0);
      }
      res.iterations = pivot;
      if (pivot >= opts_.max_pivots) {
        res.status = LpStatus::iteration_limit;
        break;
      }

      // Entering constraint.
      const bool bland = stalls >= opts_.stall_limit;
      int enter = -1;
      double enter_orient = 1.0;
      double worst = 0.0;
      std::vector<char> member(cons_.size(), 0);
      for (const auto& m : working_) member[m.id] = 1;
      for (std::size_t id = 0; id < cons_.size(); ++id) {
        const Constraint& c = cons_[id];
        if (member[id] || blocked[id] || c.artificial || c.ignored) continue;
        const double r = c.a.dot(x) - c.b;
        const double tol = opts_.feasibility_tol * std::max(1.0, std::abs(c.b));
        double viol = r;
        double orient = 1.0;
        if (c.equality && r < 0.0) {
          viol = -r;
          orient = -1.0;
        }
        if (viol > tol && (viol > worst || enter < 0)) {
          if (bland && enter >= 0) continue;  // lowest index wins
          worst = viol;
          enter = static_cast<int>(id);
          enter_orient = orient;
        }
      }
      if (enter < 0) {
        res.status = LpStatus::optimal;
        for (int i = 0; i < n_; ++i) {
          if (cons_[working_[i].id].artificial && lambda(i) > 1e-9) res.status = LpStatus::unbounded;
        }
        break;
      }

      // Dual ratio test: two-pass Harris rule with a relative pivot tolerance,
      // or smallest ratio with lowest-index ties under Bland's rule.
      const Eigen::VectorXd ar = enter_orient * cons_[enter].a;
      const Eigen::VectorXd u = lu_t.solve(ar);
      const double ptol = opts_.pivot_tol * std::max(1.0, u.cwiseAbs().maxCoeff());
      int leave = -1;
      double best_t = std::numeric_limits<double>::infinity();
      if (bland) {
        for (int i = 0; i < n_; ++i) {
          if (cons_[working_[i].id].equality || u(i) <= ptol) continue;
          // Roundoff-sized multipliers count as exact ties; Bland's finiteness relies on them.
          const double t = lambda(i) <= opts_.dual_tol ? 0.0 : lambda(i) / u(i);
          if (leave < 0 || t < best_t || (t == best_t && working_[i].id < working_[leave].id)) {
            leave = i;
            best_t = t;
          }
        }
      } else {
        double bound = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n_; ++i) {
          if (cons_[working_[i].id].equality || u(i) <= ptol) continue;
          bound = std::min(bound, (lambda(i) + opts_.dual_tol) / u(i));
        }
        double best_u = 0.0;
        for (int i = 0; i < n_; ++i) {
          if (cons_[working_[i].id].equality || u(i) <= ptol) continue;
          const double t = lambda(i) / u(i);
          if (t <= bound && u(i) > best_u) {
            leave = i;
            best_u = u(i);
            best_t = t;
          }
        }
      }
      if (leave < 0) {
        res.status = LpStatus::infeasible;
        break;
      }
      stalls = best_t <= 1e-14 ? stalls + 1 : 0;
      last_slot = leave;
      last_previous = working_[leave];
      last_entered = enter;
      working_[leave] = {enter, enter_orient};
    }

    res.x = x;
    res.objective = cost_.dot(x);
    for (int i = 0; i < n_; ++i) {
      const Constraint& c = cons_[working_[i].id];
      if (c.row >= 0) res.row_duals(c.row) = lambda(i) * working_[i].orient * c.scale;
    }
    return res;
  }

 private:
  struct Constraint {
    Eigen::VectorXd a;  // normalized, <= orientation
    double b = 0.0;
    double scale = 1.0;  // stored row = scale * original row
    bool equality = false;
    bool artificial = false;
    bool ignored = false;
    int row = -1;  // user row index, -1 for bounds
  };
  struct Member {
    int id;
    double orient;
  };

  int c_row_last() const { return static_cast<int>(rows_.size()) - 1; }

  int n_;
  Eigen::VectorXd cost_;
  LpOptions opts_;
  std::vector<Constraint> cons_;
  std::vector<int> rows_;  // user row -> constraint id
  std::vector<Member> working_;
  bool trivially_infeasible_ = false;
};

/// One-shot LP solve. Rows of A with senses and right-hand sides b.
inline LpResult lp_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const std::vector<RowSense>& sense,
                         const Eigen::VectorXd& c, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                         LpOptions opts = {}) {
  if (A.rows() != b.size() || static_cast<Eigen::Index>(sense.size()) != b.size()) {
    throw DimensionError("lp_solve: row data sizes differ");
  }
  if (A.cols() != c.size() && A.rows() > 0) throw DimensionError("lp_solve: column count differs from cost size");
  DualSimplex lp(c, lower, upper, opts);
  for (Eigen::Index i = 0; i < A.rows(); ++i) lp.add_row(A.row(i).transpose(), sense[i], b(i));
  return lp.solve();
}

}  // namespace wccopf
