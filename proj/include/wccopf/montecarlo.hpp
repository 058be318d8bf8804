#pragma once

// Monte-Carlo validation of a dispatch and its control policy.
//
// Sampling scheme (portable, bit-stable):
//   * samples are split into blocks of kBlockSize consecutive indices;
//   * block b draws from std::mt19937_64 seeded with
//       splitmix64(seed ^ splitmix64(b));
//   * each raw 64-bit draw x becomes u = ((x >> 11) + 0.5) * 2^-53 in (0, 1),
//     then z = std_quantile(u);
//   * a sample consumes one z per wind source, in source order, and is
//     correlated with the lower Cholesky factor of Sigma (or V sqrt(L) when
//     Sigma is only semidefinite).
// The mapping from sample index to variates does not depend on how blocks are
// scheduled, so any partition of the work yields the same report.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wccopf/chance.hpp"
#include "wccopf/errors.hpp"
#include "wccopf/gaussmath.hpp"
#include "wccopf/netmodel.hpp"
#include "wccopf/policy.hpp"

namespace wccopf {

inline constexpr int kBlockSize = 4096;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t block_seed(std::uint64_t seed, std::uint64_t block) { return splitmix64(seed ^ splitmix64(block)); }

/// Uniform variate in the open interval (0, 1) from 53 high bits. The top
/// value rounds to 1.0 in double arithmetic and is pulled back below it.
inline double open_uniform(std::uint64_t x) {
  const double u = (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  return u < 1.0 ? u : 1.0 - 0x1.0p-53;
}

struct ValidationConfig {
  int sample_count = 10000;
  std::uint64_t seed = 42;
  std::vector<double> thresholds{0.0, 1.0, 2.0, 5.0, 10.0};

  void check() const {
    if (sample_count < 1) throw ConfigError("validation.samples must be at least 1");
    if (thresholds.empty()) throw ConfigError("validation.thresholds must not be empty");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (!std::isfinite(thresholds[i])) throw ConfigError("validation.thresholds must be finite");
      if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
        throw ConfigError("validation.thresholds must be strictly ascending");
      }
    }
  }
};

/// Factor L with L L' = Sigma.
inline Matrix covariance_factor(const FluctuationModel& fm) {
  const Matrix& s = fm.covariance();
  if (s.rows() == 0) return s;
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() == Eigen::Success) {
    const Matrix l = llt.matrixL();
    if (l.allFinite()) return l;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) throw DomainError("covariance is not positive semidefinite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Standard normal variates for samples [first, first + count), m per sample.
inline Matrix standard_normals(int m, std::int64_t first, int count, std::uint64_t seed) {
  Matrix z(count, m);
  if (m == 0 || count == 0) return z;
  std::int64_t i = first;
  const std::int64_t end = first + count;
  while (i < end) {
    const std::int64_t block = i / kBlockSize;
    const std::int64_t block_start = block * kBlockSize;
    std::mt19937_64 eng(block_seed(seed, static_cast<std::uint64_t>(block)));
    eng.discard(static_cast<unsigned long long>((i - block_start) * m));
    const std::int64_t block_end = std::min(end, block_start + kBlockSize);
    for (; i < block_end; ++i) {
      for (int k = 0; k < m; ++k) z(i - first, k) = std_quantile(open_uniform(eng()));
    }
  }
  return z;
}

/// n x m matrix of i.i.d. N(0, Sigma) rows.
inline Matrix sample_fluctuations(const FluctuationModel& fm, int n, std::uint64_t seed) {
  if (n < 0) throw DomainError("sample count must be non-negative");
  const int m = fm.dimension();
  const Matrix l = covariance_factor(fm);
  return standard_normals(m, 0, n, seed) * l.transpose();
}

// ---------------------------------------------------------------------------
// Reports.

struct ConstraintStats {
  std::string id;
  TargetType target = TargetType::line;
  int index = 0;
  Side side = Side::upper;
  std::vector<double> epsilon_e;   // P[y > threshold], one per threshold
  double mean_overload = 0.0;      // E[max(y, 0)], MW
  double mean_sq_overload = 0.0;   // E[max(y, 0)^2], MW^2
  double std_overload = 0.0;       // sample std of max(y, 0)
  double std_sq_overload = 0.0;    // sample std of max(y, 0)^2
  double max_overload = 0.0;       // largest observed y (negative if never violated)
};

struct ViolationReport {
  std::string formulation;  // label carried through from the solve
  std::string policy;
  double objective = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> thresholds;
  std::vector<ConstraintStats> constraints;
  double cost_mean = 0.0;
  double cost_std = 0.0;

  const ConstraintStats& find(const std::string& id) const {
    for (const auto& c : constraints)
      if (c.id == id) return c;
    throw DomainError("no constraint " + id + " in report");
  }
};

namespace mc_detail {

struct Accumulator {
  std::vector<std::int64_t> counts;
  double sum = 0.0;
  double sum_sq = 0.0;
  double sum_q = 0.0;     // sum of y+^2
  double sum_q_sq = 0.0;  // sum of y+^4
  double max_y = -std::numeric_limits<double>::infinity();

  void add(double y, const std::vector<double>& thresholds) {
    for (std::size_t t = 0; t < thresholds.size(); ++t)
      if (y > thresholds[t]) ++counts[t];
    const double yp = std::max(y, 0.0);
    sum += yp;
    sum_sq += yp * yp;
    sum_q += yp * yp;
    sum_q_sq += yp * yp * yp * yp;
    max_y = std::max(max_y, y);
  }
};

inline double sample_std(double sum, double sum_sq, int n) {
  if (n < 2) return 0.0;
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)));
}

}  // namespace mc_detail

/// Samples the fluctuation model and tabulates overloads of every generator
/// and line limit under the given policy.
inline ViolationReport validate(const NetworkCase& c, const FlowMatrix& flows, const Policy& policy,
                                const FluctuationModel& fm, const ValidationConfig& cfg) {
  cfg.check();
  if (fm.dimension() != c.wind_count()) throw DimensionError("fluctuation model dimension differs from wind count");
  const Vector probe = respond(policy, Vector::Zero(c.wind_count()));
  if (probe.size() != c.gen_count()) throw DimensionError("decision size differs from generator count");

  const int G = c.gen_count();
  const int L = c.line_count();
  const auto& th = cfg.thresholds;
  std::vector<mc_detail::Accumulator> acc(2 * (G + L));
  for (auto& a : acc) a.counts.assign(th.size(), 0);

  const Matrix factor = covariance_factor(fm);
  const Vector costs = c.costs();
  double cost_sum = 0.0;
  double cost_sq = 0.0;
  const int n = cfg.sample_count;
  for (int first = 0; first < n; first += kBlockSize) {
    const int count = std::min(kBlockSize, n - first);
    const Matrix omega = standard_normals(c.wind_count(), first, count, cfg.seed) * factor.transpose();
    for (int s = 0; s < count; ++s) {
      const Vector w = omega.row(s).transpose();
      const Vector out = respond(policy, w);
      const Vector f = line_flow_from_outputs(c, flows, out, w);
      const double cost = costs.dot(out);
      cost_sum += cost;
      cost_sq += cost * cost;
      for (int g = 0; g < G; ++g) {
        acc[2 * g].add(out(g) - c.generators[g].p_max, th);
        acc[2 * g + 1].add(c.generators[g].p_min - out(g), th);
      }
      for (int l = 0; l < L; ++l) {
        acc[2 * (G + l)].add(f(l) - c.lines[l].flow_limit, th);
        acc[2 * (G + l) + 1].add(-f(l) - c.lines[l].flow_limit, th);
      }
    }
  }

  ViolationReport rep;
  rep.samples = n;
  rep.seed = cfg.seed;
  rep.thresholds = th;
  rep.cost_mean = cost_sum / n;
  rep.cost_std = mc_detail::sample_std(cost_sum, cost_sq, n);
  for (int k = 0; k < 2 * (G + L); ++k) {
    ConstraintStats st;
    st.target = k < 2 * G ? TargetType::generator : TargetType::line;
    st.index = k < 2 * G ? k / 2 : k / 2 - G;
    st.side = k % 2 == 0 ? Side::upper : Side::lower;
    st.id = ConstraintSpec{Kind::standard, st.target, st.index, st.side}.id();
    const auto& a = acc[k];
    for (auto cnt : a.counts) st.epsilon_e.push_back(static_cast<double>(cnt) / n);
    st.mean_overload = a.sum / n;
    st.mean_sq_overload = a.sum_q / n;
    st.std_overload = mc_detail::sample_std(a.sum, a.sum_sq, n);
    st.std_sq_overload = mc_detail::sample_std(a.sum_q, a.sum_q_sq, n);
    st.max_overload = a.max_y;
    rep.constraints.push_back(std::move(st));
  }
  return rep;
}

inline ViolationReport validate(const NetworkCase& c, const FlowMatrix& flows, const DecisionVector& z,
                                const PolicyShape& shape, const FluctuationModel& fm, const ValidationConfig& cfg) {
  if (z.p.size() != c.gen_count() || z.alpha.size() != c.gen_count() ||
      (z.piecewise() && (z.beta_plus.size() != c.gen_count() || z.beta_minus.size() != c.gen_count()))) {
    throw DimensionError("decision size differs from generator count");
  }
  ViolationReport r = validate(c, flows, to_policy(z, shape), fm, cfg);
  r.policy = to_string(shape.form);
  r.objective = c.costs().dot(z.p);
  return r;
}

// ---------------------------------------------------------------------------
// Export.

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per constraint x threshold.
inline std::string report_csv(const ViolationReport& r) {
  std::ostringstream os;
  os << "constraint_id,kind,threshold_mw,epsilon_e,mean_overload_mw,mean_sq_overload_mw2,max_overload_mw\n";
  for (const auto& c : r.constraints) {
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      os << c.id << ',' << to_string(c.target) << ',' << format_number(r.thresholds[t]) << ','
         << format_number(c.epsilon_e[t]) << ',' << format_number(c.mean_overload) << ','
         << format_number(c.mean_sq_overload) << ',' << format_number(c.max_overload) << '\n';
    }
  }
  return os.str();
}

/// Per-line violation probability per threshold (both directions combined;
/// for thresholds >= 0 the two events are disjoint).
inline std::string threshold_chart_csv(const ViolationReport& r) {
  std::ostringstream os;
  os << "line,formulation,policy,threshold_mw,epsilon_e\n";
  std::map<int, std::vector<double>> lines;
  for (const auto& c : r.constraints) {
    if (c.target != TargetType::line) continue;
    auto& v = lines[c.index];
    v.resize(r.thresholds.size(), 0.0);
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) v[t] += c.epsilon_e[t];
  }
  for (const auto& [line, eps] : lines) {
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      os << line << ',' << r.formulation << ',' << r.policy << ',' << format_number(r.thresholds[t]) << ','
         << format_number(eps[t]) << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json report_to_json(const ViolationReport& r) {
  nlohmann::json j;
  j["formulation"] = r.formulation;
  j["policy"] = r.policy;
  j["objective"] = r.objective;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  j["thresholds_mw"] = r.thresholds;
  j["cost_mean"] = r.cost_mean;
  j["cost_std"] = r.cost_std;
  nlohmann::json cons = nlohmann::json::object();
  for (const auto& c : r.constraints) {
    cons[c.id] = {{"kind", to_string(c.target)},
                  {"index", c.index},
                  {"side", to_string(c.side)},
                  {"epsilon_e", c.epsilon_e},
                  {"mean_overload_mw", c.mean_overload},
                  {"mean_sq_overload_mw2", c.mean_sq_overload},
                  {"std_overload_mw", c.std_overload},
                  {"std_sq_overload_mw2", c.std_sq_overload},
                  {"max_overload_mw", c.max_overload}};
  }
  j["constraints"] = cons;
  return j;
}

inline ViolationReport report_from_json(const nlohmann::json& j) {
  try {
    ViolationReport r;
    r.formulation = j.at("formulation").get<std::string>();
    r.policy = j.at("policy").get<std::string>();
    r.objective = j.at("objective").get<double>();
    r.samples = j.at("samples").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.thresholds = j.at("thresholds_mw").get<std::vector<double>>();
    r.cost_mean = j.at("cost_mean").get<double>();
    r.cost_std = j.at("cost_std").get<double>();
    for (const auto& [id, c] : j.at("constraints").items()) {
      ConstraintStats st;
      st.id = id;
      st.target = c.at("kind").get<std::string>() == "generator" ? TargetType::generator : TargetType::line;
      st.index = c.at("index").get<int>();
      st.side = c.at("side").get<std::string>() == "upper" ? Side::upper : Side::lower;
      st.epsilon_e = c.at("epsilon_e").get<std::vector<double>>();
      if (st.epsilon_e.size() != r.thresholds.size()) throw ParseError("report: epsilon_e length of " + id);
      st.mean_overload = c.at("mean_overload_mw").get<double>();
      st.mean_sq_overload = c.at("mean_sq_overload_mw2").get<double>();
      st.std_overload = c.value("std_overload_mw", 0.0);
      st.std_sq_overload = c.value("std_sq_overload_mw2", 0.0);
      st.max_overload = c.at("max_overload_mw").get<double>();
      r.constraints.push_back(std::move(st));
    }
    // JSON objects are key-sorted; restore generator-then-line order.
    std::stable_sort(r.constraints.begin(), r.constraints.end(), [](const auto& a, const auto& b) {
      if (a.target != b.target) return a.target == TargetType::generator;
      if (a.index != b.index) return a.index < b.index;
      return a.side == Side::upper && b.side == Side::lower;
    });
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Comparison.

/// "16547 (+0.01%)": value rounded to whole units and its change relative to base.
inline std::string format_cost_delta(double base, double value) {
  char buf[64];
  const double pct = base != 0.0 ? 100.0 * (value - base) / std::abs(base) : 0.0;
  std::snprintf(buf, sizeof buf, "%.0f (%+.2f%%)", value, pct);
  return buf;
}

struct ComparisonRow {
  std::string constraint_id;
  std::vector<std::vector<double>> epsilon_e;  // [report][threshold]
  /// Set when some report is riskier than the first at the lowest threshold
  /// but safer at the highest one, or the other way round.
  bool ordering_flip = false;
};

struct Comparison {
  std::vector<std::string> labels;
  std::vector<double> costs;
  std::vector<std::string> cost_cells;
  std::vector<double> thresholds;
  std::vector<ComparisonRow> rows;
  /// Piecewise cost <= affine cost (within 1e-6 relative) for every formulation
  /// present under both policies; empty when no such pair exists.
  std::optional<bool> piecewise_not_costlier;
};

inline Comparison compare(const std::vector<ViolationReport>& reports) {
  if (reports.size() < 2) throw ConfigError("compare needs at least two reports");
  Comparison out;
  out.thresholds = reports.front().thresholds;
  for (const auto& r : reports) {
    if (r.thresholds != out.thresholds) throw ConfigError("compare: reports use different thresholds");
    out.labels.push_back(r.formulation + "/" + r.policy);
    out.costs.push_back(r.objective);
  }
  for (const auto& r : reports) out.cost_cells.push_back(format_cost_delta(reports[0].objective, r.objective));
  for (const auto& c : reports.front().constraints) {
    ComparisonRow row;
    row.constraint_id = c.id;
    for (const auto& r : reports) row.epsilon_e.push_back(r.find(c.id).epsilon_e);
    const std::size_t last = out.thresholds.size() - 1;
    for (std::size_t k = 1; k < reports.size() && last > 0; ++k) {
      const double low = row.epsilon_e[k][0] - row.epsilon_e[0][0];
      const double high = row.epsilon_e[k][last] - row.epsilon_e[0][last];
      if (low * high < 0.0) row.ordering_flip = true;
    }
    out.rows.push_back(std::move(row));
  }
  for (std::size_t a = 0; a < reports.size(); ++a) {
    for (std::size_t b = 0; b < reports.size(); ++b) {
      if (reports[a].formulation != reports[b].formulation) continue;
      if (reports[a].policy != "affine" || reports[b].policy != "piecewise") continue;
      const double tol = 1e-6 * std::abs(reports[a].objective);
      const bool ok = reports[b].objective <= reports[a].objective + tol;
      out.piecewise_not_costlier = out.piecewise_not_costlier.value_or(true) && ok;
    }
  }
  return out;
}

}  // namespace wccopf
