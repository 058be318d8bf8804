#pragma once

// Run configuration and solution documents (JSON).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wccopf/chance.hpp"
#include "wccopf/errors.hpp"
#include "wccopf/montecarlo.hpp"
#include "wccopf/netmodel.hpp"
#include "wccopf/policy.hpp"
#include "wccopf/solver.hpp"

namespace wccopf {

inline Formulation parse_formulation(const std::string& s) {
  if (s == "cc") return Formulation::cc;
  if (s == "wcc-linear") return Formulation::wcc_linear;
  if (s == "wcc-quadratic") return Formulation::wcc_quadratic;
  throw ConfigError("formulation: unknown value '" + s + "' (cc, wcc-linear, wcc-quadratic)");
}

/// Fluctuation model as written in a config: std + common correlation, or a full covariance.
struct FluctuationSpec {
  std::vector<double> std_mw;
  double correlation = 0.0;
  std::optional<Matrix> covariance;

  FluctuationModel build(int wind_count) const {
    if (covariance) {
      if (covariance->rows() != wind_count) throw DimensionError("fluctuation.covariance: size differs from wind count");
      return FluctuationModel(*covariance);
    }
    if (static_cast<int>(std_mw.size()) != wind_count) {
      throw DimensionError("fluctuation.std_mw: length differs from wind count");
    }
    return FluctuationModel::from_std(std_mw, correlation);
  }
};

/// Policy as configured; thresholds default to +-1.5 std(Omega) when absent.
struct PolicyConfig {
  PolicyForm form = PolicyForm::affine;
  std::optional<double> omega_plus;
  std::optional<double> omega_minus;

  PolicyShape shape(const FluctuationModel& fm) const {
    PolicyShape s;
    s.form = form;
    if (form == PolicyForm::piecewise) {
      s.omega_plus = omega_plus.value_or(1.5 * fm.total_std());
      s.omega_minus = omega_minus.value_or(-1.5 * fm.total_std());
      if (!(s.omega_minus < 0.0 && 0.0 < s.omega_plus)) {
        throw ConfigError("policy: piecewise thresholds need omega_minus_mw < 0 < omega_plus_mw");
      }
    }
    return s;
  }
};

struct OutputPaths {
  std::string dir = ".";
  std::string solution = "solution.json";
  std::string report_json = "report.json";
  std::string report_csv = "report.csv";
  std::string chart_csv = "thresholds.csv";
  std::string comparison = "comparison.json";
};

struct RunConfig {
  Formulation formulation = Formulation::cc;
  PolicyConfig policy;
  FluctuationSpec fluctuation;
  std::map<std::string, EpsilonBudget> epsilon;  // keyed by formulation name
  ValidationConfig validation;
  SolveOptions solver;
  OutputPaths output;
  bool output_dir_set = false;

  const EpsilonBudget& budget() const {
    auto it = epsilon.find(to_string(formulation));
    if (it == epsilon.end()) {
      throw ConfigError(std::string("epsilon.") + to_string(formulation) + ": missing budget for the formulation");
    }
    return it->second;
  }
};

namespace io_detail {

using nlohmann::json;
using net_detail::array;
using net_detail::field;
using net_detail::number;
using net_detail::reject_unknown;

// Config errors name the offending field; reuse the parse helpers and rewrap.
template <typename F>
auto as_config(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

inline EpsilonBudget parse_budget(const json& j, const std::string& where) {
  reject_unknown(j, {"line", "gen", "overrides"}, where);
  EpsilonBudget b;
  if (j.contains("line")) b.line = number(j, "line", where);
  if (j.contains("gen")) b.gen = number(j, "gen", where);
  if (j.contains("overrides")) {
    const auto& ov = array(j, "overrides", where);
    for (std::size_t i = 0; i < ov.size(); ++i) {
      const std::string w = where + ".overrides[" + std::to_string(i) + "]";
      reject_unknown(ov[i], {"target", "index", "side", "value"}, w);
      BudgetOverride o;
      const std::string target = field(ov[i], "target", w).get<std::string>();
      if (target == "line") {
        o.target = TargetType::line;
      } else if (target == "gen" || target == "generator") {
        o.target = TargetType::generator;
      } else {
        throw ConfigError(w + ".target: expected 'line' or 'gen'");
      }
      o.index = net_detail::integer(ov[i], "index", w);
      if (ov[i].contains("side")) {
        const std::string side = ov[i]["side"].get<std::string>();
        if (side != "upper" && side != "lower") throw ConfigError(w + ".side: expected 'upper' or 'lower'");
        o.side = side == "upper" ? Side::upper : Side::lower;
      }
      o.value = number(ov[i], "value", w);
      b.overrides.push_back(o);
    }
  }
  if (!(b.line.value_or(1.0) > 0.0)) throw ConfigError(where + ".line: epsilon must be positive");
  if (!(b.gen.value_or(1.0) > 0.0)) throw ConfigError(where + ".gen: epsilon must be positive");
  for (std::size_t i = 0; i < b.overrides.size(); ++i) {
    if (!(b.overrides[i].value > 0.0)) {
      throw ConfigError(where + ".overrides[" + std::to_string(i) + "].value: epsilon must be positive");
    }
  }
  return b;
}

}  // namespace io_detail

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace io_detail;
  return as_config([&] {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    reject_unknown(j, {"formulation", "policy", "fluctuation", "epsilon", "validation", "solver", "output"}, "config");
    RunConfig cfg;
    if (j.contains("formulation")) {
      if (!j["formulation"].is_string()) throw ConfigError("config.formulation: expected a string");
      cfg.formulation = parse_formulation(j["formulation"].get<std::string>());
    }
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      reject_unknown(p, {"type", "omega_plus_mw", "omega_minus_mw"}, "config.policy");
      const std::string type = field(p, "type", "config.policy").get<std::string>();
      if (type == "affine") {
        cfg.policy.form = PolicyForm::affine;
      } else if (type == "piecewise") {
        cfg.policy.form = PolicyForm::piecewise;
      } else {
        throw ConfigError("config.policy.type: expected 'affine' or 'piecewise'");
      }
      if (p.contains("omega_plus_mw")) cfg.policy.omega_plus = number(p, "omega_plus_mw", "config.policy");
      if (p.contains("omega_minus_mw")) cfg.policy.omega_minus = number(p, "omega_minus_mw", "config.policy");
    }
    const auto& f = field(j, "fluctuation", "config");
    reject_unknown(f, {"std_mw", "correlation", "covariance"}, "config.fluctuation");
    if (f.contains("covariance")) {
      const auto& rows = array(f, "covariance", "config.fluctuation");
      Matrix cov(rows.size(), rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || rows[r].size() != rows.size()) {
          throw ConfigError("config.fluctuation.covariance: expected a square matrix");
        }
        for (std::size_t k = 0; k < rows.size(); ++k) {
          if (!rows[r][k].is_number()) throw ConfigError("config.fluctuation.covariance: expected numbers");
          cov(r, k) = rows[r][k].get<double>();
        }
      }
      cfg.fluctuation.covariance = cov;
    } else {
      const auto& s = array(f, "std_mw", "config.fluctuation");
      for (const auto& v : s) {
        if (!v.is_number() || v.get<double>() < 0.0) throw ConfigError("config.fluctuation.std_mw: expected values >= 0");
        cfg.fluctuation.std_mw.push_back(v.get<double>());
      }
      if (f.contains("correlation")) cfg.fluctuation.correlation = number(f, "correlation", "config.fluctuation");
      if (std::abs(cfg.fluctuation.correlation) > 1.0) {
        throw ConfigError("config.fluctuation.correlation: must lie in [-1, 1]");
      }
    }
    if (j.contains("epsilon")) {
      const auto& e = j["epsilon"];
      reject_unknown(e, {"cc", "wcc-linear", "wcc-quadratic"}, "config.epsilon");
      for (const auto& [key, val] : e.items()) cfg.epsilon[key] = parse_budget(val, "config.epsilon." + key);
    }
    if (j.contains("validation")) {
      const auto& v = j["validation"];
      reject_unknown(v, {"samples", "seed", "thresholds_mw"}, "config.validation");
      if (v.contains("samples")) cfg.validation.sample_count = net_detail::integer(v, "samples", "config.validation");
      if (v.contains("seed")) {
        if (!v["seed"].is_number_unsigned()) throw ConfigError("config.validation.seed: expected an unsigned integer");
        cfg.validation.seed = v["seed"].get<std::uint64_t>();
      }
      if (v.contains("thresholds_mw")) {
        cfg.validation.thresholds.clear();
        for (const auto& t : array(v, "thresholds_mw", "config.validation")) {
          if (!t.is_number()) throw ConfigError("config.validation.thresholds_mw: expected numbers");
          cfg.validation.thresholds.push_back(t.get<double>());
        }
      }
      cfg.validation.check();
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      reject_unknown(s, {"max_iterations", "objective_rel_tol", "max_cuts"}, "config.solver");
      if (s.contains("max_iterations")) cfg.solver.max_iterations = net_detail::integer(s, "max_iterations", "config.solver");
      if (s.contains("objective_rel_tol")) cfg.solver.objective_rel_tol = number(s, "objective_rel_tol", "config.solver");
      if (s.contains("max_cuts")) cfg.solver.max_cuts = net_detail::integer(s, "max_cuts", "config.solver");
      if (cfg.solver.max_iterations < 1 || !(cfg.solver.objective_rel_tol > 0.0) || cfg.solver.max_cuts < 1) {
        throw ConfigError("config.solver: limits and tolerances must be positive");
      }
    }
    if (j.contains("output")) {
      const auto& o = j["output"];
      reject_unknown(o, {"dir", "solution", "report_json", "report_csv", "chart_csv", "comparison"}, "config.output");
      auto str = [&](const char* key, std::string& dst) {
        if (o.contains(key)) {
          if (!o[key].is_string()) throw ConfigError(std::string("config.output.") + key + ": expected a string");
          dst = o[key].get<std::string>();
        }
      };
      if (o.contains("dir")) cfg.output_dir_set = true;
      str("dir", cfg.output.dir);
      str("solution", cfg.output.solution);
      str("report_json", cfg.output.report_json);
      str("report_csv", cfg.output.report_csv);
      str("chart_csv", cfg.output.chart_csv);
      str("comparison", cfg.output.comparison);
    }
    return cfg;
  });
}

inline RunConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Solution documents.

inline nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json solution_to_json(const SolutionReport& r) {
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["formulation"] = to_string(r.formulation);
  j["policy"] = {{"type", to_string(r.shape.form)}};
  if (r.shape.form == PolicyForm::piecewise) {
    j["policy"]["omega_plus_mw"] = r.shape.omega_plus;
    j["policy"]["omega_minus_mw"] = r.shape.omega_minus;
  }
  j["objective"] = r.objective;
  j["lower_bound"] = r.lower_bound;
  j["gap"] = r.gap;
  j["iterations"] = r.iterations;
  j["message"] = r.message;
  nlohmann::json d;
  d["p"] = vector_json(r.decision.p);
  d["alpha"] = vector_json(r.decision.alpha);
  if (r.decision.piecewise()) {
    d["beta_plus"] = vector_json(r.decision.beta_plus);
    d["beta_minus"] = vector_json(r.decision.beta_minus);
  }
  j["decision"] = d;
  j["constraints"] = nlohmann::json::array();
  for (const auto& c : r.constraints) {
    j["constraints"].push_back({{"id", c.spec.id()},
                                {"kind", to_string(c.spec.kind)},
                                {"epsilon", c.spec.epsilon},
                                {"value", c.value},
                                {"risk", c.risk},
                                {"residual", c.residual}});
  }
  j["log"] = nlohmann::json::array();
  for (const auto& l : r.log) {
    j["log"].push_back({{"iteration", l.iteration},
                        {"lower_bound", l.lower_bound},
                        {"upper_bound", l.upper_bound},
                        {"max_violation", l.max_violation},
                        {"cuts", l.cuts}});
  }
  return j;
}

/// The parts of a solution document needed to re-evaluate it.
struct StoredSolution {
  std::string status;
  std::string formulation;
  PolicyShape shape;
  DecisionVector decision;
  double objective = 0.0;
};

inline StoredSolution solution_from_json(const nlohmann::json& j) {
  try {
    StoredSolution s;
    s.status = j.at("status").get<std::string>();
    s.formulation = j.at("formulation").get<std::string>();
    const auto& pol = j.at("policy");
    const std::string type = pol.at("type").get<std::string>();
    if (type == "piecewise") {
      s.shape.form = PolicyForm::piecewise;
      s.shape.omega_plus = pol.at("omega_plus_mw").get<double>();
      s.shape.omega_minus = pol.at("omega_minus_mw").get<double>();
    } else if (type != "affine") {
      throw ParseError("solution.policy.type: unknown value '" + type + "'");
    }
    s.objective = j.at("objective").get<double>();
    const auto& d = j.at("decision");
    auto vec = [&](const char* key) {
      const auto v = d.at(key).get<std::vector<double>>();
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    s.decision.p = vec("p");
    s.decision.alpha = vec("alpha");
    if (s.shape.form == PolicyForm::piecewise) {
      s.decision.beta_plus = vec("beta_plus");
      s.decision.beta_minus = vec("beta_minus");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("solution: ") + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace wccopf
