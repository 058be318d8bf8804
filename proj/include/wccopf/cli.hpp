#pragma once

// Command-line front end: solve, validate, compare.
//
// Exit codes: 0 success (solve: optimal), 1 usage/config/data error,
// 2 infeasible, 3 iteration limit.
//
// Settings precedence: command-line flags, then the config file, then
// defaults. The output directory falls back to $WCCOPF_OUT_DIR, then ".".

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wccopf/errors.hpp"
#include "wccopf/io.hpp"
#include "wccopf/montecarlo.hpp"
#include "wccopf/netmodel.hpp"
#include "wccopf/solver.hpp"

namespace wccopf {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitInfeasible = 2, kExitIterationLimit = 3 };

inline int exit_code(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return kExitOk;
    case SolveStatus::infeasible: return kExitInfeasible;
    case SolveStatus::iteration_limit: return kExitIterationLimit;
  }
  return kExitUsage;
}

struct CliOptions {
  std::string case_path;
  std::string config_path;
  std::string solution_path;
  std::vector<std::string> reports;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;
  std::optional<std::string> formulation;
  std::optional<std::string> policy;
  std::optional<std::vector<double>> thresholds;
  bool quiet = false;
};

namespace cli_detail {

inline std::filesystem::path output_dir(const CliOptions& o, const RunConfig* cfg) {
  if (o.out_dir) return *o.out_dir;
  if (cfg && cfg->output_dir_set) return cfg->output.dir;
  if (const char* env = std::getenv("WCCOPF_OUT_DIR"); env && *env) return env;
  return ".";
}

inline RunConfig effective_config(const CliOptions& o) {
  RunConfig cfg = load_config(o.config_path);
  if (o.formulation) cfg.formulation = parse_formulation(*o.formulation);
  if (o.policy) {
    if (*o.policy == "affine") {
      cfg.policy.form = PolicyForm::affine;
    } else if (*o.policy == "piecewise") {
      cfg.policy.form = PolicyForm::piecewise;
    } else {
      throw ConfigError("--policy: expected 'affine' or 'piecewise'");
    }
  }
  if (o.seed) cfg.validation.seed = *o.seed;
  if (o.samples) cfg.validation.sample_count = *o.samples;
  if (o.thresholds) cfg.validation.thresholds = *o.thresholds;
  cfg.validation.check();
  return cfg;
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void print_solution(std::ostream& out, const SolutionReport& r) {
  out << "status      " << to_string(r.status) << "\n";
  out << "formulation " << to_string(r.formulation) << " / " << to_string(r.shape.form) << "\n";
  out << "objective   " << fixed(r.objective, 4) << "\n";
  out << "lower bound " << fixed(r.lower_bound, 4) << "  (gap " << std::scientific << std::setprecision(2) << r.gap
      << std::defaultfloat << ", " << r.iterations << " iterations)\n";
  if (!r.message.empty()) out << "note        " << r.message << "\n";
  out << "\n gen        p [MW]     alpha";
  if (r.decision.piecewise()) out << "   beta+ [MW]   beta- [MW]";
  out << "\n";
  for (Eigen::Index g = 0; g < r.decision.p.size(); ++g) {
    out << std::setw(4) << g << std::setw(14) << fixed(r.decision.p(g), 4) << std::setw(10)
        << fixed(r.decision.alpha(g), 4);
    if (r.decision.piecewise()) {
      out << std::setw(13) << fixed(r.decision.beta_plus(g), 4) << std::setw(13) << fixed(r.decision.beta_minus(g), 4);
    }
    out << "\n";
  }
  out << "\n binding constraints (risk within 0.01% of budget)\n";
  int shown = 0;
  for (const auto& c : r.constraints) {
    if (c.residual >= -1e-4 * c.spec.epsilon) {
      out << "  " << std::left << std::setw(16) << c.spec.id() << std::right << " risk " << std::setprecision(6)
          << c.risk << "  eps " << c.spec.epsilon << "\n";
      ++shown;
    }
  }
  if (shown == 0) out << "  none\n";
}

inline void print_report(std::ostream& out, const ViolationReport& r) {
  out << "samples " << r.samples << "  seed " << r.seed << "  cost mean " << fixed(r.cost_mean, 4) << "  std "
      << fixed(r.cost_std, 4) << "\n";
  out << std::left << std::setw(16) << "constraint" << std::right;
  for (double t : r.thresholds) out << std::setw(10) << ("P>" + fixed(t, 0));
  out << std::setw(12) << "E[y+]" << std::setw(12) << "E[y+^2]" << "\n";
  for (const auto& c : r.constraints) {
    if (c.epsilon_e.front() == 0.0) continue;
    out << std::left << std::setw(16) << c.id << std::right;
    for (double e : c.epsilon_e) out << std::setw(10) << fixed(e, 4);
    out << std::setw(12) << fixed(c.mean_overload, 5) << std::setw(12) << fixed(c.mean_sq_overload, 5) << "\n";
  }
}

inline nlohmann::json comparison_to_json(const Comparison& c) {
  nlohmann::json j;
  j["labels"] = c.labels;
  j["costs"] = c.costs;
  j["cost_cells"] = c.cost_cells;
  j["thresholds_mw"] = c.thresholds;
  if (c.piecewise_not_costlier) j["piecewise_not_costlier"] = *c.piecewise_not_costlier;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : c.rows) {
    j["rows"].push_back({{"constraint_id", r.constraint_id}, {"epsilon_e", r.epsilon_e}, {"ordering_flip", r.ordering_flip}});
  }
  return j;
}

inline void print_comparison(std::ostream& out, const Comparison& c) {
  out << std::left << std::setw(16) << "" << std::right;
  for (const auto& l : c.labels) out << std::setw(26) << l;
  out << "\n" << std::left << std::setw(16) << "cost" << std::right;
  for (const auto& cell : c.cost_cells) out << std::setw(26) << cell;
  out << "\n";
  if (c.piecewise_not_costlier) {
    out << "piecewise cost <= affine cost: " << (*c.piecewise_not_costlier ? "yes" : "NO") << "\n";
  }
  out << "\nP[y > t] per constraint (only constraints with any violation)\n";
  for (const auto& r : c.rows) {
    bool any = false;
    for (const auto& e : r.epsilon_e) any = any || e.front() > 0.0;
    if (!any) continue;
    for (std::size_t t = 0; t < c.thresholds.size(); ++t) {
      out << std::left << std::setw(16) << (t == 0 ? r.constraint_id : "") << std::right << std::setw(6)
          << ("> " + fixed(c.thresholds[t], 0));
      for (const auto& e : r.epsilon_e) out << std::setw(20) << fixed(e[t], 4);
      if (t == 0 && r.ordering_flip) out << "   ordering flips at large overloads";
      out << "\n";
    }
  }
}

}  // namespace cli_detail

inline int cmd_solve(const CliOptions& o, std::ostream& out) {
  const NetworkCase c = load_case(o.case_path);
  const RunConfig cfg = cli_detail::effective_config(o);
  const FluctuationModel fm = cfg.fluctuation.build(c.wind_count());
  const PolicyShape shape = cfg.policy.shape(fm);
  if (cfg.formulation == Formulation::cc && shape.form == PolicyForm::piecewise) {
    throw ConfigError("unsupported combination: formulation cc with piecewise policy (cc supports affine only)");
  }
  const SolutionReport r = solve(c, fm, cfg.formulation, shape, cfg.budget(), cfg.solver);
  const auto dir = cli_detail::output_dir(o, &cfg);
  write_text_file(dir / cfg.output.solution, solution_to_json(r).dump(2) + "\n");
  if (!o.quiet) {
    cli_detail::print_solution(out, r);
    out << "\nwrote " << (dir / cfg.output.solution).string() << "\n";
  }
  return exit_code(r.status);
}

inline int cmd_validate(const CliOptions& o, std::ostream& out) {
  const NetworkCase c = load_case(o.case_path);
  const RunConfig cfg = cli_detail::effective_config(o);
  const FluctuationModel fm = cfg.fluctuation.build(c.wind_count());
  const StoredSolution sol = solution_from_json(nlohmann::json::parse(read_text_file(o.solution_path)));
  const FlowMatrix flows = build_flow_matrix(c);
  ViolationReport r = validate(c, flows, sol.decision, sol.shape, fm, cfg.validation);
  r.formulation = sol.formulation;
  const auto dir = cli_detail::output_dir(o, &cfg);
  write_text_file(dir / cfg.output.report_json, report_to_json(r).dump(2) + "\n");
  write_text_file(dir / cfg.output.report_csv, report_csv(r));
  write_text_file(dir / cfg.output.chart_csv, threshold_chart_csv(r));
  if (!o.quiet) {
    cli_detail::print_report(out, r);
    out << "\nwrote " << (dir / cfg.output.report_json).string() << ", " << (dir / cfg.output.report_csv).string()
        << ", " << (dir / cfg.output.chart_csv).string() << "\n";
  }
  return kExitOk;
}

inline int cmd_compare(const CliOptions& o, std::ostream& out) {
  if (o.reports.size() < 2) throw ConfigError("compare needs at least two report files");
  std::vector<ViolationReport> reports;
  for (const auto& p : o.reports) reports.push_back(report_from_json(nlohmann::json::parse(read_text_file(p))));
  const Comparison cmp = compare(reports);
  const auto dir = cli_detail::output_dir(o, nullptr);
  write_text_file(dir / OutputPaths{}.comparison, cli_detail::comparison_to_json(cmp).dump(2) + "\n");
  if (!o.quiet) cli_detail::print_comparison(out, cmp);
  return kExitOk;
}

/// Parses arguments and dispatches; never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chance-constrained and weighted chance-constrained DC optimal power flow"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", o.out_dir, "Output directory (default: config, then $WCCOPF_OUT_DIR, then .)");
    sub->add_flag("--quiet", o.quiet, "Suppress the summary table");
  };
  auto add_run = [&](CLI::App* sub) {
    sub->add_option("--case", o.case_path, "Network case JSON")->required();
    sub->add_option("--config", o.config_path, "Run configuration JSON")->required();
    sub->add_option("--seed", o.seed, "Monte-Carlo seed");
    sub->add_option("--samples", o.samples, "Monte-Carlo sample count");
    sub->add_option("--thresholds", o.thresholds, "Violation thresholds in MW, ascending");
    sub->add_option("--formulation", o.formulation, "cc, wcc-linear or wcc-quadratic");
    sub->add_option("--policy", o.policy, "affine or piecewise");
    add_common(sub);
  };
  CLI::App* solve_cmd = app.add_subcommand("solve", "Solve a case and write the solution JSON");
  add_run(solve_cmd);
  CLI::App* validate_cmd = app.add_subcommand("validate", "Monte-Carlo validation of a stored solution");
  add_run(validate_cmd);
  validate_cmd->add_option("--solution", o.solution_path, "Solution JSON written by solve")->required();
  CLI::App* compare_cmd = app.add_subcommand("compare", "Compare validation reports");
  compare_cmd->add_option("reports", o.reports, "Report JSON files (two or more)");
  add_common(compare_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (solve_cmd->parsed()) return cmd_solve(o, out);
    if (validate_cmd->parsed()) return cmd_validate(o, out);
    if (compare_cmd->parsed()) return cmd_compare(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace wccopf
