#pragma once

// Grid data model, JSON case ingestion and the DC injection-to-flow matrix.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wccopf/errors.hpp"

namespace wccopf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = 0.0;  // per unit on base_mva
  double flow_limit = 0.0;   // MW, symmetric
};

struct Generator {
  int bus = 0;
  double cost = 0.0;  // $/MWh
  double p_min = 0.0;
  double p_max = 0.0;
};

struct WindSource {
  int bus = 0;
  double forecast = 0.0;  // MW
};

struct NetworkCase {
  int bus_count = 0;
  int slack_bus = 0;
  double base_mva = 100.0;
  std::vector<Line> lines;
  std::vector<Generator> generators;
  std::vector<WindSource> wind;
  Vector demand;  // per bus, MW

  int gen_count() const { return static_cast<int>(generators.size()); }
  int wind_count() const { return static_cast<int>(wind.size()); }
  int line_count() const { return static_cast<int>(lines.size()); }

  /// bus x generator 0/1 placement matrix.
  Matrix generator_incidence() const {
    Matrix g = Matrix::Zero(bus_count, gen_count());
    for (int k = 0; k < gen_count(); ++k) g(generators[k].bus, k) = 1.0;
    return g;
  }

  /// bus x wind-source 0/1 placement matrix.
  Matrix wind_incidence() const {
    Matrix w = Matrix::Zero(bus_count, wind_count());
    for (int k = 0; k < wind_count(); ++k) w(wind[k].bus, k) = 1.0;
    return w;
  }

  /// Forecast wind injection per bus (v).
  Vector forecast_injection() const {
    Vector v = Vector::Zero(bus_count);
    for (const auto& w : wind) v(w.bus) += w.forecast;
    return v;
  }

  Vector costs() const {
    Vector c(gen_count());
    for (int k = 0; k < gen_count(); ++k) c(k) = generators[k].cost;
    return c;
  }

  double total_demand() const { return demand.sum(); }
  double total_forecast() const {
    double s = 0.0;
    for (const auto& w : wind) s += w.forecast;
    return s;
  }
};

/// Rows map nodal injections (MW) to line flows (MW). The slack column is zero.
struct FlowMatrix {
  Matrix M;
};

namespace net_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ParseError(where + ": unknown key '" + it.key() + "'");
  }
}

inline const json& field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + "." + key + ": missing");
  return *it;
}

inline double number(const json& obj, const std::string& key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(where + "." + key + ": not finite");
  return d;
}

inline int integer(const json& obj, const std::string& key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_integer()) throw ParseError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline const json& array(const json& obj, const std::string& key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_array()) throw ParseError(where + "." + key + ": expected an array");
  return v;
}

inline std::string at(const std::string& key, std::size_t i) {
  return key + "[" + std::to_string(i) + "]";
}

inline void check_bus(int bus, int count, const std::string& where) {
  if (bus < 0 || bus >= count) {
    throw StructuralError(where + ": bus " + std::to_string(bus) + " out of range [0, " +
                          std::to_string(count) + ")");
  }
}

}  // namespace net_detail

/// True when every bus is reachable from bus 0 through the line graph.
inline bool is_connected(const NetworkCase& c) {
  if (c.bus_count <= 1) return true;
  std::vector<std::vector<int>> adj(c.bus_count);
  for (const auto& l : c.lines) {
    adj[l.from_bus].push_back(l.to_bus);
    adj[l.to_bus].push_back(l.from_bus);
  }
  std::vector<char> seen(c.bus_count, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int b = q.front();
    q.pop();
    for (int nb : adj[b]) {
      if (!seen[nb]) {
        seen[nb] = 1;
        ++reached;
        q.push(nb);
      }
    }
  }
  return reached == c.bus_count;
}

/// Check every structural invariant. Throws StructuralError.
inline void validate_case(const NetworkCase& c) {
  using net_detail::at;
  using net_detail::check_bus;
  if (c.bus_count < 1) throw StructuralError("buses: need at least one bus");
  check_bus(c.slack_bus, c.bus_count, "slack_bus");
  if (!(c.base_mva > 0.0)) throw StructuralError("base_mva: must be positive");
  for (std::size_t i = 0; i < c.lines.size(); ++i) {
    const auto& l = c.lines[i];
    check_bus(l.from_bus, c.bus_count, at("lines", i) + ".from");
    check_bus(l.to_bus, c.bus_count, at("lines", i) + ".to");
    if (l.from_bus == l.to_bus) throw StructuralError(at("lines", i) + ": from == to");
    if (!(l.susceptance > 0.0)) throw StructuralError(at("lines", i) + ".susceptance: must be > 0");
    if (!(l.flow_limit > 0.0)) throw StructuralError(at("lines", i) + ".limit_mw: must be > 0");
  }
  for (std::size_t i = 0; i < c.generators.size(); ++i) {
    const auto& g = c.generators[i];
    check_bus(g.bus, c.bus_count, at("generators", i) + ".bus");
    if (!(g.p_min >= 0.0 && g.p_min <= g.p_max)) {
      throw StructuralError(at("generators", i) + ": need 0 <= p_min <= p_max");
    }
    if (!std::isfinite(g.cost)) throw StructuralError(at("generators", i) + ".cost: not finite");
  }
  for (std::size_t i = 0; i < c.wind.size(); ++i) {
    check_bus(c.wind[i].bus, c.bus_count, at("wind", i) + ".bus");
    if (!(c.wind[i].forecast >= 0.0)) throw StructuralError(at("wind", i) + ".forecast_mw: must be >= 0");
  }
  if (c.demand.size() != c.bus_count) throw StructuralError("demand: size does not match bus count");
  for (int b = 0; b < c.bus_count; ++b) {
    if (!std::isfinite(c.demand(b)) || c.demand(b) < 0.0) {
      throw StructuralError("demand: bus " + std::to_string(b) + " must be finite and >= 0");
    }
  }
  if (!is_connected(c)) throw StructuralError("lines: network graph is not connected");
}

/// Parse and validate a case document held in memory.
inline NetworkCase parse_case(const nlohmann::json& doc) {
  using namespace net_detail;
  if (!doc.is_object()) throw ParseError("case: expected a JSON object");
  reject_unknown(doc, {"buses", "slack_bus", "base_mva", "lines", "generators", "wind", "demand"},
                 "case");
  NetworkCase c;
  c.bus_count = integer(doc, "buses", "case");
  c.slack_bus = integer(doc, "slack_bus", "case");
  c.base_mva = doc.contains("base_mva") ? number(doc, "base_mva", "case") : 100.0;
  if (c.bus_count < 1) throw ParseError("case.buses: must be >= 1");

  const auto& lines = array(doc, "lines", "case");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string w = at("lines", i);
    reject_unknown(lines[i], {"from", "to", "susceptance", "limit_mw"}, w);
    c.lines.push_back({integer(lines[i], "from", w), integer(lines[i], "to", w),
                       number(lines[i], "susceptance", w), number(lines[i], "limit_mw", w)});
  }
  const auto& gens = array(doc, "generators", "case");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string w = at("generators", i);
    reject_unknown(gens[i], {"bus", "cost", "p_min", "p_max"}, w);
    c.generators.push_back({integer(gens[i], "bus", w), number(gens[i], "cost", w),
                            number(gens[i], "p_min", w), number(gens[i], "p_max", w)});
  }
  if (doc.contains("wind")) {
    const auto& wind = array(doc, "wind", "case");
    for (std::size_t i = 0; i < wind.size(); ++i) {
      const std::string w = at("wind", i);
      reject_unknown(wind[i], {"bus", "forecast_mw"}, w);
      c.wind.push_back({integer(wind[i], "bus", w), number(wind[i], "forecast_mw", w)});
    }
  }
  c.demand = Vector::Zero(c.bus_count);
  if (doc.contains("demand")) {
    const auto& dem = array(doc, "demand", "case");
    for (std::size_t i = 0; i < dem.size(); ++i) {
      const std::string w = at("demand", i);
      reject_unknown(dem[i], {"bus", "mw"}, w);
      const int bus = integer(dem[i], "bus", w);
      check_bus(bus, c.bus_count, w + ".bus");
      c.demand(bus) += number(dem[i], "mw", w);
    }
  }
  if (c.generators.empty()) throw ParseError("case.generators: at least one generator required");
  validate_case(c);
  return c;
}

/// Parse a case from JSON text.
inline NetworkCase parse_case_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("case: malformed JSON: ") + e.what());
  }
  return parse_case(doc);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Load a case from a file path.
inline NetworkCase load_case(const std::filesystem::path& path) {
  return parse_case_text(read_text_file(path));
}

inline nlohmann::json case_to_json(const NetworkCase& c) {
  nlohmann::json doc;
  doc["buses"] = c.bus_count;
  doc["slack_bus"] = c.slack_bus;
  doc["base_mva"] = c.base_mva;
  doc["lines"] = nlohmann::json::array();
  for (const auto& l : c.lines) {
    doc["lines"].push_back(
        {{"from", l.from_bus}, {"to", l.to_bus}, {"susceptance", l.susceptance}, {"limit_mw", l.flow_limit}});
  }
  doc["generators"] = nlohmann::json::array();
  for (const auto& g : c.generators) {
    doc["generators"].push_back({{"bus", g.bus}, {"cost", g.cost}, {"p_min", g.p_min}, {"p_max", g.p_max}});
  }
  doc["wind"] = nlohmann::json::array();
  for (const auto& w : c.wind) doc["wind"].push_back({{"bus", w.bus}, {"forecast_mw", w.forecast}});
  doc["demand"] = nlohmann::json::array();
  for (int b = 0; b < c.bus_count; ++b) {
    if (c.demand(b) != 0.0) doc["demand"].push_back({{"bus", b}, {"mw", c.demand(b)}});
  }
  return doc;
}

/// M = B_f * [inv(B_bus reduced) 0; 0 0] with the slack row/column removed
/// before inversion and re-inserted as zeros.
inline FlowMatrix build_flow_matrix(const NetworkCase& c) {
  const int m = c.bus_count;
  const int n = c.line_count();
  Matrix bf = Matrix::Zero(n, m);
  Matrix bbus = Matrix::Zero(m, m);
  for (int l = 0; l < n; ++l) {
    const auto& ln = c.lines[l];
    const double b = ln.susceptance;
    bf(l, ln.from_bus) += b;
    bf(l, ln.to_bus) -= b;
    bbus(ln.from_bus, ln.from_bus) += b;
    bbus(ln.to_bus, ln.to_bus) += b;
    bbus(ln.from_bus, ln.to_bus) -= b;
    bbus(ln.to_bus, ln.from_bus) -= b;
  }
  FlowMatrix out{Matrix::Zero(n, m)};
  if (m == 1) return out;

  std::vector<int> keep;
  keep.reserve(m - 1);
  for (int b = 0; b < m; ++b)
    if (b != c.slack_bus) keep.push_back(b);

  Matrix reduced(m - 1, m - 1);
  Matrix bf_reduced(n, m - 1);
  for (int i = 0; i < m - 1; ++i) {
    for (int j = 0; j < m - 1; ++j) reduced(i, j) = bbus(keep[i], keep[j]);
    bf_reduced.col(i) = bf.col(keep[i]);
  }
  Eigen::FullPivLU<Matrix> lu(reduced);
  if (!lu.isInvertible()) throw NumericalError("build_flow_matrix: reduced bus susceptance matrix is singular");
  // B_bus is symmetric, so bf_reduced * inv(reduced) = (inv(reduced) * bf_reduced^T)^T.
  const Matrix ptdf = lu.solve(bf_reduced.transpose()).transpose();
  for (int i = 0; i < m - 1; ++i) out.M.col(keep[i]) = ptdf.col(i);
  return out;
}

/// Nodal injection p_gen - d + v + omega placed on buses.
inline Vector nodal_injection(const NetworkCase& c, const Vector& gen_output, const Vector& omega) {
  if (gen_output.size() != c.gen_count()) throw DimensionError("nodal_injection: generator vector size");
  if (omega.size() != c.wind_count()) throw DimensionError("nodal_injection: fluctuation vector size");
  Vector inj = -c.demand + c.forecast_injection();
  for (int k = 0; k < c.gen_count(); ++k) inj(c.generators[k].bus) += gen_output(k);
  for (int k = 0; k < c.wind_count(); ++k) inj(c.wind[k].bus) += omega(k);
  return inj;
}

/// Line flows for realized generator outputs and wind deviation.
inline Vector line_flow_from_outputs(const NetworkCase& c, const FlowMatrix& fm, const Vector& gen_output,
                                     const Vector& omega) {
  if (fm.M.rows() != c.line_count() || fm.M.cols() != c.bus_count) {
    throw DimensionError("line_flow: flow matrix does not match case");
  }
  return fm.M * nodal_injection(c, gen_output, omega);
}

}  // namespace wccopf
