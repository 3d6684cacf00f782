#pragma once

// Scenario configuration: JSON schema, built-in presets, and load-time
// validation of every hypothesis the algorithms rely on.

#include "sodo/analysis.hpp"
#include "sodo/cost.hpp"
#include "sodo/dynamics.hpp"
#include "sodo/event.hpp"
#include "sodo/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sodo {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Algorithm { Continuous, Alternative, Event };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Continuous: return "continuous";
    case Algorithm::Alternative: return "alternative";
    case Algorithm::Event: return "event";
  }
  return "?";
}

struct InitialSpec {
  std::optional<SwarmState> literal;
  std::uint64_t seed = 42;
  double low = -5.0;
  double high = 5.0;
};

struct Diagnostics {
  bool lyapunov = true;
  bool constants = true;
  bool rate_fit = true;
};

struct Scenario {
  std::string name;
  std::size_t agents = 0;
  std::size_t dimension = 0;
  std::vector<Edge> edges;  ///< 0-based
  NetworkGraph graph;
  GlobalObjective objective;
  GainParams gains;
  Algorithm algorithm = Algorithm::Continuous;
  std::string trigger_preset = "default";
  std::optional<TriggerParams> trigger;
  double eps0 = 0.0;
  double eps = 0.1;
  double step = 0.01;
  double horizon = 50.0;
  InitialSpec initial;
  Diagnostics diagnostics;
  json resolved;  ///< the fully merged configuration that produced this scenario

  SwarmState initial_state() const {
    if (initial.literal) return *initial.literal;
    return random_initial_state(agents, dimension, initial.seed, initial.low, initial.high);
  }
};

// ---------------------------------------------------------------------------
// Literal reference data for the built-in presets.

namespace presets {

inline json path3_graph() {
  return {{"index_base", 1}, {"edges", json::array({json::array({1, 2}), json::array({2, 3})})}};
}

inline const json& scenario_matrices() {
  static const json data = {
      {"A", json::array({
                json::array({json::array({2.0, -1.0, -1.0}), json::array({-1.0, 1.5, -0.5}),
                             json::array({-1.0, -0.5, 1.5})}),
                json::array({json::array({3.0, -3.0, 0.0}), json::array({-3.0, 4.0, -1.0}),
                             json::array({0.0, -1.0, 1.0})}),
                json::array({json::array({2.5, 0.0, -2.5}), json::array({0.0, 10.0, -10.0}),
                             json::array({-2.5, -10.0, 12.5})}),
            })},
      {"a", json::array({json::array({0.6132, -0.5278, 1.2416}),
                         json::array({-0.1576, -1.3736, 0.8708}),
                         json::array({-1.5685, -1.8443, 0.2884})})},
      {"b", json::array({json::array({0.0, 0.0, 0.0}), json::array({2.5, 2.0, 3.0}),
                         json::array({-3.5, -2.7, -1.0})})},
      {"C", json::array({
                json::array({json::array({4.7471, 1.2843, 0.5836}),
                             json::array({1.2843, 5.0861, -2.4209}),
                             json::array({0.5836, -2.4209, 2.2270})}),
                json::array({json::array({1.3528, 0.5141, -2.1684}),
                             json::array({0.5141, 1.2333, -0.5857}),
                             json::array({-2.1684, -0.5857, 4.0361})}),
                json::array({json::array({1.0223, 1.2630, -0.4907}),
                             json::array({1.2630, 2.1391, -0.1378}),
                             json::array({-0.4907, -0.1378, 0.7207})}),
            })},
  };
  return data;
}

inline json common(std::string name, double theta) {
  return {{"schema_version", kSchemaVersion},
          {"name", std::move(name)},
          {"agents", 3},
          {"dimension", 3},
          {"graph", path3_graph()},
          {"gains", {{"alpha", 2.0}, {"beta", 2.0}, {"gamma", 6.0}, {"theta", theta}}},
          {"algorithm", "continuous"},
          {"trigger", {{"preset", "default"}}},
          {"design", {{"eps", 0.1}}},
          {"integration", {{"step", 0.01}, {"horizon", 50.0}}},
          {"initial", {{"random", {{"seed", 42}, {"low", -5.0}, {"high", 5.0}}}}},
          {"diagnostics", {{"lyapunov", true}, {"constants", true}, {"rate_fit", true}}}};
}

/// Convex quadratics 1/2 (x - a_i)^T A_i (x - a_i); the sum is only convex.
inline json scenario1() {
  json j = common("scenario1", 5.0);
  const auto& d = scenario_matrices();
  j["costs"] = json::array();
  for (int i = 0; i < 3; ++i) {
    j["costs"].push_back({{"type", "quadratic"}, {"hessian", d["A"][i]}, {"shift", d["a"][i]}});
  }
  return j;
}

/// Quartics ||x - b_i||^4; individually convex, strongly convex in sum.
inline json scenario2() {
  json j = common("scenario2", 5.0);
  const auto& d = scenario_matrices();
  j["costs"] = json::array();
  for (int i = 0; i < 3; ++i) j["costs"].push_back({{"type", "quartic"}, {"center", d["b"][i]}});
  return j;
}

/// 1/2 x^T C_i x + a_i^T x with theta = 3.5.
inline json scenario3() {
  json j = common("scenario3", 3.5);
  const auto& d = scenario_matrices();
  j["costs"] = json::array();
  for (int i = 0; i < 3; ++i) {
    j["costs"].push_back({{"type", "quadratic"}, {"hessian", d["C"][i]}, {"linear", d["a"][i]}});
  }
  return j;
}

/// Single agent, f = x^2 / 2: x'' + gamma x' + alpha x = 0.
inline json heavy_ball() {
  return {{"schema_version", kSchemaVersion},
          {"name", "heavy-ball"},
          {"agents", 1},
          {"dimension", 1},
          {"graph", {{"index_base", 1}, {"edges", json::array()}}},
          {"costs", json::array({{{"type", "quadratic"}, {"hessian", json::array({json::array({1.0})})}}})},
          {"gains", {{"alpha", 2.0}, {"beta", 1.0}, {"gamma", 6.0}, {"theta", 1.0}}},
          {"algorithm", "continuous"},
          {"design", {{"eps", 0.1}}},
          {"integration", {{"step", 0.01}, {"horizon", 10.0}}},
          {"initial", {{"x", json::array({json::array({1.0})})}, {"y", json::array({json::array({0.0})})}}},
          {"diagnostics", {{"lyapunov", false}, {"constants", false}, {"rate_fit", false}}}};
}

inline const std::map<std::string, json (*)()>& registry() {
  static const std::map<std::string, json (*)()> r = {
      {"cdc18-scenario1", &scenario1},
      {"cdc18-scenario2", &scenario2},
      {"cdc18-scenario3", &scenario3},
      {"heavy-ball", &heavy_ball},
  };
  return r;
}

inline std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

inline json get(const std::string& name) {
  const auto& r = registry();
  auto it = r.find(name);
  if (it == r.end()) {
    std::string known;
    for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return it->second();
}

}  // namespace presets

// ---------------------------------------------------------------------------
// JSON -> Scenario

namespace detail {

inline Matrix json_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw ConfigError(what + ": expected a row-major nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Vector json_vector(const json& j, std::size_t p, const std::string& what) {
  if (!j.is_array() || j.size() != p)
    throw ConfigError(what + ": expected an array of length " + std::to_string(p));
  Vector v(static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < p; ++k) v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  return v;
}

/// Scalar broadcast to every agent, or one value per agent.
inline Vector per_agent(const json& j, std::size_t n, const std::string& what) {
  if (j.is_number()) return Vector::Constant(static_cast<Eigen::Index>(n), j.get<double>());
  return json_vector(j, n, what);
}

inline CostFunction parse_cost(const json& c, std::size_t p, std::size_t index) {
  const std::string who = "costs[" + std::to_string(index + 1) + "]";
  const std::string type = c.value("type", "");
  const auto pp = static_cast<Eigen::Index>(p);
  std::optional<CostFunction> f;
  if (type == "quadratic") {
    Matrix h = json_matrix(c.at("hessian"), who + ".hessian");
    if (h.rows() != pp || h.cols() != pp) throw ConfigError(who + ".hessian must be p x p");
    Vector shift = c.contains("shift") ? json_vector(c["shift"], p, who + ".shift") : Vector::Zero(pp);
    Vector lin = c.contains("linear") ? json_vector(c["linear"], p, who + ".linear") : Vector::Zero(pp);
    try {
      f = quadratic_cost(std::move(h), std::move(shift), std::move(lin), c.value("constant", 0.0));
    } catch (const CostError& e) {
      throw ConfigError(who + ": " + e.what());
    }
  } else if (type == "quartic") {
    f = quartic_family({json_vector(c.at("center"), p, who + ".center")}).front();
  } else {
    throw ConfigError(who + ": unknown cost type '" + type + "' (quadratic | quartic)");
  }
  if (c.contains("lipschitz")) f->set_global_lipschitz(c["lipschitz"].get<double>());
  return *f;
}

inline TriggerParams parse_trigger(const json& t, std::size_t n, std::string& preset_name) {
  preset_name = t.value("preset", "default");
  TriggerParams p;
  if (preset_name == "default") {
    p = TriggerParams::defaults(n);
  } else if (preset_name == "local") {
    p = TriggerParams::local_only(n);
  } else {
    throw ConfigError("trigger.preset must be 'default' or 'local'");
  }
  if (t.contains("sigma")) p.sigma = per_agent(t["sigma"], n, "trigger.sigma");
  if (t.contains("delta")) p.delta = per_agent(t["delta"], n, "trigger.delta");
  if (t.contains("chi0")) p.chi0 = per_agent(t["chi0"], n, "trigger.chi0");
  if (t.contains("phi")) {
    p.phi_rate = per_agent(t["phi"], n, "trigger.phi");
  }
  if (t.contains("kappa")) {
    p.kappa = per_agent(t["kappa"], n, "trigger.kappa");
  } else if (t.contains("phi") || t.contains("delta")) {
    p.kappa = (2.0 * (1.0 - p.delta.array()) / p.phi_rate.array() + 1.0).matrix();
  }
  const std::string den = t.value("denominator", "varphi");
  if (den == "varphi") {
    p.denominator = ThresholdDenominator::Varphi;
  } else if (den == "decay_rate") {
    p.denominator = ThresholdDenominator::DecayRate;
  } else {
    throw ConfigError("trigger.denominator must be 'varphi' or 'decay_rate'");
  }
  return p;
}

inline AgentMatrix state_block(const json& j, std::size_t n, std::size_t p, const std::string& what) {
  Matrix m = json_matrix(j, what);
  if (m.rows() != static_cast<Eigen::Index>(n) || m.cols() != static_cast<Eigen::Index>(p))
    throw ConfigError(what + " must be agents x dimension");
  return m;
}

}  // namespace detail

inline Scenario scenario_from_json_unchecked(json doc);

/// Applies the preset named in the document (if any), then validates and
/// builds the scenario. All hypothesis gates fire here.
inline Scenario scenario_from_json(json doc) {
  try {
    return scenario_from_json_unchecked(std::move(doc));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

inline Scenario scenario_from_json_unchecked(json doc) {
  if (doc.contains("preset")) {
    json base = presets::get(doc["preset"].get<std::string>());
    json patch = doc;
    patch.erase("preset");
    base.merge_patch(patch);
    doc = std::move(base);
  }
  if (!doc.contains("schema_version")) throw ConfigError("missing schema_version");
  if (doc["schema_version"].get<int>() != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + doc["schema_version"].dump() + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }

  Scenario s;
  s.name = doc.value("name", "scenario");
  s.agents = doc.at("agents").get<std::size_t>();
  s.dimension = doc.at("dimension").get<std::size_t>();
  const std::size_t n = s.agents, p = s.dimension;
  if (n == 0 || p == 0) throw ConfigError("agents and dimension must be positive");

  // graph
  const json& gj = doc.at("graph");
  const int base = gj.value("index_base", 1);
  if (base != 0 && base != 1) throw ConfigError("graph.index_base must be 0 or 1");
  std::vector<Edge> edges;
  for (const auto& e : gj.at("edges")) {
    if (!e.is_array() || e.size() < 2 || e.size() > 3) throw ConfigError("graph edge must be [i, j] or [i, j, w]");
    edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(), e.size() == 3 ? e[2].get<double>() : 1.0});
  }
  try {
    s.graph = build_graph(n, edges, base == 1 ? IndexBase::One : IndexBase::Zero);
  } catch (const GraphError& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
  const std::size_t off = base == 1 ? 1 : 0;
  for (auto e : edges) s.edges.push_back({e.i - off, e.j - off, e.weight});
  if (n > 1 && !is_connected(s.graph)) throw DisconnectedGraph(connected_components(s.graph));

  // costs
  const json& cj = doc.at("costs");
  if (!cj.is_array() || cj.size() != n) throw ConfigError("costs must list one entry per agent");
  std::vector<CostFunction> costs;
  for (std::size_t i = 0; i < n; ++i) costs.push_back(detail::parse_cost(cj[i], p, i));
  s.objective = GlobalObjective(std::move(costs));

  // gains and design
  const json& kj = doc.at("gains");
  s.gains = {kj.at("alpha").get<double>(), kj.at("beta").get<double>(), kj.at("gamma").get<double>(),
             kj.at("theta").get<double>()};
  s.gains.validate();
  const json design = doc.value("design", json::object());
  s.eps0 = design.contains("eps0") ? design["eps0"].get<double>() : default_eps0(s.gains);
  check_eps0(s.gains, s.eps0);
  s.eps = design.value("eps", 0.1);
  if (!(s.eps > 0.0)) throw HypothesisViolation("Design parameter range", "eps must be > 0");

  // algorithm
  const std::string algo = doc.value("algorithm", "continuous");
  if (algo == "continuous") {
    s.algorithm = Algorithm::Continuous;
  } else if (algo == "alternative") {
    s.algorithm = Algorithm::Alternative;
  } else if (algo == "event") {
    s.algorithm = Algorithm::Event;
  } else {
    throw ConfigError("algorithm must be continuous | alternative | event");
  }
  if (s.algorithm == Algorithm::Event) {
    if (n < 2) throw ConfigError("event mode needs at least two agents");
    s.objective.max_global_lipschitz();  // global Lipschitz gate
    s.trigger = detail::parse_trigger(doc.value("trigger", json::object()), n, s.trigger_preset);
    s.trigger->validate(n);
  }

  // integration
  const json ij = doc.value("integration", json::object());
  s.step = ij.value("step", 0.01);
  s.horizon = ij.value("horizon", 50.0);
  step_count(s.step, s.horizon);

  // initial state
  const json init = doc.value("initial", json::object());
  if (init.contains("x") && !init["x"].is_null()) {
    SwarmState st = SwarmState::zeros(n, p);
    st.x = detail::state_block(init["x"], n, p, "initial.x");
    if (init.contains("y")) st.y = detail::state_block(init["y"], n, p, "initial.y");
    if (init.contains("v")) st.v = detail::state_block(init["v"], n, p, "initial.v");
    if (st.v.colwise().sum().cwiseAbs().maxCoeff() > 1e-12)
      throw HypothesisViolation("Initialization", "sum_i v_i(0) must be zero");
    s.initial.literal = std::move(st);
  } else if (init.contains("random")) {
    const json& r = init["random"];
    s.initial.seed = r.value("seed", std::uint64_t{42});
    s.initial.low = r.value("low", -5.0);
    s.initial.high = r.value("high", 5.0);
    if (!(s.initial.low < s.initial.high)) throw ConfigError("initial.random needs low < high");
  } else {
    throw ConfigError("initial must contain literal 'x' or 'random'");
  }

  const json dj = doc.value("diagnostics", json::object());
  s.diagnostics.lyapunov = dj.value("lyapunov", true);
  s.diagnostics.constants = dj.value("constants", true);
  s.diagnostics.rate_fit = dj.value("rate_fit", true);

  s.resolved = std::move(doc);
  return s;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' does not parse: " + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

}  // namespace sodo
