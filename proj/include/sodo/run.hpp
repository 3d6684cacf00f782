#pragma once

// Scenario execution: integrates, evaluates the enabled invariant checks,
// and writes trajectory / constants / events / summary files.

#include "sodo/analysis.hpp"
#include "sodo/scenario.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <set>
#include <string>
#include <system_error>
#include <vector>

namespace sodo {

namespace fs = std::filesystem;

/// Shortest round-trip decimal form; identical inputs give identical bytes.
inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Constants

struct ConstantEntry {
  std::string symbol;
  double value = 0.0;
  std::string provenance;
  bool estimated = false;
};

struct ConstantsBundle {
  TheoremConstants constants;
  std::optional<SpectralData> spectral;
  std::vector<ConstantEntry> entries;
};

namespace detail {

/// Deterministic points in the ball of given radius around c.
inline std::vector<Vector> ball_samples(const Vector& c, double radius, std::size_t count,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vector> out;
  const auto p = c.size();
  for (std::size_t k = 0; k < count; ++k) {
    Vector d(p);
    for (Eigen::Index i = 0; i < p; ++i) d(i) = g(rng);
    const double nd = d.norm();
    if (nd == 0.0) continue;
    const double r = radius * std::pow(u(rng), 1.0 / static_cast<double>(p));
    out.emplace_back(c + (r / nd) * d);
  }
  return out;
}

inline std::vector<ConstantEntry> constant_entries(const TheoremConstants& tc) {
  std::vector<ConstantEntry> e;
  const bool est = tc.mf_estimated;
  auto add = [&](std::string sym, double v, std::string prov, bool estimated) {
    e.push_back({std::move(sym), v, std::move(prov), estimated});
  };
  add("eps0", tc.eps0, "design parameter in (theta/(alpha gamma), 1)", false);
  add("eps", tc.eps, "design parameter > 0", false);
  add("rho", tc.rho, "largest Laplacian eigenvalue", false);
  add("rho2", tc.rho2, "smallest positive Laplacian eigenvalue", false);
  add("m_f", tc.m_f, est ? "restricted strong convexity modulus (sampled)" : "lambda_min(sum_i H_i)", est);
  if (const auto& c = tc.thm1) {
    const std::string t = "continuous rate: ";
    add("D_radius", c->D_radius, t + "sqrt(2 V1(0) / (gamma^2 eps0 (1 - sqrt(eps0))))", false);
    add("V1_0", c->V1_at_0, t + "alpha W1 + W2 at the initial state", false);
    add("M_D", c->M_D, t + "max_i gradient Lipschitz constant on D", false);
    add("m1", c->m1, t + "min{m_f/2, rho2 m_f^2 alpha gamma eps0 / (2 (alpha gamma eps0 - theta)(m_f^2 + 16 M(D)^2))}", est);
    add("eps1", c->eps1, t + "min{gamma (1 - eps0), alpha gamma eps0 m1}", est);
    add("eps2", c->eps2, t + "max{gamma/alpha + gamma^2/theta + theta/alpha^2, alpha^2 M(D)^2 / theta}", false);
    add("eps3", c->eps3, t + "min{eps1, eps theta / 2}", est);
    add("eps4", c->eps4, t + "max{1 + eps eps2/eps1 + eps/alpha, (1 + eps eps2/eps1)(gamma^2 eps0 + alpha beta rho + alpha M(D)/2) + eps M(D)/2, (1 + eps eps2/eps1) theta gamma eps0 / (beta rho2) + eps alpha}", est);
    add("iota1", c->iota1, t + "m_f / (4 M(D))", est);
    add("eps_tilde1", c->eps_tilde1, t + "(1 + eps eps2/eps1) gamma^2 eps0 (1 - eps0) / 2", est);
    add("rate_bound_thm1", c->rate_bound, t + "eps3 / (2 eps4)", est);
  }
  if (const auto& c = tc.thm2) {
    const std::string t = "event-triggered rate: ";
    add("Mbar", c->Mbar, t + "max_i global gradient Lipschitz constant", false);
    add("m2", c->m2, t + "min{m_f/2, 4 rho2 m_f^2 alpha / ((alpha gamma eps0 - theta) beta (m_f^2 + 16 Mbar^2))}", est);
    add("eps5", c->eps5, t + "min{gamma (1 - eps0)/2, m2 alpha}", est);
    add("eps6", c->eps6, t + "max{gamma/alpha + gamma^2/theta + theta/alpha^2, alpha^2 Mbar^2 / theta}", false);
    add("eps7", c->eps7, t + "1 + eps eps6 / eps5", est);
    add("eps8", c->eps8, t + "eps / (4 eps7)", est);
    add("k_d", c->k_d, t + "min_i {phi_i - (1 - delta_i)/kappa_i}", false);
    add("eps9", c->eps9, t + "min{eps5, eps theta / 4, k_d}", est);
    add("eps10", c->eps10, t + "max{eps7 + eps/alpha, eps7 (gamma^2 eps0 + alpha beta rho + alpha Mbar/2) + eps Mbar/2, eps7 theta gamma eps0 / (beta rho2) + eps alpha / rho2}", est);
    add("iota2", c->iota2, t + "m_f / (4 Mbar)", est);
    add("eps_tilde2", c->eps_tilde2, t + "eps7 gamma^2 eps0 (1 - eps0) / 2", est);
    for (Eigen::Index i = 0; i < c->varphi.size(); ++i) {
      add("varphi_" + std::to_string(i + 1), c->varphi(i), t + "threshold normalizer of agent " + std::to_string(i + 1), est);
    }
    add("rate_bound_thm2", c->rate_bound, t + "eps9 / (2 eps10)", est);
  }
  return e;
}

}  // namespace detail

/// Computes whatever theorem constants the scenario admits. Missing
/// hypotheses are recorded as notes rather than thrown.
inline ConstantsBundle compute_constants(const Scenario& s, const Vector& xstar, const SwarmState& s0) {
  ConstantsBundle b;
  TheoremConstants& tc = b.constants;
  tc.eps0 = s.eps0;
  tc.eps = s.eps;
  if (s.agents < 2) {
    tc.notes.push_back("single agent: rho2 undefined, theorem constants skipped");
    b.entries = detail::constant_entries(tc);
    return b;
  }
  b.spectral = spectral(s.graph);
  tc.rho = b.spectral->rho;
  tc.rho2 = b.spectral->rho2;

  double radius = 1.0;
  for (Eigen::Index i = 0; i < s0.x.rows(); ++i)
    radius = std::max(radius, (s0.x.row(i).transpose() - xstar).norm());
  const MfEstimate mf = estimate_mf(s.objective, xstar, detail::ball_samples(xstar, radius, 400, 7));
  tc.m_f = mf.assumption_violated ? 0.0 : mf.value;
  tc.mf_estimated = !mf.exact;
  if (mf.assumption_violated) {
    tc.notes.push_back("restricted strong convexity fails (m_f = " + fmt_num(mf.value) +
                       "); only asymptotic convergence applies");
  }
  if (tc.mf_estimated) tc.notes.push_back("m_f sampled on a ball around x*; constants depending on it are estimates");

  LyapunovContext ctx = make_lyapunov_context(s.graph, *b.spectral, s.objective, s.gains, s.eps0, s.eps, xstar);
  const double v10 = lyapunov_V1(ctx, s0);
  try {
    tc.thm1 = compute_constants_thm1(*b.spectral, s.objective, s.gains, s.eps0, s.eps, tc.m_f, v10, xstar);
  } catch (const HypothesisViolation& e) {
    tc.notes.push_back(std::string("continuous-rate constants unavailable: ") + e.what());
  }
  if (s.objective.globally_lipschitz()) {
    const TriggerParams trig = s.trigger ? *s.trigger : TriggerParams::defaults(s.agents);
    try {
      tc.thm2 = compute_constants_thm2(s.graph, *b.spectral, s.objective, s.gains, s.eps0, s.eps, tc.m_f, trig);
    } catch (const HypothesisViolation& e) {
      tc.notes.push_back(std::string("event-triggered constants unavailable: ") + e.what());
    }
  } else {
    tc.notes.push_back("event-triggered constants need a global gradient Lipschitz bound on every cost");
  }
  if (tc.thm1 && tc.thm2) {
    tc.notes.push_back("eps4 ends with eps*alpha while eps10 ends with eps*alpha/rho2; both kept as stated");
  }
  b.entries = detail::constant_entries(tc);
  return b;
}

inline json constants_json(const Scenario& s, const ConstantsBundle& b) {
  json j;
  j["scenario"] = s.name;
  j["mf_estimated"] = b.constants.mf_estimated;
  j["entries"] = json::array();
  for (const auto& e : b.entries) {
    j["entries"].push_back(
        {{"symbol", e.symbol}, {"value", e.value}, {"provenance", e.provenance}, {"estimated", e.estimated}});
  }
  j["notes"] = b.constants.notes;
  return j;
}

// ---------------------------------------------------------------------------
// Run

struct CheckResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;  ///< worst observed slack; positive means violated
  std::string detail;
};

struct RunOptions {
  std::optional<fs::path> out_dir;  ///< nullopt: no files
};

struct RunReport {
  std::string scenario;
  Algorithm algorithm = Algorithm::Continuous;
  std::string status = "ok";
  std::string error;
  Vector xstar;
  bool xstar_unique = true;
  double terminal_error = 0.0;       ///< max_i ||x_i(T) - x*||
  double terminal_error_norm = 0.0;  ///< ||x(T) - 1 kron x*||
  double consensus_residual = 0.0;
  double gradient_sum_residual = 0.0;  ///< ||sum_i grad f_i(mean_i x_i(T))||
  std::optional<RateFit> fit;
  ConstantsBundle constants;
  std::optional<ZenoReport> triggers;
  std::vector<CheckResult> checks;
  std::map<std::string, std::string> files;

  std::vector<double> times;
  std::vector<double> err_max;
  std::vector<double> err_norm;
  std::vector<LyapunovSample> lyapunov;
  Trajectory trajectory;
  std::vector<Vector> chi_history;
  std::optional<TriggerState> trigger_state;
  double runtime_seconds = 0.0;

  bool all_checks_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const CheckResult* check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
  /// 0 ok, 1 an invariant check failed, 3 diverged.
  int exit_code() const {
    if (status == "diverged") return 3;
    return all_checks_passed() ? 0 : 1;
  }
};

inline constexpr double kSlackTol = 1e-9;

namespace detail {

inline CheckResult make_check(std::string name, double worst, double tol, std::string detail_text) {
  return {std::move(name), worst <= tol, worst, std::move(detail_text)};
}

inline json state_json(const SwarmState& s) {
  auto mat = [](const AgentMatrix& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
      a.push_back(row);
    }
    return a;
  };
  return {{"t", s.t}, {"x", mat(s.x)}, {"y", mat(s.y)}, {"v", mat(s.v)}};
}

inline void write_trajectory_csv(const fs::path& path, const Scenario& s, const RunReport& r) {
  std::ofstream out(path);
  const std::size_t n = s.agents, p = s.dimension;
  out << "t";
  for (const char* blk : {"x", "y", "v"})
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t k = 1; k <= p; ++k) out << ',' << blk << '_' << i << '_' << k;
  out << ",err_max,err_norm,consensus";
  const bool lyap = !r.lyapunov.empty();
  if (lyap) out << ",V1,V2,V3,W1,W2,W3,W4";
  const bool ev = !r.chi_history.empty();
  if (ev)
    for (std::size_t i = 1; i <= n; ++i) out << ",chi_" << i;
  out << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? fmt_num(*v) : std::string(); };
  for (std::size_t k = 0; k < r.trajectory.samples.size(); ++k) {
    const SwarmState& st = r.trajectory.samples[k];
    out << fmt_num(st.t);
    for (const AgentMatrix* m : {&st.x, &st.y, &st.v})
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        for (Eigen::Index c = 0; c < m->cols(); ++c) out << ',' << fmt_num((*m)(i, c));
    out << ',' << fmt_num(r.err_max[k]) << ',' << fmt_num(r.err_norm[k]) << ','
        << fmt_num(consensus_residual(st.x));
    if (lyap) {
      const LyapunovSample& l = r.lyapunov[k];
      out << ',' << fmt_num(l.V1) << ',' << opt(l.V2) << ',' << opt(l.V3) << ',' << fmt_num(l.W1) << ','
          << fmt_num(l.W2) << ',' << fmt_num(l.W3) << ',' << opt(l.W4);
    }
    if (ev)
      for (Eigen::Index i = 0; i < r.chi_history[k].size(); ++i) out << ',' << fmt_num(r.chi_history[k](i));
    out << '\n';
  }
}

inline void write_events_csv(const fs::path& path, const TriggerState& ts) {
  std::ofstream out(path);
  out << "agent,k,t,chi_at_trigger,error_norm_sq,qhat\n";
  for (std::size_t i = 0; i < ts.event_log.size(); ++i) {
    for (const auto& e : ts.event_log[i]) {
      out << i + 1 << ',' << e.k << ',' << fmt_num(e.t) << ',' << fmt_num(e.chi) << ','
          << fmt_num(e.error_norm_sq) << ',' << fmt_num(e.qhat) << '\n';
    }
  }
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json summary_json(const Scenario& s, const RunReport& r) {
  json j;
  j["scenario"] = s.name;
  j["algorithm"] = to_string(s.algorithm);
  j["status"] = r.status;
  if (!r.error.empty()) j["error"] = r.error;
  j["exit_code"] = r.exit_code();
  j["xstar"] = vector_json(r.xstar);
  j["xstar_unique"] = r.xstar_unique;
  j["terminal_error_max"] = r.terminal_error;
  j["terminal_error_norm"] = r.terminal_error_norm;
  j["consensus_residual"] = r.consensus_residual;
  j["gradient_sum_residual"] = r.gradient_sum_residual;
  j["horizon"] = s.horizon;
  j["step"] = s.step;
  if (!s.initial.literal) j["seed"] = s.initial.seed;
  if (r.fit) {
    j["fitted_rate"] = {{"rate", r.fit->rate}, {"samples", r.fit->samples_used}, {"truncated", r.fit->truncated},
                        {"window", "middle 60% of horizon"}, {"metric", "||x - 1 kron x*||"}};
  }
  if (const auto& c = r.constants.constants.thm1) j["rate_bound_thm1"] = c->rate_bound;
  if (const auto& c = r.constants.constants.thm2) j["rate_bound_thm2"] = c->rate_bound;
  if (r.triggers) {
    json agents = json::array();
    for (std::size_t i = 0; i < r.triggers->agents.size(); ++i) {
      const auto& a = r.triggers->agents[i];
      agents.push_back({{"agent", i + 1}, {"count", a.count}, {"min_gap", a.min_gap}, {"mean_gap", a.mean_gap}});
    }
    j["triggers"] = {{"agents", agents},
                     {"total", r.triggers->total_events},
                     {"samples_per_agent", r.triggers->samples_per_agent},
                     {"trigger_ratio", r.triggers->trigger_ratio},
                     {"reduction_ratio", r.triggers->reduction_ratio}};
  }
  json checks = json::array();
  for (const auto& c : r.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}, {"detail", c.detail}});
  j["checks"] = checks;
  j["files"] = r.files;
  return j;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace detail

/// Output directory precedence: explicit --out, then SODO_OUT_DIR, then out/<name>.
inline fs::path resolve_out_dir(const std::optional<std::string>& flag, const std::string& scenario_name) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SODO_OUT_DIR"); env && *env) return fs::path(env) / scenario_name;
  return fs::path("out") / scenario_name;
}

inline RunReport run(const Scenario& s, const RunOptions& opts = {}) {
  const auto wall0 = std::chrono::steady_clock::now();
  RunReport r;
  r.scenario = s.name;
  r.algorithm = s.algorithm;

  const MinimizerResult mr = minimizer_oracle(s.objective);
  r.xstar = mr.x;
  r.xstar_unique = mr.unique;
  const SwarmState s0 = s.initial_state();

  const bool want_constants = s.diagnostics.constants || s.diagnostics.lyapunov || s.diagnostics.rate_fit ||
                              s.algorithm == Algorithm::Event;
  if (want_constants) r.constants = compute_constants(s, r.xstar, s0);
  const TheoremConstants& tc = r.constants.constants;

  std::optional<TriggerLaw> law;
  if (s.algorithm == Algorithm::Event) {
    const auto& t2 = tc.thm2;
    VarphiConstants vc;
    if (t2) {
      vc.varphi = t2->varphi;
    } else {
      // sigma = 0 leaves varphi unused; anything else needs the full constant set.
      if (s.trigger->sigma.cwiseAbs().maxCoeff() > 0.0 && s.trigger->denominator == ThresholdDenominator::Varphi)
        throw HypothesisViolation("Event-triggered constants",
                                  "threshold normalizers need m_f > 0 and a connected graph");
      vc.varphi = Vector::Ones(static_cast<Eigen::Index>(s.agents));
    }
    law = TriggerLaw::make(*s.trigger, vc, s.gains, s.eps0);
  }

  double discipline_worst = -std::numeric_limits<double>::infinity();
  try {
    if (s.algorithm == Algorithm::Event) {
      auto obs = [&](const SwarmState&, const TriggerState& ts) {
        for (std::size_t i = 0; i < ts.agents(); ++i)
          discipline_worst = std::max(discipline_worst, discipline_slack(i, ts, *law, s.graph));
      };
      EventRun er = integrate_event(s0, s.graph, s.objective, s.gains, *law, s.step, s.horizon, {obs});
      r.trajectory = std::move(er.trajectory);
      r.chi_history = std::move(er.chi_history);
      r.triggers = zeno_report(er.triggers, s.horizon, er.steps + 1);
      r.trigger_state = std::move(er.triggers);
    } else {
      if (s.algorithm == Algorithm::Continuous) {
        r.trajectory = integrate([&](const SwarmState& st) { return rhs_continuous(st, s.graph, s.objective, s.gains); },
                                 s0, s.step, s.horizon);
      } else {
        r.trajectory = integrate([&](const SwarmState& st) { return rhs_alternative(st, s.graph, s.objective, s.gains); },
                                 s0, s.step, s.horizon);
      }
    }
  } catch (const DivergenceError& e) {
    r.status = "diverged";
    r.error = e.what();
    if (opts.out_dir) {
      fs::create_directories(*opts.out_dir);
      detail::write_json(*opts.out_dir / "last_state.json", detail::state_json(e.last_finite_state()));
      r.files["last_state"] = (*opts.out_dir / "last_state.json").string();
      detail::write_json(*opts.out_dir / "summary.json", detail::summary_json(s, r));
    }
    return r;
  }

  const auto& samples = r.trajectory.samples;
  r.times.reserve(samples.size());
  for (const auto& st : samples) {
    r.times.push_back(st.t);
    r.err_max.push_back(max_agent_error(st.x, r.xstar));
    r.err_norm.push_back(stacked_error(st.x, r.xstar));
  }
  const SwarmState& last = samples.back();
  r.terminal_error = r.err_max.back();
  r.terminal_error_norm = r.err_norm.back();
  r.consensus_residual = consensus_residual(last.x);
  r.gradient_sum_residual = s.objective.sum_gradient(last.x.colwise().mean().transpose()).norm();

  // conservation of sum_i v_i
  double cons = 0.0;
  for (const auto& st : samples) cons = std::max(cons, st.v.colwise().sum().cwiseAbs().maxCoeff() / (1.0 + st.t));
  r.checks.push_back(detail::make_check("conservation", cons, 1e-10, "max_t |sum_i v_i(t)|_inf / (1 + t)"));

  // Lyapunov diagnostics
  const bool have_spectral = r.constants.spectral.has_value();
  if (s.diagnostics.lyapunov && have_spectral) {
    LyapunovContext ctx =
        make_lyapunov_context(s.graph, *r.constants.spectral, s.objective, s.gains, s.eps0, s.eps, r.xstar);
    if (tc.thm1) attach(ctx, *tc.thm1);
    if (tc.thm2 && s.algorithm == Algorithm::Event) attach(ctx, *tc.thm2);
    r.lyapunov.reserve(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const Vector* chi = r.chi_history.empty() ? nullptr : &r.chi_history[k];
      r.lyapunov.push_back(lyapunov_sample(ctx, samples[k], chi));
    }
    const auto& L = r.lyapunov;
    if (s.algorithm == Algorithm::Continuous) {
      double inc = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k < L.size(); ++k) inc = std::max(inc, L[k].V1 - L[k - 1].V1);
      r.checks.push_back(detail::make_check("V1_nonincreasing", inc, 1e-8, "max per-step increase of V1"));
      if (const auto& c = tc.thm1) {
        double w2 = -std::numeric_limits<double>::infinity(), we = w2;
        const double v20 = *L.front().V2;
        const double amp = std::sqrt(v20 / c->eps_tilde1);
        for (std::size_t k = 0; k < L.size(); ++k) {
          const double t = L[k].t - L.front().t;
          w2 = std::max(w2, *L[k].V2 - (v20 * std::exp(-(c->eps3 / c->eps4) * t) + 1e-6));
          we = std::max(we, r.err_max[k] - (amp * std::exp(-c->rate_bound * t) + 1e-6));
        }
        r.checks.push_back(detail::make_check("V2_envelope", w2, 0.0, "max_t V2(t) - (V2(0) exp(-eps3/eps4 t) + 1e-6)"));
        r.checks.push_back(detail::make_check("error_envelope", we, 0.0,
                                              "max_t max_i ||x_i - x*|| - (sqrt(V2(0)/eps_tilde1) exp(-rate t) + 1e-6)"));
      }
    }
    if (s.algorithm == Algorithm::Event && tc.thm2 && L.front().V3) {
      const auto& c = *tc.thm2;
      double w3 = -std::numeric_limits<double>::infinity();
      const double v30 = *L.front().V3;
      for (const auto& l : L) {
        w3 = std::max(w3, *l.V3 - (v30 * std::exp(-(c.eps9 / c.eps10) * (l.t - L.front().t)) + 1e-6));
      }
      r.checks.push_back(detail::make_check("V3_envelope", w3, 0.0, "max_t V3(t) - (V3(0) exp(-eps9/eps10 t) + 1e-6)"));
    }
  }

  if (s.diagnostics.rate_fit) {
    r.fit = fit_rate(r.times, r.err_norm);
    std::optional<double> bound;
    if (s.algorithm == Algorithm::Continuous && tc.thm1) bound = tc.thm1->rate_bound;
    if (s.algorithm == Algorithm::Event && tc.thm2) bound = tc.thm2->rate_bound;
    if (bound && std::isfinite(r.fit->rate)) {
      r.checks.push_back(detail::make_check("rate_vs_bound", *bound - r.fit->rate, 0.0,
                                            "theorem rate bound minus fitted rate"));
    }
  }

  if (s.algorithm == Algorithm::Event) {
    r.checks.push_back(detail::make_check("trigger_discipline", discipline_worst, kSlackTol,
                                          "max kappa_i (||e_i||^2 - c_i qhat_i) - chi_i"));
    const TriggerParams& p = law->params;
    double floor_worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < r.chi_history.size(); ++k) {
      const double t = r.times[k] - r.times.front();
      for (Eigen::Index i = 0; i < p.chi0.size(); ++i) {
        const double fl = p.chi0(i) * std::exp(-(p.phi_rate(i) + p.delta(i) / p.kappa(i)) * t);
        floor_worst = std::max(floor_worst, fl - r.chi_history[k](i));
      }
    }
    r.checks.push_back(detail::make_check("chi_floor", floor_worst, kSlackTol,
                                          "max chi_i(0) exp(-(phi_i + delta_i/kappa_i) t) - chi_i(t)"));
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& a : r.triggers->agents) gap = std::min(gap, a.min_gap);
    r.checks.push_back(detail::make_check("min_inter_event_gap", s.step - gap, 1e-9 * s.step,
                                          "step minus smallest inter-event time"));
  }

  if (opts.out_dir) {
    const fs::path& dir = *opts.out_dir;
    fs::create_directories(dir);
    detail::write_trajectory_csv(dir / "trajectory.csv", s, r);
    r.files["trajectory"] = (dir / "trajectory.csv").string();
    if (want_constants) {
      detail::write_json(dir / "constants.json", constants_json(s, r.constants));
      r.files["constants"] = (dir / "constants.json").string();
    }
    if (r.trigger_state) {
      detail::write_events_csv(dir / "events.csv", *r.trigger_state);
      r.files["events"] = (dir / "events.csv").string();
    }
    detail::write_json(dir / "config.resolved.json", s.resolved);
    r.files["config"] = (dir / "config.resolved.json").string();
    r.files["summary"] = (dir / "summary.json").string();
    detail::write_json(dir / "summary.json", detail::summary_json(s, r));
  }
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Compare

struct CompareResult {
  std::vector<std::string> columns;
  std::vector<RunReport> reports;
  std::optional<fs::path> csv;
};

/// Runs the scenarios concurrently and merges their max-agent error curves
/// into one CSV keyed by sample time.
inline CompareResult compare(const std::vector<Scenario>& scenarios, const std::optional<fs::path>& out_dir) {
  if (scenarios.empty()) throw ConfigError("compare needs at least one scenario");
  for (const auto& s : scenarios) {
    if (s.step != scenarios.front().step || s.horizon != scenarios.front().horizon) {
      throw ConfigError("compare: scenario '" + s.name + "' has step/horizon (" + fmt_num(s.step) + ", " +
                        fmt_num(s.horizon) + ") but '" + scenarios.front().name + "' has (" +
                        fmt_num(scenarios.front().step) + ", " + fmt_num(scenarios.front().horizon) + ")");
    }
  }
  CompareResult res;
  std::vector<std::future<RunReport>> jobs;
  for (const auto& s : scenarios) {
    jobs.push_back(std::async(std::launch::async, [&s] {
      Scenario lite = s;
      lite.diagnostics = {false, false, false};
      return run(lite);
    }));
  }
  for (auto& j : jobs) res.reports.push_back(j.get());

  std::set<std::string> used;
  for (const auto& s : scenarios) {
    std::string col = s.name;
    for (int k = 2; used.count(col); ++k) col = s.name + "_" + std::to_string(k);
    used.insert(col);
    res.columns.push_back(col);
  }
  if (out_dir) {
    fs::create_directories(*out_dir);
    res.csv = *out_dir / "compare.csv";
    std::ofstream out(*res.csv);
    out << "t";
    for (const auto& c : res.columns) out << ',' << c;
    out << '\n';
    std::size_t rows = res.reports.front().times.size();
    for (const auto& r : res.reports) rows = std::min(rows, r.times.size());
    for (std::size_t k = 0; k < rows; ++k) {
      out << fmt_num(res.reports.front().times[k]);
      for (const auto& r : res.reports) out << ',' << fmt_num(r.err_max[k]);
      out << '\n';
    }
  }
  return res;
}

}  // namespace sodo
