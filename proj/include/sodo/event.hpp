#pragma once

// Event-triggered variant: neighbors couple through the last broadcast
// positions xhat, and each agent decides when to rebroadcast with the
// dynamic law
//
//   kappa_i (||e_i||^2 - c_i qhat_i) >= chi_i,
//   chi_i' = -delta_i (||e_i||^2 - c_i qhat_i) - phi_i chi_i,
//   c_i    = (alpha gamma eps0 - theta) beta sigma_i / (4 varphi_i).
//
// Triggers are evaluated at integration sample boundaries only.

#include "sodo/common.hpp"
#include "sodo/cost.hpp"
#include "sodo/dynamics.hpp"
#include "sodo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sodo {

/// The decay-rate phi_i of the chi dynamics and the threshold-normalizing
/// constant varphi_i share one symbol in the source formulation. This
/// selects which one divides sigma_i in the threshold coefficient.
enum class ThresholdDenominator { Varphi, DecayRate };

struct TriggerParams {
  Vector sigma;     ///< in [0, 1)
  Vector phi_rate;  ///< > 0, decay rate of chi
  Vector delta;     ///< in [0, 1]
  Vector kappa;     ///< > (1 - delta) / phi_rate
  Vector chi0;      ///< > 0
  ThresholdDenominator denominator = ThresholdDenominator::Varphi;

  std::size_t agents() const noexcept { return static_cast<std::size_t>(sigma.size()); }

  /// sigma = delta = 0.5, phi_rate = 1, kappa = 2(1 - delta)/phi_rate + 1, chi0 = 1.
  static TriggerParams defaults(std::size_t n) {
    return uniform(n, 0.5, 1.0, 0.5, 1.0);
  }

  /// sigma = delta = 0: the threshold needs no global constants.
  static TriggerParams local_only(std::size_t n) { return uniform(n, 0.0, 1.0, 0.0, 1.0); }

  static TriggerParams uniform(std::size_t n, double sigma, double phi_rate, double delta,
                               double chi0, std::optional<double> kappa = std::nullopt) {
    const auto nn = static_cast<Eigen::Index>(n);
    TriggerParams t;
    t.sigma = Vector::Constant(nn, sigma);
    t.phi_rate = Vector::Constant(nn, phi_rate);
    t.delta = Vector::Constant(nn, delta);
    t.kappa = Vector::Constant(nn, kappa.value_or(2.0 * (1.0 - delta) / phi_rate + 1.0));
    t.chi0 = Vector::Constant(nn, chi0);
    return t;
  }

  /// k_d = min_i { phi_i - (1 - delta_i) / kappa_i }
  double k_d() const {
    return (phi_rate.array() - (1.0 - delta.array()) / kappa.array()).minCoeff();
  }

  void validate(std::size_t n) const {
    const auto nn = static_cast<Eigen::Index>(n);
    if (sigma.size() != nn || phi_rate.size() != nn || delta.size() != nn || kappa.size() != nn ||
        chi0.size() != nn) {
      throw std::invalid_argument("trigger parameters must have one entry per agent");
    }
    for (Eigen::Index i = 0; i < nn; ++i) {
      const std::string who = "agent " + std::to_string(i + 1) + ": ";
      if (!(sigma(i) >= 0.0 && sigma(i) < 1.0))
        throw HypothesisViolation("Trigger design range", who + "sigma must lie in [0,1)");
      if (!(phi_rate(i) > 0.0))
        throw HypothesisViolation("Trigger design range", who + "phi must be > 0");
      if (!(delta(i) >= 0.0 && delta(i) <= 1.0))
        throw HypothesisViolation("Trigger design range", who + "delta must lie in [0,1]");
      if (!(kappa(i) > (1.0 - delta(i)) / phi_rate(i)))
        throw HypothesisViolation("Trigger design range",
                                  who + "kappa must exceed (1-delta)/phi (k_d > 0)");
      if (!(chi0(i) > 0.0))
        throw HypothesisViolation("Trigger design range", who + "chi(0) must be > 0");
    }
  }
};

inline void check_eps0(const GainParams& k, double eps0) {
  const double lo = k.theta / (k.alpha * k.gamma);
  if (!(eps0 > lo && eps0 < 1.0)) {
    std::ostringstream os;
    os << "eps0=" << eps0 << " must lie in (theta/(alpha*gamma), 1) = (" << lo << ", 1)";
    throw HypothesisViolation("Design parameter range", os.str());
  }
}

/// Default eps0 = (theta/(alpha gamma) + 1) / 2.
inline double default_eps0(const GainParams& k) {
  return 0.5 * (k.theta / (k.alpha * k.gamma) + 1.0);
}

/// Threshold-normalizing constant of agent i:
///   (a g e0 - th) b/4 L_ii + (a g e0 - th) b L_ii + g^2 th e0^2 / (4 e8)
///   + a^2 b^2 / (g (1 - e0)) (L_ii - sum_{j != i} L_jj L_ij)
inline double varphi(std::size_t i, const NetworkGraph& g, const GainParams& k, double eps0,
                     double eps8) {
  check_eps0(k, eps0);
  if (!(eps8 > 0.0)) throw std::invalid_argument("eps8 must be positive");
  const Matrix& lap = g.laplacian();
  const auto ii = static_cast<Eigen::Index>(i);
  const double lii = lap(ii, ii);
  double cross = 0.0;
  for (Eigen::Index j = 0; j < lap.rows(); ++j) {
    if (j != ii) cross += lap(j, j) * lap(ii, j);
  }
  const double margin = k.alpha * k.gamma * eps0 - k.theta;
  return margin * k.beta / 4.0 * lii + margin * k.beta * lii +
         k.gamma * k.gamma * k.theta * eps0 * eps0 / (4.0 * eps8) +
         k.alpha * k.alpha * k.beta * k.beta / (k.gamma * (1.0 - eps0)) * (lii - cross);
}

struct VarphiConstants {
  Vector varphi;
};

inline VarphiConstants compute_varphi(const NetworkGraph& g, const GainParams& k, double eps0,
                                      double eps8) {
  VarphiConstants c;
  c.varphi.resize(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) c.varphi(static_cast<Eigen::Index>(i)) = varphi(i, g, k, eps0, eps8);
  return c;
}

/// Trigger parameters together with the per-agent threshold coefficient c_i.
struct TriggerLaw {
  TriggerParams params;
  Vector coefficient;  ///< c_i multiplying qhat_i

  static TriggerLaw make(TriggerParams params, const VarphiConstants& consts, const GainParams& k,
                         double eps0) {
    check_eps0(k, eps0);
    const Vector& den =
        params.denominator == ThresholdDenominator::Varphi ? consts.varphi : params.phi_rate;
    const double margin = (k.alpha * k.gamma * eps0 - k.theta) * k.beta;
    TriggerLaw law;
    law.coefficient = margin * params.sigma.array() / (4.0 * den.array());
    law.params = std::move(params);
    return law;
  }
};

struct EventRecord {
  std::size_t k = 0;  ///< 1-based event index for the agent
  double t = 0.0;
  double chi = 0.0;            ///< chi_i at the trigger
  double error_norm_sq = 0.0;  ///< ||e_i||^2 just before the reset
  double qhat = 0.0;
};

struct TriggerState {
  AgentMatrix xhat;  ///< last broadcast positions
  AgentMatrix e_x;   ///< xhat - x
  Vector chi;
  Vector last_event;
  std::vector<std::vector<EventRecord>> event_log;

  /// Every agent broadcasts at the initial time.
  static TriggerState start(const AgentMatrix& x0, const Vector& chi0, double t0 = 0.0) {
    TriggerState ts;
    ts.xhat = x0;
    ts.e_x = AgentMatrix::Zero(x0.rows(), x0.cols());
    ts.chi = chi0;
    ts.last_event = Vector::Constant(x0.rows(), t0);
    ts.event_log.resize(static_cast<std::size_t>(x0.rows()));
    for (auto& log : ts.event_log) log.push_back({1, t0, 0.0, 0.0, 0.0});
    for (Eigen::Index i = 0; i < x0.rows(); ++i) ts.event_log[static_cast<std::size_t>(i)][0].chi = chi0(i);
    return ts;
  }

  void sync(const AgentMatrix& x) { e_x = xhat - x; }
  std::size_t agents() const noexcept { return static_cast<std::size_t>(xhat.rows()); }
};

/// qhat_i = -1/2 sum_{j in N_i} L_ij ||xhat_j - xhat_i||^2 >= 0
inline double qhat(std::size_t i, const AgentMatrix& xhat, const NetworkGraph& g) {
  const Matrix& lap = g.laplacian();
  const auto ii = static_cast<Eigen::Index>(i);
  double q = 0.0;
  for (std::size_t j : g.neighbors(i)) {
    const auto jj = static_cast<Eigen::Index>(j);
    q += lap(ii, jj) * (xhat.row(jj) - xhat.row(ii)).squaredNorm();
  }
  return -0.5 * q;
}

inline double qhat(std::size_t i, const TriggerState& ts, const NetworkGraph& g) {
  return qhat(i, ts.xhat, g);
}

/// ||e_i||^2 - c_i qhat_i
inline double trigger_bracket(std::size_t i, const TriggerState& ts, const TriggerLaw& law,
                              const NetworkGraph& g) {
  const auto ii = static_cast<Eigen::Index>(i);
  return ts.e_x.row(ii).squaredNorm() - law.coefficient(ii) * qhat(i, ts, g);
}

/// kappa_i * bracket_i - chi_i; nonpositive whenever the law is respected.
inline double discipline_slack(std::size_t i, const TriggerState& ts, const TriggerLaw& law,
                               const NetworkGraph& g) {
  const auto ii = static_cast<Eigen::Index>(i);
  return law.params.kappa(ii) * trigger_bracket(i, ts, law, g) - ts.chi(ii);
}

/// Evaluates the dynamic law for agent i at time t. Reads only agent i's own
/// position and cache, chi_i, and the broadcast caches of its neighbors. On a
/// trigger, agent i broadcasts x_i and its error resets to zero.
inline bool check_trigger(std::size_t i, TriggerState& ts, const TriggerLaw& law,
                          const NetworkGraph& g, const Vector& x_i, double t) {
  const auto ii = static_cast<Eigen::Index>(i);
  const double err2 = ts.e_x.row(ii).squaredNorm();
  const double q = qhat(i, ts, g);
  const double bracket = err2 - law.coefficient(ii) * q;
  if (law.params.kappa(ii) * bracket < ts.chi(ii)) return false;
  ts.xhat.row(ii) = x_i.transpose();
  ts.e_x.row(ii).setZero();
  ts.last_event(ii) = t;
  auto& log = ts.event_log[i];
  log.push_back({log.size() + 1, t, ts.chi(ii), err2, q});
  return true;
}

/// chi_i' = -delta_i bracket_i - phi_i chi_i
inline double chi_rhs(std::size_t i, double bracket, double chi, const TriggerParams& p) {
  const auto ii = static_cast<Eigen::Index>(i);
  return -p.delta(ii) * bracket - p.phi_rate(ii) * chi;
}

inline double chi_rhs(std::size_t i, const TriggerState& ts, const TriggerLaw& law,
                      const NetworkGraph& g) {
  return chi_rhs(i, trigger_bracket(i, ts, law, g), ts.chi(static_cast<Eigen::Index>(i)), law.params);
}

/// Primary dynamics with the broadcast cache in both Laplacian terms.
inline AgentDerivatives rhs_event(const SwarmState& s, const AgentMatrix& xhat,
                                  const NetworkGraph& g, const GlobalObjective& obj,
                                  const GainParams& k) {
  return detail::primary_rhs(s, xhat, g.laplacian(), obj, k);
}

using EventObserver = std::function<void(const SwarmState&, const TriggerState&)>;

struct EventRun {
  Trajectory trajectory;
  TriggerState triggers;
  std::vector<Vector> chi_history;  ///< chi at every sample
  std::size_t steps = 0;
};

/// Processes triggers at one sample until no agent fires; every agent
/// satisfies the law against its neighbors' final caches afterwards.
inline std::size_t process_triggers(TriggerState& ts, const TriggerLaw& law, const NetworkGraph& g,
                                    const AgentMatrix& x, double t) {
  std::size_t fired = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < ts.agents(); ++i) {
      if (check_trigger(i, ts, law, g, x.row(static_cast<Eigen::Index>(i)).transpose(), t)) {
        ++fired;
        changed = true;
      }
    }
  }
  return fired;
}

/// Integrates the event-triggered system. Within a step the caches and the
/// chi brackets are frozen at their start-of-step values; chi advances with
/// the same RK4 stepper as the swarm.
inline EventRun integrate_event(const SwarmState& initial, const NetworkGraph& g,
                                const GlobalObjective& obj, const GainParams& k,
                                const TriggerLaw& law, double h, double horizon,
                                const std::vector<EventObserver>& observers = {},
                                bool keep_samples = true) {
  const std::size_t steps = step_count(h, horizon);
  const std::size_t n = g.size();
  law.params.validate(n);
  const double t0 = initial.t;

  EventRun run;
  run.steps = steps;
  run.triggers = TriggerState::start(initial.x, law.params.chi0, t0);
  if (keep_samples) {
    run.trajectory.samples.reserve(steps + 1);
    run.chi_history.reserve(steps + 1);
  }
  for (const auto& obs : observers) obs(initial, run.triggers);

  SwarmState cur = initial;
  TriggerState& ts = run.triggers;
  Vector bracket(static_cast<Eigen::Index>(n));
  auto rhs = [&](const SwarmState& s) { return rhs_event(s, ts.xhat, g, obj, k); };

  for (std::size_t step = 1; step <= steps; ++step) {
    for (std::size_t i = 0; i < n; ++i) bracket(static_cast<Eigen::Index>(i)) = trigger_bracket(i, ts, law, g);

    SwarmState next = rk4_step(rhs, cur, h);
    next.t = t0 + static_cast<double>(step) * h;
    check_divergence(next, cur);

    const Vector& chi = ts.chi;
    const Vector& phi = law.params.phi_rate;
    const Vector drive = -law.params.delta.cwiseProduct(bracket);
    auto f = [&](const Vector& c) -> Vector { return drive - phi.cwiseProduct(c); };
    const Vector c1 = f(chi);
    const Vector c2 = f(chi + 0.5 * h * c1);
    const Vector c3 = f(chi + 0.5 * h * c2);
    const Vector c4 = f(chi + h * c3);
    const Vector chi_next = chi + h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);

    if (keep_samples) {
      run.trajectory.samples.push_back(std::move(cur));
      run.chi_history.push_back(ts.chi);
    }
    cur = std::move(next);
    ts.chi = chi_next;
    ts.sync(cur.x);
    process_triggers(ts, law, g, cur.x, cur.t);
    for (const auto& obs : observers) obs(cur, ts);
  }
  run.trajectory.samples.push_back(cur);
  run.chi_history.push_back(ts.chi);
  return run;
}

struct AgentZenoStats {
  std::size_t count = 0;
  double min_gap = 0.0;
  double mean_gap = 0.0;
  bool continuous = false;  ///< triggered at every sample
};

struct ZenoReport {
  std::vector<AgentZenoStats> agents;
  std::size_t total_events = 0;
  std::size_t samples_per_agent = 0;
  double trigger_ratio = 0.0;    ///< total events / (n * samples)
  double reduction_ratio = 0.0;  ///< 1 - trigger_ratio
};

inline ZenoReport zeno_report(const TriggerState& ts, double horizon, std::size_t samples_per_agent) {
  ZenoReport rep;
  rep.samples_per_agent = samples_per_agent;
  for (const auto& log : ts.event_log) {
    AgentZenoStats st;
    st.count = log.size();
    if (log.size() < 2) {
      st.min_gap = horizon;
      st.mean_gap = horizon;
    } else {
      st.min_gap = std::numeric_limits<double>::infinity();
      for (std::size_t k = 1; k < log.size(); ++k) st.min_gap = std::min(st.min_gap, log[k].t - log[k - 1].t);
      st.mean_gap = (log.back().t - log.front().t) / static_cast<double>(log.size() - 1);
    }
    st.continuous = st.count >= samples_per_agent;
    rep.total_events += st.count;
    rep.agents.push_back(st);
  }
  const double denom = static_cast<double>(ts.event_log.size() * samples_per_agent);
  rep.trigger_ratio = denom > 0.0 ? static_cast<double>(rep.total_events) / denom : 0.0;
  rep.reduction_ratio = 1.0 - rep.trigger_ratio;
  return rep;
}

}  // namespace sodo
