#pragma once

// Convergence certificates: every constant of the two exponential-rate
// theorems, the Lyapunov functions W1..W4 / V1..V3 evaluated on live
// states, an empirical rate fit, and a sampled check of the restricted
// augmented strong convexity inequality.

#include "sodo/common.hpp"
#include "sodo/cost.hpp"
#include "sodo/dynamics.hpp"
#include "sodo/event.hpp"
#include "sodo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sodo {

/// Constants of the continuous-communication rate theorem.
struct ContinuousConstants {
  double D_radius = 0.0;  ///< radius of the invariant ball D around x*
  double V1_at_0 = 0.0;
  double M_D = 0.0;  ///< max_i M_i(D)
  double m1 = 0.0;
  double eps1 = 0.0, eps2 = 0.0, eps3 = 0.0, eps4 = 0.0;
  double iota1 = 0.0;       ///< m_f / (4 M(D))
  double eps_tilde1 = 0.0;  ///< V2 >= eps_tilde1 ||x - xbar||^2
  double v2_weight = 0.0;   ///< 1 + eps eps2 / eps1
  double rate_bound = 0.0;  ///< eps3 / (2 eps4)
};

/// Constants of the event-triggered rate theorem.
struct EventConstants {
  double Mbar = 0.0;
  double m2 = 0.0;
  double eps5 = 0.0, eps6 = 0.0, eps7 = 0.0, eps8 = 0.0, eps9 = 0.0, eps10 = 0.0;
  double k_d = 0.0;
  double iota2 = 0.0;  ///< m_f / (4 Mbar)
  double eps_tilde2 = 0.0;
  Vector varphi;
  double rate_bound = 0.0;  ///< eps9 / (2 eps10)
};

struct TheoremConstants {
  double eps0 = 0.0;
  double eps = 0.1;
  double rho = 0.0;
  double rho2 = 0.0;
  double m_f = 0.0;
  bool mf_estimated = false;  ///< sampled rather than closed-form
  std::optional<ContinuousConstants> thm1;
  std::optional<EventConstants> thm2;
  std::vector<std::string> notes;
};

namespace detail {

inline void require_positive_mf(double mf) {
  if (!(mf > 0.0)) {
    throw HypothesisViolation("Restricted strong convexity",
                              "m_f = " + std::to_string(mf) + " is not positive");
  }
}

inline void require_spectral(const SpectralData& sp) {
  if (!(sp.rho2 > 0.0) || !std::isfinite(sp.rho2)) {
    throw HypothesisViolation("Graph connectivity", "rho2(L) is undefined (need n >= 2)");
  }
}

}  // namespace detail

inline double m1_constant(double mf, double rho2, double M, const GainParams& k, double eps0) {
  const double age = k.alpha * k.gamma * eps0;
  return std::min(mf / 2.0, rho2 * mf * mf * age / (2.0 * (age - k.theta) * (mf * mf + 16.0 * M * M)));
}

inline double m2_constant(double mf, double rho2, double Mbar, const GainParams& k, double eps0) {
  const double margin = k.alpha * k.gamma * eps0 - k.theta;
  return std::min(mf / 2.0,
                  4.0 * rho2 * mf * mf * k.alpha / (margin * k.beta * (mf * mf + 16.0 * Mbar * Mbar)));
}

/// Radius of D = {a : ||a - x*||^2 <= 2 V1(0) / (gamma^2 eps0 (1 - sqrt(eps0)))}.
inline double invariant_radius(double V1_at_0, const GainParams& k, double eps0) {
  return std::sqrt(2.0 * V1_at_0 / (k.gamma * k.gamma * eps0 * (1.0 - std::sqrt(eps0))));
}

/// Constants for the continuous algorithm. D is fixed from V1 at the run's
/// initial state, then M(D) is bounded on it.
inline ContinuousConstants compute_constants_thm1(const SpectralData& sp, const GlobalObjective& obj,
                                                  const GainParams& k, double eps0, double eps,
                                                  double mf, double V1_at_0, const Vector& xstar) {
  k.validate();
  check_eps0(k, eps0);
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  detail::require_positive_mf(mf);
  detail::require_spectral(sp);

  ContinuousConstants c;
  c.V1_at_0 = V1_at_0;
  c.D_radius = invariant_radius(V1_at_0, k, eps0);
  for (const auto& f : obj.costs()) c.M_D = std::max(c.M_D, curvature_on_set(f, c.D_radius, xstar));

  const double M = c.M_D;
  const double a = k.alpha, b = k.beta, g = k.gamma, th = k.theta;
  c.m1 = m1_constant(mf, sp.rho2, M, k, eps0);
  c.eps1 = std::min(g * (1.0 - eps0), a * g * eps0 * c.m1);
  c.eps2 = std::max(g / a + g * g / th + th / (a * a), a * a * M * M / th);
  c.eps3 = std::min(c.eps1, eps * th / 2.0);
  c.v2_weight = 1.0 + eps * c.eps2 / c.eps1;
  c.eps4 = std::max({c.v2_weight + eps / a,
                     c.v2_weight * (g * g * eps0 + a * b * sp.rho + a * M / 2.0) + eps * M / 2.0,
                     c.v2_weight * th * g * eps0 / (b * sp.rho2) + eps * a});
  c.iota1 = mf / (4.0 * M);
  c.eps_tilde1 = c.v2_weight * g * g * eps0 * (1.0 - eps0) / 2.0;
  c.rate_bound = c.eps3 / (2.0 * c.eps4);
  return c;
}

/// Constants for the event-triggered algorithm; needs a global gradient
/// Lipschitz bound on every cost.
inline EventConstants compute_constants_thm2(const NetworkGraph& graph, const SpectralData& sp,
                                             const GlobalObjective& obj, const GainParams& k,
                                             double eps0, double eps, double mf,
                                             const TriggerParams& trig) {
  k.validate();
  check_eps0(k, eps0);
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  detail::require_positive_mf(mf);
  detail::require_spectral(sp);
  trig.validate(graph.size());

  EventConstants c;
  c.Mbar = obj.max_global_lipschitz();
  const double M = c.Mbar;
  const double a = k.alpha, b = k.beta, g = k.gamma, th = k.theta;
  c.m2 = m2_constant(mf, sp.rho2, M, k, eps0);
  c.eps5 = std::min(g * (1.0 - eps0) / 2.0, c.m2 * a);
  c.eps6 = std::max(g / a + g * g / th + th / (a * a), a * a * M * M / th);
  c.eps7 = 1.0 + eps * c.eps6 / c.eps5;
  c.eps8 = eps / (4.0 * c.eps7);
  c.varphi = compute_varphi(graph, k, eps0, c.eps8).varphi;
  c.k_d = trig.k_d();
  if (!(c.k_d > 0.0)) throw HypothesisViolation("Trigger design range", "k_d must be positive");
  c.eps9 = std::min({c.eps5, eps * th / 4.0, c.k_d});
  c.eps10 = std::max({c.eps7 + eps / a,
                      c.eps7 * (g * g * eps0 + a * b * sp.rho + a * M / 2.0) + eps * M / 2.0,
                      c.eps7 * th * g * eps0 / (b * sp.rho2) + eps * a / sp.rho2});
  c.iota2 = mf / (4.0 * M);
  c.eps_tilde2 = c.eps7 * g * g * eps0 * (1.0 - eps0) / 2.0;
  c.rate_bound = c.eps9 / (2.0 * c.eps10);
  return c;
}

// ---------------------------------------------------------------------------
// Lyapunov diagnostics

/// Everything the Lyapunov evaluators need about the optimal equilibrium
/// (xbar = 1 kron x*, vbar_i = -(alpha/theta) grad f_i(x*), ybar = 0).
struct LyapunovContext {
  GainParams gains;
  double eps0 = 0.0;
  double eps = 0.1;
  Matrix laplacian;
  Matrix kn;
  Matrix pinv;  ///< R Lambda_1^{-1} R^T
  GlobalObjective obj;
  Vector xstar;
  AgentMatrix xbar;
  AgentMatrix vbar;
  AgentMatrix grad_xbar;
  double f_xbar = 0.0;
  std::optional<double> v2_weight;  ///< 1 + eps eps2/eps1
  std::optional<double> eps7;
  std::optional<Vector> varphi;
};

inline LyapunovContext make_lyapunov_context(const NetworkGraph& g, const SpectralData& sp,
                                             const GlobalObjective& obj, const GainParams& k,
                                             double eps0, double eps, const Vector& xstar) {
  LyapunovContext c;
  c.gains = k;
  c.eps0 = eps0;
  c.eps = eps;
  c.laplacian = g.laplacian();
  c.kn = sp.kn;
  c.pinv = sp.laplacian_pinv();
  c.obj = obj;
  c.xstar = xstar;
  const auto n = static_cast<Eigen::Index>(g.size());
  c.xbar = xstar.transpose().replicate(n, 1);
  c.grad_xbar = obj.gradient(c.xbar);
  c.vbar = -(k.alpha / k.theta) * c.grad_xbar;
  c.f_xbar = obj.value(c.xbar);
  return c;
}

inline void attach(LyapunovContext& c, const ContinuousConstants& t1) { c.v2_weight = t1.v2_weight; }
inline void attach(LyapunovContext& c, const EventConstants& t2) {
  c.eps7 = t2.eps7;
  c.varphi = t2.varphi;
}

/// W1(x) = f(x) - f(xbar) - grad f(xbar)^T (x - xbar)
inline double lyapunov_W1(const LyapunovContext& c, const AgentMatrix& x) {
  return c.obj.value(x) - c.f_xbar - detail::frob_dot(c.grad_xbar, x - c.xbar);
}

inline double lyapunov_W2(const LyapunovContext& c, const SwarmState& s) {
  const auto& k = c.gains;
  const AgentMatrix dx = s.x - c.xbar;
  const AgentMatrix dv = s.v - c.vbar;
  return 0.5 * s.y.squaredNorm() + k.gamma * k.gamma * c.eps0 / 2.0 * dx.squaredNorm() +
         k.gamma * c.eps0 * detail::frob_dot(dx, s.y) +
         k.theta * k.gamma * c.eps0 / (2.0 * k.beta) * detail::kron_form(dv, c.pinv, dv) +
         k.theta * detail::kron_form(dv, c.kn, s.x) +
         k.alpha * k.beta / 2.0 * detail::kron_form(s.x, c.laplacian, s.x);
}

inline double lyapunov_W3(const LyapunovContext& c, const SwarmState& s) {
  const auto& k = c.gains;
  const AgentMatrix dv = s.v - c.vbar;
  return c.eps / (2.0 * k.alpha) * s.y.squaredNorm() + c.eps * detail::kron_form(dv, c.kn, s.y) +
         c.eps * k.alpha / 2.0 * detail::kron_form(dv, c.kn, dv) + c.eps * lyapunov_W1(c, s.x);
}

/// V1 = alpha W1 + W2
inline double lyapunov_V1(const LyapunovContext& c, const SwarmState& s) {
  return c.gains.alpha * lyapunov_W1(c, s.x) + lyapunov_W2(c, s);
}

inline double lyapunov_V2(const LyapunovContext& c, const SwarmState& s) {
  if (!c.v2_weight) throw std::logic_error("V2 needs continuous-theorem constants");
  return *c.v2_weight * lyapunov_V1(c, s) + lyapunov_W3(c, s);
}

/// W4 = eps7 V1 + W3
inline double lyapunov_W4(const LyapunovContext& c, const SwarmState& s) {
  if (!c.eps7) throw std::logic_error("W4 needs event-theorem constants");
  return *c.eps7 * lyapunov_V1(c, s) + lyapunov_W3(c, s);
}

/// V3 = W4 + eps7 sum_i varphi_i chi_i
inline double lyapunov_V3(const LyapunovContext& c, const SwarmState& s, const Vector& chi) {
  if (!c.eps7 || !c.varphi) throw std::logic_error("V3 needs event-theorem constants");
  return lyapunov_W4(c, s) + *c.eps7 * c.varphi->dot(chi);
}

struct LyapunovSample {
  double t = 0.0;
  double W1 = 0.0, W2 = 0.0, W3 = 0.0;
  std::optional<double> W4;
  double V1 = 0.0;
  std::optional<double> V2;
  std::optional<double> V3;
};

inline LyapunovSample lyapunov_sample(const LyapunovContext& c, const SwarmState& s,
                                      const Vector* chi = nullptr) {
  LyapunovSample out;
  out.t = s.t;
  out.W1 = lyapunov_W1(c, s.x);
  out.W2 = lyapunov_W2(c, s);
  out.W3 = lyapunov_W3(c, s);
  out.V1 = c.gains.alpha * out.W1 + out.W2;
  if (c.v2_weight) out.V2 = *c.v2_weight * out.V1 + out.W3;
  if (c.eps7) {
    out.W4 = *c.eps7 * out.V1 + out.W3;
    if (chi && c.varphi) out.V3 = *out.W4 + *c.eps7 * c.varphi->dot(*chi);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct RateFit {
  double rate = 0.0;
  std::size_t samples_used = 0;
  bool truncated = false;  ///< samples below the noise floor were dropped
};

inline constexpr double kNoiseFloor = 1e-13;

/// Least-squares slope of -log(error) over samples with t in [t_lo, t_hi].
inline RateFit fit_rate(const std::vector<double>& times, const std::vector<double>& errors,
                        double t_lo, double t_hi) {
  if (times.size() != errors.size()) throw std::invalid_argument("time/error length mismatch");
  RateFit fit;
  double st = 0, sy = 0, stt = 0, sty = 0;
  std::size_t m = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_lo || times[k] > t_hi) continue;
    if (!(errors[k] > kNoiseFloor)) {
      fit.truncated = true;
      continue;
    }
    const double yk = -std::log(errors[k]);
    st += times[k];
    sy += yk;
    stt += times[k] * times[k];
    sty += times[k] * yk;
    ++m;
  }
  fit.samples_used = m;
  if (m < 2) {
    fit.rate = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  const double dm = static_cast<double>(m);
  const double den = dm * stt - st * st;
  fit.rate = den > 0.0 ? (dm * sty - st * sy) / den : 0.0;
  return fit;
}

/// Middle 60% of the horizon.
inline RateFit fit_rate(const std::vector<double>& times, const std::vector<double>& errors) {
  if (times.empty()) return {};
  const double t0 = times.front(), t1 = times.back();
  return fit_rate(times, errors, t0 + 0.2 * (t1 - t0), t0 + 0.8 * (t1 - t0));
}

struct AugmentedConvexityCheck {
  double margin = 0.0;  ///< min over samples of LHS - m ||x - x*||^2
  double m = 0.0;
  double iota = 0.0;
  bool consistent = true;  ///< margin >= -1e-9
};

/// Samples (grad f(x) - grad f(x*))^T (x - x*) + r x^T (L kron I) x >= m ||x - x*||^2
/// with iota = m_f / (4 Mbar) and m = min{m_f - 2 Mbar iota, rho2 / (2 r (1 + 1/iota^2))}.
inline AugmentedConvexityCheck check_augmented_convexity(const GlobalObjective& obj, const Vector& xstar,
                                const NetworkGraph& g, const SpectralData& sp, double r, double mf,
                                double mbar, const std::vector<AgentMatrix>& samples) {
  if (!(r > 0.0)) throw std::invalid_argument("r must be positive");
  AugmentedConvexityCheck out;
  out.iota = mf / (4.0 * mbar);
  out.m = std::min(mf - 2.0 * mbar * out.iota,
                   sp.rho2 / (2.0 * r * (1.0 + 1.0 / (out.iota * out.iota))));
  const auto n = static_cast<Eigen::Index>(g.size());
  const AgentMatrix xbar = xstar.transpose().replicate(n, 1);
  const AgentMatrix gbar = obj.gradient(xbar);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& x : samples) {
    const AgentMatrix d = x - xbar;
    const double lhs = detail::frob_dot(obj.gradient(x) - gbar, d) +
                       r * detail::kron_form(x, g.laplacian(), x);
    worst = std::min(worst, lhs - out.m * d.squaredNorm());
  }
  out.margin = samples.empty() ? 0.0 : worst;
  out.consistent = out.margin >= -1e-9;
  return out;
}

/// r used by the continuous theorem: (alpha gamma eps0 - theta) / (alpha gamma eps0).
inline double augmented_r_continuous(const GainParams& k, double eps0) {
  const double age = k.alpha * k.gamma * eps0;
  return (age - k.theta) / age;
}

/// r used by the event theorem: (alpha gamma eps0 - theta) beta / (8 alpha).
inline double augmented_r_event(const GainParams& k, double eps0) {
  return (k.alpha * k.gamma * eps0 - k.theta) * k.beta / (8.0 * k.alpha);
}

}  // namespace sodo
