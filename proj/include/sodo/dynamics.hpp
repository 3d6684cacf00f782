#pragma once

// Continuous-communication second-order algorithm:
//   x' = y
//   y' = -gamma y - alpha beta (L kron I) x - theta v - alpha grad f(x)
//   v' = beta (L kron I) x,            sum_i v_i(0) = 0
// the alternative variant with theta (L kron I) v in the y-equation, and a
// fixed-step classical RK4 integrator with per-sample observers.

#include "sodo/common.hpp"
#include "sodo/cost.hpp"
#include "sodo/graph.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sodo {

struct SwarmState {
  double t = 0.0;
  AgentMatrix x;  ///< positions, n x p
  AgentMatrix y;  ///< velocities y_i = x_i'
  AgentMatrix v;  ///< integral states

  std::size_t agents() const noexcept { return static_cast<std::size_t>(x.rows()); }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(x.cols()); }

  static SwarmState zeros(std::size_t n, std::size_t p) {
    const auto nn = static_cast<Eigen::Index>(n);
    const auto pp = static_cast<Eigen::Index>(p);
    return {0.0, AgentMatrix::Zero(nn, pp), AgentMatrix::Zero(nn, pp), AgentMatrix::Zero(nn, pp)};
  }

  double max_abs() const {
    return std::max({x.cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff()});
  }
  bool finite() const { return x.allFinite() && y.allFinite() && v.allFinite(); }
};

/// Seeded uniform initial positions and velocities in [low, high]; v(0) = 0.
inline SwarmState random_initial_state(std::size_t n, std::size_t p, std::uint64_t seed,
                                       double low = -5.0, double high = 5.0) {
  SwarmState s = SwarmState::zeros(n, p);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(low, high);
  for (Eigen::Index i = 0; i < s.x.rows(); ++i)
    for (Eigen::Index k = 0; k < s.x.cols(); ++k) s.x(i, k) = u(rng);
  for (Eigen::Index i = 0; i < s.y.rows(); ++i)
    for (Eigen::Index k = 0; k < s.y.cols(); ++k) s.y(i, k) = u(rng);
  return s;
}

struct GainParams {
  double alpha = 2.0;
  double beta = 2.0;
  double gamma = 6.0;
  double theta = 5.0;

  /// Rejects nonpositive gains and theta >= alpha * gamma.
  void validate() const {
    if (!(alpha > 0.0 && beta > 0.0 && gamma > 0.0 && theta > 0.0)) {
      throw HypothesisViolation("Gain positivity", "alpha, beta, gamma, theta must all be > 0");
    }
    if (!(theta < alpha * gamma)) {
      std::ostringstream os;
      os << "theta=" << theta << " must be < alpha*gamma=" << alpha * gamma;
      throw HypothesisViolation("Gain hypothesis theta < alpha*gamma", os.str());
    }
  }
};

struct AgentDerivatives {
  AgentMatrix dx;
  AgentMatrix dy;
  AgentMatrix dv;

  /// Control input u_i = x_i'' = y_i'.
  const AgentMatrix& u() const noexcept { return dy; }
};

namespace detail {

inline AgentMatrix checked_gradient(const GlobalObjective& obj, const AgentMatrix& x) {
  AgentMatrix g = obj.gradient(x);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    if (!g.row(i).allFinite()) {
      throw std::domain_error("non-finite gradient for agent " + std::to_string(i + 1));
    }
  }
  return g;
}

/// Shared body of the primary and event right-hand sides; `coupled` is the
/// position vector neighbors see (x itself, or the broadcast cache).
inline AgentDerivatives primary_rhs(const SwarmState& s, const AgentMatrix& coupled,
                                    const Matrix& laplacian, const GlobalObjective& obj,
                                    const GainParams& k) {
  const AgentMatrix lx = laplacian * coupled;
  AgentDerivatives d;
  d.dx = s.y;
  d.dy = -k.gamma * s.y - k.alpha * k.beta * lx - k.theta * s.v - k.alpha * checked_gradient(obj, s.x);
  d.dv = k.beta * lx;
  return d;
}

}  // namespace detail

inline AgentDerivatives rhs_continuous(const SwarmState& s, const NetworkGraph& g,
                                       const GlobalObjective& obj, const GainParams& k) {
  return detail::primary_rhs(s, s.x, g.laplacian(), obj, k);
}

/// y' = -gamma y - alpha beta (L kron I) x - theta (L kron I) v - alpha grad f(x)
inline AgentDerivatives rhs_alternative(const SwarmState& s, const NetworkGraph& g,
                                        const GlobalObjective& obj, const GainParams& k) {
  const Matrix& lap = g.laplacian();
  const AgentMatrix lx = lap * s.x;
  AgentDerivatives d;
  d.dx = s.y;
  d.dy = -k.gamma * s.y - k.alpha * k.beta * lx - k.theta * (lap * s.v) -
         k.alpha * detail::checked_gradient(obj, s.x);
  d.dv = k.beta * lx;
  return d;
}

using RhsFunction = std::function<AgentDerivatives(const SwarmState&)>;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, SwarmState last_finite)
      : std::runtime_error(what), last_(std::move(last_finite)) {}
  const SwarmState& last_finite_state() const noexcept { return last_; }

 private:
  SwarmState last_;
};

inline constexpr double kDivergenceCutoff = 1e12;

/// One classical fourth-order Runge-Kutta step of size h.
template <class Rhs>
SwarmState rk4_step(const Rhs& rhs, const SwarmState& s, double h) {
  auto shifted = [&](const AgentDerivatives& d, double c) {
    return SwarmState{s.t + c, s.x + c * d.dx, s.y + c * d.dy, s.v + c * d.dv};
  };
  const AgentDerivatives k1 = rhs(s);
  const AgentDerivatives k2 = rhs(shifted(k1, 0.5 * h));
  const AgentDerivatives k3 = rhs(shifted(k2, 0.5 * h));
  const AgentDerivatives k4 = rhs(shifted(k3, h));
  const double w = h / 6.0;
  SwarmState out;
  out.t = s.t + h;
  out.x = s.x + w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
  out.y = s.y + w * (k1.dy + 2.0 * k2.dy + 2.0 * k3.dy + k4.dy);
  out.v = s.v + w * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  return out;
}

inline std::size_t step_count(double h, double horizon) {
  if (!(h > 0.0)) throw std::invalid_argument("integration step must be positive");
  if (!(horizon >= h)) throw std::invalid_argument("horizon must be at least one step");
  return static_cast<std::size_t>(std::llround(horizon / h));
}

inline void check_divergence(const SwarmState& next, const SwarmState& prev) {
  if (!next.finite() || next.max_abs() > kDivergenceCutoff) {
    std::ostringstream os;
    os << "state diverged at t=" << next.t << " (norm above " << kDivergenceCutoff << ")";
    throw DivergenceError(os.str(), prev);
  }
}

using Observer = std::function<void(const SwarmState&)>;

struct Trajectory {
  std::vector<SwarmState> samples;
  const SwarmState& back() const { return samples.back(); }
};

/// Fixed-step RK4 from t0 to t0 + horizon. Samples sit at t0 + k h; every
/// observer sees every sample, including the initial one.
template <class Rhs>
Trajectory integrate(const Rhs& rhs, SwarmState initial, double h, double horizon,
                     const std::vector<Observer>& observers = {}, bool keep_samples = true) {
  const std::size_t steps = step_count(h, horizon);
  const double t0 = initial.t;
  Trajectory traj;
  if (keep_samples) traj.samples.reserve(steps + 1);
  for (const auto& obs : observers) obs(initial);
  SwarmState cur = std::move(initial);
  for (std::size_t k = 1; k <= steps; ++k) {
    SwarmState next = rk4_step(rhs, cur, h);
    next.t = t0 + static_cast<double>(k) * h;
    check_divergence(next, cur);
    if (keep_samples) traj.samples.push_back(std::move(cur));
    cur = std::move(next);
    for (const auto& obs : observers) obs(cur);
  }
  traj.samples.push_back(std::move(cur));
  return traj;
}

struct EquilibriumResidual {
  double r_y = 0.0;          ///< ||y||
  double r_grad = 0.0;       ///< ||theta v + alpha grad f(x)||
  double r_consensus = 0.0;  ///< ||(L kron I) x||
};

inline EquilibriumResidual equilibrium_residual(const SwarmState& s, const NetworkGraph& g,
                                                const GlobalObjective& obj, const GainParams& k) {
  return {s.y.norm(), (k.theta * s.v + k.alpha * obj.gradient(s.x)).norm(),
          (g.laplacian() * s.x).norm()};
}

/// max_i ||x_i - x*||
inline double max_agent_error(const AgentMatrix& x, const Vector& xstar) {
  return (x.rowwise() - xstar.transpose()).rowwise().norm().maxCoeff();
}

/// ||x - 1_n kron x*||
inline double stacked_error(const AgentMatrix& x, const Vector& xstar) {
  return (x.rowwise() - xstar.transpose()).norm();
}

/// ||(K_n kron I) x||
inline double consensus_residual(const AgentMatrix& x) {
  return (x.rowwise() - x.colwise().mean()).norm();
}

}  // namespace sodo
