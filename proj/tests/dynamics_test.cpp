#include "sodo/dynamics.hpp"
#include "sodo/scenario.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sodo;

namespace {

NetworkGraph path3() {
  const std::vector<Edge> e = {{0, 1, 1.0}, {1, 2, 1.0}};
  return build_graph(3, e);
}

GlobalObjective identity_costs(std::size_t n, std::size_t p) {
  std::vector<CostFunction> c;
  for (std::size_t i = 0; i < n; ++i) {
    c.push_back(quadratic_cost(Matrix::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p)),
                               Vector::Constant(static_cast<Eigen::Index>(p), static_cast<double>(i))));
  }
  return GlobalObjective(std::move(c));
}

}  // namespace

TEST(Gains, Validation) {
  EXPECT_NO_THROW((GainParams{2, 2, 6, 5}).validate());
  try {
    GainParams{2, 2, 6, 12}.validate();
    FAIL();
  } catch (const HypothesisViolation& e) {
    EXPECT_EQ(e.hypothesis(), "Gain hypothesis theta < alpha*gamma");
    EXPECT_NE(std::string(e.what()).find("violated"), std::string::npos);
  }
  EXPECT_THROW((GainParams{0, 2, 6, 1}).validate(), HypothesisViolation);
}

TEST(Rhs, ConsensusStateHasOnlyGradientDrive) {
  const auto g = path3();
  const auto obj = identity_costs(3, 2);
  SwarmState s = SwarmState::zeros(3, 2);
  s.x.rowwise() = (Vector(2) << 0.3, -1.0).finished().transpose();
  const GainParams k;
  const auto d = rhs_continuous(s, g, obj, k);
  EXPECT_TRUE(d.dy.isApprox(-k.alpha * obj.gradient(s.x)));
  EXPECT_EQ(d.dv.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(&d.u(), &d.dy);
}

TEST(Rhs, HandComputedIntegralDrive) {
  const auto g = path3();
  SwarmState s = SwarmState::zeros(3, 1);
  s.x << 0, 1, 2;
  const auto d = rhs_continuous(s, g, identity_costs(3, 1), GainParams{2, 2, 6, 5});
  EXPECT_TRUE(d.dv.isApprox((Vector(3) << -2, 0, 2).finished()));
  EXPECT_NEAR(d.dv.sum(), 0.0, 1e-15);
}

TEST(Rhs, SingleAgentIsHeavyBall) {
  const auto g = build_graph(1, std::vector<Edge>{});
  SwarmState s = SwarmState::zeros(1, 1);
  s.x(0, 0) = 1.5;
  s.y(0, 0) = -0.5;
  const GainParams k{2, 1, 6, 1};
  const auto d = rhs_continuous(s, g, identity_costs(1, 1), k);
  EXPECT_DOUBLE_EQ(d.dy(0, 0), -k.gamma * -0.5 - k.alpha * 1.5);
}

TEST(Rhs, AlternativeDiffersAndIgnoresConsensusV) {
  const auto g = path3();
  const auto obj = identity_costs(3, 2);
  SwarmState s = random_initial_state(3, 2, 5);
  s.v << 1, 2, -3, 0.5, 2, -2.5;
  const GainParams k;
  EXPECT_GT((rhs_continuous(s, g, obj, k).dy - rhs_alternative(s, g, obj, k).dy).norm(), 1e-3);

  SwarmState c = s;
  c.v.rowwise() = (Vector(2) << 4.0, -7.0).finished().transpose();
  SwarmState z = s;
  z.v.setZero();
  EXPECT_TRUE(rhs_alternative(c, g, obj, k).dy.isApprox(rhs_alternative(z, g, obj, k).dy));
}

TEST(Rhs, NonFiniteGradientNamesAgent) {
  std::vector<CostFunction> c = {quadratic_cost(Matrix::Identity(1, 1), Vector::Zero(1)),
                                 custom_cost(1, [](const Vector&) { return 0.0; },
                                             [](const Vector&) { return Vector::Constant(1, std::nan("")); })};
  const GlobalObjective obj(std::move(c));
  const auto g = build_graph(2, std::vector<Edge>{{0, 1, 1.0}});
  try {
    rhs_continuous(SwarmState::zeros(2, 1), g, obj, GainParams{});
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("agent 2"), std::string::npos);
  }
}

TEST(Integrate, HeavyBallClosedForm) {
  const auto g = build_graph(1, std::vector<Edge>{});
  const GlobalObjective obj({quadratic_cost(Matrix::Identity(1, 1), Vector::Zero(1))});
  const GainParams k{2, 1, 6, 1};
  SwarmState s0 = SwarmState::zeros(1, 1);
  s0.x(0, 0) = 1.0;
  const auto traj = integrate([&](const SwarmState& s) { return rhs_continuous(s, g, obj, k); }, s0, 0.01, 10.0);
  ASSERT_EQ(traj.samples.size(), 1001u);
  double worst = 0.0;
  for (const auto& s : traj.samples)
    worst = std::max(worst, std::abs(s.x(0, 0) - oracle::heavy_ball(s.t, 2.0, 6.0, 1.0, 0.0)));
  EXPECT_LE(worst, 1e-8);
  EXPECT_NEAR(traj.samples[500].x(0, 0), oracle::frozen::kHeavyBallX5, 1e-8);
  EXPECT_NEAR(oracle::heavy_ball(5.0, 2.0, 6.0, 1.0, 0.0), oracle::frozen::kHeavyBallX5, 1e-14);
}

TEST(Integrate, EquilibriumIsFixed) {
  const auto g = path3();
  const auto zero = custom_cost(2, [](const Vector&) { return 0.0; }, [](const Vector&) { return Vector::Zero(2); });
  const GlobalObjective obj({zero, zero, zero});
  SwarmState s0 = SwarmState::zeros(3, 2);
  s0.x.rowwise() = (Vector(2) << 1.0, -2.0).finished().transpose();
  const auto traj = integrate([&](const SwarmState& s) { return rhs_continuous(s, g, obj, GainParams{}); }, s0, 0.01, 2.0);
  for (const auto& s : traj.samples) {
    EXPECT_EQ(s.x, s0.x);
    EXPECT_EQ(s.y.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Integrate, SampleTimesAndObservers) {
  const auto g = path3();
  const auto obj = identity_costs(3, 1);
  int calls = 0;
  std::vector<Observer> obs = {[&](const SwarmState&) { ++calls; }};
  const auto traj = integrate([&](const SwarmState& s) { return rhs_continuous(s, g, obj, GainParams{}); },
                              random_initial_state(3, 1, 1), 0.1, 1.0, obs);
  EXPECT_EQ(calls, 11);
  EXPECT_NEAR(traj.samples[7].t, 0.7, 1e-15);
  EXPECT_DOUBLE_EQ(traj.back().t, 1.0);
}

TEST(Integrate, DivergenceCarriesLastFiniteState) {
  const auto g = build_graph(1, std::vector<Edge>{});
  // Concave cost: the single agent runs away exponentially.
  const auto runaway = custom_cost(1, [](const Vector& x) { return -50.0 * x.squaredNorm(); },
                                   [](const Vector& x) { return Vector(-100.0 * x); });
  const GlobalObjective obj({runaway});
  SwarmState s0 = SwarmState::zeros(1, 1);
  s0.x(0, 0) = 1.0;
  try {
    integrate([&](const SwarmState& s) { return rhs_continuous(s, g, obj, GainParams{}); }, s0, 0.01, 100.0);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_TRUE(e.last_finite_state().finite());
    EXPECT_LE(e.last_finite_state().max_abs(), kDivergenceCutoff);
  }
}

TEST(Integrate, StepValidation) {
  EXPECT_THROW(step_count(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(step_count(0.1, 0.05), std::invalid_argument);
  EXPECT_EQ(step_count(0.01, 50.0), 5000u);
}

TEST(Integrate, ConservationAndScenario3Convergence) {
  const Scenario sc = scenario_from_json(presets::scenario3());
  const auto xstar = minimizer_oracle(sc.objective).x;
  const auto traj = integrate(
      [&](const SwarmState& s) { return rhs_continuous(s, sc.graph, sc.objective, sc.gains); }, sc.initial_state(),
      0.01, 50.0);
  for (const auto& s : traj.samples) {
    EXPECT_LE(s.v.colwise().sum().cwiseAbs().maxCoeff(), 1e-10 * (1.0 + s.t));
  }
  EXPECT_LE(max_agent_error(traj.back().x, xstar), 1e-3);
  const auto res = equilibrium_residual(traj.back(), sc.graph, sc.objective, sc.gains);
  EXPECT_LE(res.r_y, 1e-3);
  EXPECT_LE(res.r_grad, 1e-3);
  EXPECT_LE(res.r_consensus, 1e-3);
}

TEST(Equilibrium, ExactEquilibriumResiduals) {
  const Scenario sc = scenario_from_json(presets::scenario3());
  const auto xstar = minimizer_oracle(sc.objective).x;
  SwarmState s = SwarmState::zeros(3, 3);
  s.x.rowwise() = xstar.transpose();
  s.v = -(sc.gains.alpha / sc.gains.theta) * sc.objective.gradient(s.x);
  const auto r = equilibrium_residual(s, sc.graph, sc.objective, sc.gains);
  EXPECT_LE(r.r_y, 1e-12);
  EXPECT_LE(r.r_grad, 1e-12);
  EXPECT_LE(r.r_consensus, 1e-12);
  EXPECT_LE(s.v.colwise().sum().norm(), 1e-12);

  const auto rr = equilibrium_residual(random_initial_state(3, 3, 9), sc.graph, sc.objective, sc.gains);
  EXPECT_GT(rr.r_y, 0.0);
  EXPECT_GT(rr.r_grad, 0.0);
  EXPECT_GT(rr.r_consensus, 0.0);
}

TEST(Errors, Metrics) {
  AgentMatrix x(2, 2);
  x << 1, 0, 0, 2;
  const Vector xs = Vector::Zero(2);
  EXPECT_DOUBLE_EQ(max_agent_error(x, xs), 2.0);
  EXPECT_DOUBLE_EQ(stacked_error(x, xs), std::sqrt(5.0));
  EXPECT_NEAR(consensus_residual(x), (centering_projector(2) * x).norm(), 1e-15);
}

TEST(InitialState, SeededAndReproducible) {
  const auto a = random_initial_state(3, 3, 42), b = random_initial_state(3, 3, 42);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.v.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(a.x.cwiseAbs().maxCoeff(), 5.0);
  EXPECT_NE(random_initial_state(3, 3, 43).x, a.x);
}
