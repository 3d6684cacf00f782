// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit if any fail.

#include "sodo/run.hpp"
#include "sodo/scenario.hpp"

#include "oracles.hpp"

#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace sodo;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << (ok ? "" : "FAILED ") << what;
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string config(const std::string& name) { return std::string(SODO_CONFIG_DIR) + "/" + name; }

Scenario with_horizon(json doc, double horizon) {
  doc["integration"]["horizon"] = horizon;
  return scenario_from_json(std::move(doc));
}

const CheckResult& need(const RunReport& r, const std::string& name) {
  static const CheckResult missing{"missing", false, 0.0, "check not produced"};
  const CheckResult* c = r.check(name);
  return c ? *c : missing;
}

std::vector<Vector> box(std::size_t count, double half, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vector> out;
  for (std::size_t k = 0; k < count; ++k) {
    Vector x(3);
    for (auto& c : x) c = u(rng);
    out.push_back(x);
  }
  return out;
}

template <class F>
std::string gate_message(F&& load) {
  try {
    load();
  } catch (const HypothesisViolation& e) {
    return e.hypothesis() + ": " + e.what();
  } catch (const std::exception& e) {
    return std::string("other: ") + e.what();
  }
  return "accepted";
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& title, Verdict& v) {
    std::printf("[%s] AC-%d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  };

  // Shared runs.
  const Scenario s3 = load_scenario(config("scenario3.json"));
  const Scenario s3e = load_scenario(config("scenario3-event.json"));
  const Scenario s3l = load_scenario(config("scenario3-event-local.json"));
  const Scenario s1 = with_horizon(presets::scenario1(), 100.0);
  const Scenario s2 = with_horizon(presets::scenario2(), 100.0);
  const Scenario s1_50 = scenario_from_json(presets::scenario1());
  const Scenario s2_50 = scenario_from_json(presets::scenario2());

  const RunReport r3 = run(s3), r3e = run(s3e), r3l = run(s3l);
  const RunReport r1 = run(s1), r2 = run(s2), r1_50 = run(s1_50), r2_50 = run(s2_50);
  const std::vector<const RunReport*> all = {&r3, &r3e, &r3l, &r1, &r2, &r1_50, &r2_50};
  const std::vector<const RunReport*> events = {&r3e, &r3l};

  {  // AC-1
    Verdict v;
    double worst = 0.0, slowest = 0.0;
    bool ok = true;
    for (const auto* r : all) {
      ok = ok && r->status == "ok" && need(*r, "conservation").passed;
      worst = std::max(worst, need(*r, "conservation").worst);
    }
    for (const auto* r : {&r3, &r3e, &r3l, &r1_50, &r2_50}) slowest = std::max(slowest, r->runtime_seconds);
    v.require(ok, "max |sum v|/(1+t) = " + num(worst) + " over " + std::to_string(all.size()) + " runs");
    v.require(slowest < 5.0, "slowest T=50 run " + num(slowest) + " s");
    report(1, "conservation and runtime", v);
  }
  {  // AC-2
    Verdict v;
    v.require(r3.terminal_error <= 1e-3, "scenario 3 max_i ||x_i(50) - x*|| = " + num(r3.terminal_error));
    v.require(r3.xstar_unique, "x* from linear solve");
    report(2, "exponential convergence, scenario 3", v);
  }
  {  // AC-3
    Verdict v;
    for (const auto* r : {&r1, &r2}) {
      v.require(r->status == "ok" && r->consensus_residual <= 1e-2,
                r->scenario + " consensus " + num(r->consensus_residual));
      v.require(r->status == "ok" && r->gradient_sum_residual <= 1e-2,
                r->scenario + " gradient sum " + num(r->gradient_sum_residual));
    }
    report(3, "asymptotic convergence, scenarios 1-2 at T=100", v);
  }
  {  // AC-4
    Verdict v;
    const auto& c = need(r1, "V1_nonincreasing");
    v.require(c.passed, "scenario 1 max per-step V1 increase " + num(c.worst));
    report(4, "Lyapunov monotonicity", v);
  }
  {  // AC-5
    Verdict v;
    const auto& e2 = need(r3, "V2_envelope");
    const auto& e3 = need(r3e, "V3_envelope");
    v.require(e2.passed, "V2 envelope slack " + num(e2.worst));
    v.require(e3.passed, "V3 envelope slack " + num(e3.worst));
    const auto& rc = need(r3, "rate_vs_bound");
    const auto& re = need(r3e, "rate_vs_bound");
    v.require(rc.passed, "continuous fitted " + num(r3.fit ? r3.fit->rate : 0.0) + " vs bound " +
                             num(r3.constants.constants.thm1 ? r3.constants.constants.thm1->rate_bound : 0.0));
    v.require(re.passed, "event fitted " + num(r3e.fit ? r3e.fit->rate : 0.0) + " vs bound " +
                             num(r3e.constants.constants.thm2 ? r3e.constants.constants.thm2->rate_bound : 0.0));
    report(5, "exponential envelopes and rate bounds", v);
  }
  {  // AC-6
    Verdict v;
    const auto& z = *r3e.triggers;
    std::string counts;
    for (const auto& a : z.agents) counts += (counts.empty() ? "" : "/") + std::to_string(a.count);
    v.require(z.trigger_ratio <= 0.40, "triggers " + counts + ", ratio " + num(z.trigger_ratio));
    report(6, "communication saving", v);

    const RunReport rs = run(load_scenario(config("scenario3-event-slow-decay.json")));
    std::printf("[INFO] phi=0.5 trigger ratio %s; reference counts %d/%d/%d (ratio %s)\n",
                num(rs.triggers->trigger_ratio).c_str(), oracle::frozen::kReferenceTriggerCounts[0],
                oracle::frozen::kReferenceTriggerCounts[1], oracle::frozen::kReferenceTriggerCounts[2],
                num((oracle::frozen::kReferenceTriggerCounts[0] + oracle::frozen::kReferenceTriggerCounts[1] +
                     oracle::frozen::kReferenceTriggerCounts[2]) / 15003.0)
                    .c_str());
  }
  {  // AC-7
    Verdict v;
    for (const auto* r : events) {
      const auto& gap = need(*r, "min_inter_event_gap");
      const auto& fl = need(*r, "chi_floor");
      bool finite = r->status == "ok" && r->triggers.has_value();
      double chi_min = std::numeric_limits<double>::infinity();
      if (finite)
        for (const auto& a : r->triggers->agents) finite = finite && !a.continuous;
      for (const auto& c : r->chi_history) chi_min = std::min(chi_min, c.minCoeff());
      v.require(finite, r->scenario + " finite counts (total " +
                            std::to_string(r->triggers ? r->triggers->total_events : 0) + ")");
      v.require(gap.passed, r->scenario + " step - min gap " + num(gap.worst));
      v.require(fl.passed && chi_min > 0.0, r->scenario + " chi floor slack " + num(fl.worst) + ", min chi " + num(chi_min));
    }
    report(7, "Zeno-freedom proxy", v);
  }
  {  // AC-8
    Verdict v;
    for (const auto* r : events) {
      const auto& d = need(*r, "trigger_discipline");
      v.require(d.passed, r->scenario + " max slack " + num(d.worst));
    }
    report(8, "trigger discipline", v);
  }
  {  // AC-9
    Verdict v;
    const auto samples = box(100, 5.0, 11);
    double quad = 0.0, quart = 0.0;
    for (const auto* s : {&s1, &s3})
      for (const auto& f : s->objective.costs()) quad = std::max(quad, gradient_check(f, samples));
    for (const auto& f : s2.objective.costs()) quart = std::max(quart, gradient_check(f, samples));
    v.require(quad <= 1e-6, "quadratic gradient rel err " + num(quad));
    v.require(quart <= 1e-5, "quartic gradient rel err " + num(quart));

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    double qerr = 0.0;
    for (int k = 0; k < 100; ++k) {
      AgentMatrix xh(3, 3);
      for (auto& c : xh.reshaped()) c = u(rng);
      double sum = 0.0;
      for (std::size_t i = 0; i < 3; ++i) sum += qhat(i, xh, s3.graph);
      qerr = std::max(qerr, std::abs(sum - detail::kron_form(xh, s3.graph.laplacian(), xh)));
    }
    v.require(qerr <= 1e-12, "sum qhat vs x^T L x " + num(qerr));

    std::uniform_int_distribution<std::size_t> size(2, 10);
    double spec = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto rg = oracle::random_connected_graph(size(rng), rng);
      std::vector<Edge> edges;
      for (auto [i, j, w] : rg.edges) edges.push_back({i, j, w});
      const auto g = build_graph(rg.n, edges);
      const auto sp = spectral(g);
      const Matrix& L = g.laplacian();
      const auto n = static_cast<Eigen::Index>(rg.n);
      const Vector ref = oracle::jacobi_eigenvalues(L);
      const Matrix I = Matrix::Identity(n, n);
      spec = std::max({spec, std::abs(sp.rho - ref(n - 1)), std::abs(sp.rho2 - ref(1)),
                       -oracle::jacobi_eigenvalues(L - sp.rho2 * sp.kn)(0),
                       -oracle::jacobi_eigenvalues(sp.rho * I - L)(0),
                       (sp.kn * L - L).cwiseAbs().maxCoeff(),
                       (sp.R.transpose() * sp.R - Matrix::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff(),
                       (sp.R * sp.lambda1.asDiagonal() * sp.R.transpose() - L).cwiseAbs().maxCoeff(),
                       (sp.laplacian_pinv() * L - sp.kn).cwiseAbs().maxCoeff(),
                       (sp.laplacian_pinv_sqrt() * sp.laplacian_sqrt() - sp.kn).cwiseAbs().maxCoeff()});
    }
    v.require(spec <= 1e-10, "spectral identities max deviation " + num(spec) + " on 20 graphs");
    report(9, "oracle equivalences", v);
  }
  {  // AC-10
    Verdict v;
    const Scenario hb = scenario_from_json(presets::heavy_ball());
    const RunReport r = run(hb);
    double worst = 0.0;
    for (const auto& st : r.trajectory.samples)
      worst = std::max(worst, std::abs(st.x(0, 0) - oracle::heavy_ball(st.t, hb.gains.alpha, hb.gains.gamma, 1.0, 0.0)));
    v.require(r.status == "ok" && worst <= 1e-8, "max deviation from closed form " + num(worst));
    report(10, "heavy-ball reduction", v);
  }
  {  // AC-11
    Verdict v;
    json bad_gain = presets::scenario3();
    bad_gain["gains"]["theta"] = 12.0;
    const std::string m1 = gate_message([&] { scenario_from_json(bad_gain); });
    v.require(m1.find("Gain hypothesis theta < alpha*gamma") != std::string::npos, "theta >= alpha*gamma -> " + m1);

    json disc = presets::scenario3();
    disc["graph"]["edges"] = json::array({json::array({1, 2})});
    const std::string m2 = gate_message([&] { scenario_from_json(disc); });
    v.require(m2.find("Graph connectivity") != std::string::npos && m2.find("{3}") != std::string::npos,
              "disconnected -> " + m2);

    json quart = presets::scenario2();
    quart["algorithm"] = "event";
    const std::string m3 = gate_message([&] { scenario_from_json(quart); });
    v.require(m3.find("Global gradient Lipschitz") != std::string::npos, "event quartic -> " + m3);
    report(11, "hypothesis gates", v);
  }
  {  // AC-12
    Verdict v;
    const auto& tc = r3.constants.constants;
    const Vector xstar = r3.xstar;
    const auto sp = spectral(s3.graph);
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double scales[] = {1e-3, 0.1, 1.0, 3.0};
    std::vector<AgentMatrix> samples;
    for (int k = 0; k < 500; ++k) {
      AgentMatrix x = xstar.transpose().replicate(3, 1);
      for (auto& c : x.reshaped()) c += scales[k % 4] * nd(rng);
      samples.push_back(x);
    }
    const auto chk = check_augmented_convexity(s3.objective, xstar, s3.graph, sp, augmented_r_continuous(s3.gains, s3.eps0), tc.m_f,
                                  s3.objective.max_global_lipschitz(), samples);
    v.require(chk.margin >= -1e-9, "min margin " + num(chk.margin) + " with m = " + num(chk.m));
    report(12, "restricted convexity sampling", v);
  }

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
