#pragma once

// Independent reference computations for the test suite. None of these
// call into the library's own solvers.

#include "sodo/common.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using sodo::Matrix;
using sodo::Vector;

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
inline Vector jacobi_eigenvalues(Matrix a, int sweeps = 100) {
  const auto n = a.rows();
  for (int s = 0; s < sweeps; ++s) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return Eigen::Map<Vector>(ev.data(), n);
}

/// x(t) for x'' + gamma x' + alpha x = 0 with x(0) = x0, x'(0) = y0
/// (overdamped case gamma^2 > 4 alpha).
inline double heavy_ball(double t, double alpha, double gamma, double x0, double y0) {
  const double disc = std::sqrt(gamma * gamma - 4.0 * alpha);
  const double r1 = (-gamma + disc) / 2.0, r2 = (-gamma - disc) / 2.0;
  const double c1 = (y0 - r2 * x0) / (r1 - r2);
  const double c2 = x0 - c1;
  return c1 * std::exp(r1 * t) + c2 * std::exp(r2 * t);
}

/// Newton's method on sum_i ||x - b_i||^4 with the analytic Hessian.
inline Vector quartic_minimizer(const std::vector<Vector>& centers, Vector x, int iters = 100) {
  const auto p = x.size();
  for (int k = 0; k < iters; ++k) {
    Vector g = Vector::Zero(p);
    Matrix h = Matrix::Zero(p, p);
    for (const auto& b : centers) {
      const Vector d = x - b;
      const double s = d.squaredNorm();
      g += 4.0 * s * d;
      h += 4.0 * s * Matrix::Identity(p, p) + 8.0 * d * d.transpose();
    }
    if (g.norm() < 1e-14) break;
    x -= h.inverse() * g;
  }
  return x;
}

/// Random connected weighted graph: a random spanning tree plus extra edges.
struct RandomGraph {
  std::size_t n;
  std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
};

inline RandomGraph random_connected_graph(std::size_t n, std::mt19937_64& rng) {
  RandomGraph g{n, {}};
  std::uniform_real_distribution<double> w(0.2, 3.0);
  std::vector<std::vector<bool>> used(n, std::vector<bool>(n, false));
  for (std::size_t v = 1; v < n; ++v) {
    std::uniform_int_distribution<std::size_t> pick(0, v - 1);
    const std::size_t u = pick(rng);
    g.edges.emplace_back(u, v, w(rng));
    used[u][v] = used[v][u] = true;
  }
  std::uniform_int_distribution<std::size_t> any(0, n - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = any(rng), b = any(rng);
    if (a == b || used[a][b]) continue;
    used[a][b] = used[b][a] = true;
    g.edges.emplace_back(a, b, w(rng));
  }
  return g;
}

// Frozen reference values, computed offline with numpy/scipy at double
// precision and pasted here verbatim.
namespace frozen {
inline constexpr double kLambdaMaxA2 = 6.645751311064592;
inline constexpr double kSumAEig2 = 11.237912651869985;
inline constexpr double kSumAEig3 = 26.762087348130009;
inline constexpr double kLambdaMaxA[3] = {3.0, 6.645751311064592, 21.51387818865997};
inline constexpr double kScenario3X[3] = {-0.06913620359033701, 0.3992478461729529, -0.18455529411574095};
inline constexpr double kScenario3Mf = 4.3790087301058245;
inline constexpr double kScenario3Mbar = 6.833338959401634;
inline constexpr double kQuarticX[3] = {-0.48442305954733655, -0.33919212065374255, 0.9657747920352566};
inline constexpr double kScenario1MinNormX[3] = {-0.09186068162926005, -1.0576349958437243, 1.149495677472984};
inline constexpr double kHeavyBallX5 = 0.18151038344902135;
/// Reference per-agent trigger counts reported for the event scenario.
inline constexpr int kReferenceTriggerCounts[3] = {1199, 139, 664};
}  // namespace frozen

}  // namespace oracle
