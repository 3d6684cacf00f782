#pragma once

// Weighted undirected communication graph, its Laplacian, and the spectral
// quantities (rho, rho2, K_n, orthonormal split r/R/Lambda_1) that every
// convergence constant is built from.

#include "sodo/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sodo {

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  double weight = 1.0;
};

enum class IndexBase { Zero, One };

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Connected-component report attached to errors on disconnected graphs.
/// Component members are 0-based agent indices.
class DisconnectedGraph : public HypothesisViolation {
 public:
  explicit DisconnectedGraph(std::vector<std::vector<std::size_t>> components)
      : HypothesisViolation("Graph connectivity", describe(components)),
        components_(std::move(components)) {}

  const std::vector<std::vector<std::size_t>>& components() const noexcept { return components_; }

  static std::string describe(const std::vector<std::vector<std::size_t>>& comps) {
    std::ostringstream os;
    os << "graph has " << comps.size() << " connected components:";
    for (const auto& c : comps) {
      os << " {";
      for (std::size_t k = 0; k < c.size(); ++k) os << (k ? "," : "") << c[k] + 1;
      os << "}";
    }
    os << " (1-based agent ids)";
    return os.str();
  }

 private:
  std::vector<std::vector<std::size_t>> components_;
};

class NetworkGraph {
 public:
  NetworkGraph() = default;

  /// Builds the graph from an undirected edge list. Each (i, j) pair may
  /// appear once in either orientation.
  static NetworkGraph from_edges(std::size_t n, std::span<const Edge> edges,
                                 IndexBase base = IndexBase::Zero) {
    if (n == 0) throw GraphError("graph needs at least one agent");
    NetworkGraph g;
    g.adjacency_ = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const std::size_t offset = base == IndexBase::One ? 1 : 0;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : edges) {
      if (e.i < offset || e.j < offset || e.i - offset >= n || e.j - offset >= n) {
        std::ostringstream os;
        os << "edge (" << e.i << "," << e.j << ") out of range for n=" << n;
        throw GraphError(os.str());
      }
      const std::size_t i = e.i - offset;
      const std::size_t j = e.j - offset;
      if (i == j) throw GraphError("self-loop on agent " + std::to_string(i + 1));
      if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
        throw GraphError("edge (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                         ") has nonpositive weight");
      }
      auto key = std::minmax(i, j);
      if (!seen.insert(key).second) {
        throw GraphError("duplicate edge (" + std::to_string(key.first + 1) + "," +
                         std::to_string(key.second + 1) + ")");
      }
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      g.adjacency_(ii, jj) = e.weight;
      g.adjacency_(jj, ii) = e.weight;
    }
    g.degrees_ = g.adjacency_.rowwise().sum();
    g.laplacian_ = Matrix(g.degrees_.asDiagonal()) - g.adjacency_;
    return g;
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(adjacency_.rows()); }
  const Matrix& adjacency() const noexcept { return adjacency_; }
  const Matrix& laplacian() const noexcept { return laplacian_; }
  const Vector& degrees() const noexcept { return degrees_; }

  std::vector<std::size_t> neighbors(std::size_t i) const {
    std::vector<std::size_t> out;
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < adjacency_.cols(); ++j) {
      if (adjacency_(ii, j) > 0.0) out.push_back(static_cast<std::size_t>(j));
    }
    return out;
  }

 private:
  Matrix adjacency_;
  Matrix laplacian_;
  Vector degrees_;
};

inline NetworkGraph build_graph(std::size_t n, std::span<const Edge> edges,
                                IndexBase base = IndexBase::Zero) {
  return NetworkGraph::from_edges(n, edges, base);
}

inline std::vector<std::vector<std::size_t>> connected_components(const NetworkGraph& g) {
  const std::size_t n = g.size();
  std::vector<int> label(n, -1);
  std::vector<std::vector<std::size_t>> comps;
  for (std::size_t s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    comps.emplace_back();
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = static_cast<int>(comps.size() - 1);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      comps.back().push_back(u);
      for (std::size_t w : g.neighbors(u)) {
        if (label[w] < 0) {
          label[w] = label[s];
          q.push(w);
        }
      }
    }
    std::sort(comps.back().begin(), comps.back().end());
  }
  return comps;
}

inline bool is_connected(const NetworkGraph& g) { return connected_components(g).size() == 1; }

/// Eigen-structure of a connected Laplacian:
///   L = [r R] diag(0, Lambda_1) [r R]^T,  r = 1/sqrt(n) 1_n.
struct SpectralData {
  Vector eigenvalues;  ///< ascending; eigenvalues(0) is the consensus zero
  double rho = 0.0;    ///< rho(L), largest eigenvalue
  double rho2 = std::numeric_limits<double>::quiet_NaN();  ///< smallest positive eigenvalue
  Matrix kn;           ///< I_n - (1/n) 1 1^T
  Vector r;            ///< 1/sqrt(n) 1_n
  Matrix R;            ///< n x (n-1), eigenvectors 2..n
  Vector lambda1;      ///< eigenvalues 2..n

  /// R Lambda_1^{-1} R^T, the Laplacian pseudo-inverse.
  Matrix laplacian_pinv() const {
    return R * lambda1.cwiseInverse().asDiagonal() * R.transpose();
  }
  /// R Lambda_1^{-1/2} R^T
  Matrix laplacian_pinv_sqrt() const {
    return R * lambda1.cwiseSqrt().cwiseInverse().asDiagonal() * R.transpose();
  }
  /// L^{1/2} = R Lambda_1^{1/2} R^T
  Matrix laplacian_sqrt() const {
    return R * lambda1.cwiseSqrt().asDiagonal() * R.transpose();
  }
};

inline Matrix centering_projector(std::size_t n) {
  const auto nn = static_cast<Eigen::Index>(n);
  return Matrix::Identity(nn, nn) - Matrix::Constant(nn, nn, 1.0 / static_cast<double>(n));
}

/// Dense symmetric eigendecomposition of L. Throws DisconnectedGraph when
/// rho2 would be undefined. A single agent yields an empty R and rho2 = NaN.
inline SpectralData spectral(const NetworkGraph& g) {
  auto comps = connected_components(g);
  if (comps.size() != 1) throw DisconnectedGraph(std::move(comps));

  const std::size_t n = g.size();
  const auto nn = static_cast<Eigen::Index>(n);
  SpectralData s;
  s.kn = centering_projector(n);
  s.r = Vector::Constant(nn, 1.0 / std::sqrt(static_cast<double>(n)));

  Eigen::SelfAdjointEigenSolver<Matrix> es(g.laplacian());
  if (es.info() != Eigen::Success) throw std::runtime_error("Laplacian eigendecomposition failed");
  s.eigenvalues = es.eigenvalues();
  s.rho = s.eigenvalues(nn - 1);
  const double zero_tol = 1e-9 * std::max(s.rho, std::numeric_limits<double>::min());
  if (std::abs(s.eigenvalues(0)) < zero_tol) s.eigenvalues(0) = 0.0;

  if (n == 1) {
    s.rho = 0.0;
    s.R = Matrix(1, 0);
    s.lambda1 = Vector(0);
    return s;
  }
  s.rho2 = s.eigenvalues(1);
  s.lambda1 = s.eigenvalues.tail(nn - 1);
  s.R = es.eigenvectors().rightCols(nn - 1);
  return s;
}

}  // namespace sodo
