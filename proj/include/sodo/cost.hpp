#pragma once

// Private convex costs f_i, the global objective sum_i f_i, and the
// independent minimizer / curvature oracles used to certify runs.

#include "sodo/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sodo {

class CostError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// f(x) = 1/2 (x - shift)^T H (x - shift) + linear^T x + constant
struct QuadraticCost {
  Matrix hessian;
  Vector shift;
  Vector linear;
  double constant = 0.0;
};

/// f(x) = ||x - center||^4
struct QuarticCost {
  Vector center;
};

struct CustomCost {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

struct Convex {};
struct StronglyConvex {
  double modulus = 0.0;
};
using ConvexityClass = std::variant<Convex, StronglyConvex>;

class CostFunction {
 public:
  using Kind = std::variant<QuadraticCost, QuarticCost, CustomCost>;

  CostFunction(Kind kind, std::size_t dimension, std::optional<double> global_lipschitz,
               ConvexityClass convexity)
      : kind_(std::move(kind)),
        dimension_(dimension),
        global_lipschitz_(global_lipschitz),
        convexity_(convexity) {}

  std::size_t dimension() const noexcept { return dimension_; }
  const Kind& kind() const noexcept { return kind_; }
  bool is_quadratic() const noexcept { return std::holds_alternative<QuadraticCost>(kind_); }
  bool is_quartic() const noexcept { return std::holds_alternative<QuarticCost>(kind_); }

  /// M-bar_i if the gradient is globally Lipschitz (or an override was supplied).
  std::optional<double> global_lipschitz() const noexcept { return global_lipschitz_; }
  void set_global_lipschitz(double value) {
    if (!(value > 0.0)) throw CostError("global Lipschitz override must be positive");
    global_lipschitz_ = value;
  }
  const ConvexityClass& convexity() const noexcept { return convexity_; }

  double value(const Vector& x) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticCost>) {
            const Vector d = x - k.shift;
            return 0.5 * d.dot(k.hessian * d) + k.linear.dot(x) + k.constant;
          } else if constexpr (std::is_same_v<K, QuarticCost>) {
            const double s = (x - k.center).squaredNorm();
            return s * s;
          } else {
            return k.value(x);
          }
        },
        kind_);
  }

  Vector gradient(const Vector& x) const {
    return std::visit(
        [&](const auto& k) -> Vector {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, QuadraticCost>) {
            return k.hessian * (x - k.shift) + k.linear;
          } else if constexpr (std::is_same_v<K, QuarticCost>) {
            const Vector d = x - k.center;
            return 4.0 * d.squaredNorm() * d;
          } else {
            return k.gradient(x);
          }
        },
        kind_);
  }

 private:
  Kind kind_;
  std::size_t dimension_;
  std::optional<double> global_lipschitz_;
  ConvexityClass convexity_;
};

namespace detail {

inline Vector sym_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_max(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return sym_eigenvalues(m).maxCoeff();
}

inline double lambda_min(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return sym_eigenvalues(m).minCoeff();
}

inline std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os << "[";
  for (Eigen::Index k = 0; k < v.size(); ++k) os << (k ? ", " : "") << v(k);
  os << "]";
  return os.str();
}

inline void check_psd(const Matrix& h, std::size_t index) {
  if (h.rows() != h.cols()) {
    throw CostError("cost " + std::to_string(index + 1) + ": Hessian is not square");
  }
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw CostError("cost " + std::to_string(index + 1) + ": Hessian is not symmetric");
  }
  const Vector ev = sym_eigenvalues(h);
  if (ev.minCoeff() < -1e-10 * scale) {
    throw CostError("cost " + std::to_string(index + 1) +
                    ": Hessian is indefinite, eigenvalues " + format_vector(ev));
  }
}

inline CostFunction make_quadratic(Matrix h, Vector shift, Vector linear, double constant,
                                   std::size_t index) {
  check_psd(h, index);
  const auto p = static_cast<std::size_t>(h.rows());
  if (static_cast<std::size_t>(shift.size()) != p || static_cast<std::size_t>(linear.size()) != p) {
    throw CostError("cost " + std::to_string(index + 1) + ": vector length does not match Hessian");
  }
  const Vector ev = sym_eigenvalues(h);
  const double lmax = ev.size() ? ev.maxCoeff() : 0.0;
  const double lmin = ev.size() ? ev.minCoeff() : 0.0;
  ConvexityClass cls = Convex{};
  if (lmin > 1e-12 * std::max(1.0, lmax)) cls = StronglyConvex{lmin};
  // Zero Hessian: gradient is constant, so any positive constant is a valid
  // Lipschitz bound; keep it strictly positive as the assumption demands.
  const double lip = lmax > 0.0 ? lmax : std::numeric_limits<double>::min();
  return CostFunction(QuadraticCost{std::move(h), std::move(shift), std::move(linear), constant}, p,
                      lip, cls);
}

}  // namespace detail

/// f_i(x) = 1/2 (x - a_i)^T A_i (x - a_i)
inline std::vector<CostFunction> quadratic_family(const std::vector<Matrix>& matrices,
                                                  const std::vector<Vector>& shifts) {
  if (matrices.size() != shifts.size()) throw CostError("matrix/shift count mismatch");
  std::vector<CostFunction> out;
  out.reserve(matrices.size());
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const auto p = matrices[i].rows();
    out.push_back(detail::make_quadratic(matrices[i], shifts[i], Vector::Zero(p), 0.0, i));
  }
  return out;
}

/// f_i(x) = 1/2 x^T C_i x + c_i^T x
inline std::vector<CostFunction> quadratic_linear_family(const std::vector<Matrix>& matrices,
                                                         const std::vector<Vector>& linear) {
  if (matrices.size() != linear.size()) throw CostError("matrix/linear-term count mismatch");
  std::vector<CostFunction> out;
  out.reserve(matrices.size());
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const auto p = matrices[i].rows();
    out.push_back(detail::make_quadratic(matrices[i], Vector::Zero(p), linear[i], 0.0, i));
  }
  return out;
}

inline CostFunction quadratic_cost(Matrix h, Vector shift, Vector linear = {}, double constant = 0.0) {
  if (linear.size() == 0) linear = Vector::Zero(h.rows());
  return detail::make_quadratic(std::move(h), std::move(shift), std::move(linear), constant, 0);
}

/// f_i(x) = ||x - b_i||^4. Not globally gradient-Lipschitz.
inline std::vector<CostFunction> quartic_family(const std::vector<Vector>& centers) {
  std::vector<CostFunction> out;
  out.reserve(centers.size());
  for (const auto& b : centers) {
    out.emplace_back(QuarticCost{b}, static_cast<std::size_t>(b.size()), std::nullopt, Convex{});
  }
  return out;
}

inline CostFunction custom_cost(std::size_t dimension, std::function<double(const Vector&)> value,
                                std::function<Vector(const Vector&)> gradient,
                                std::optional<double> global_lipschitz = std::nullopt,
                                ConvexityClass convexity = Convex{}) {
  return CostFunction(CustomCost{std::move(value), std::move(gradient)}, dimension, global_lipschitz,
                      convexity);
}

/// f(x) = sum_i f_i(x_i) over the stacked state.
class GlobalObjective {
 public:
  GlobalObjective() = default;
  explicit GlobalObjective(std::vector<CostFunction> costs, std::optional<double> mf = std::nullopt)
      : costs_(std::move(costs)), restricted_convexity_(mf) {
    if (costs_.empty()) throw CostError("objective needs at least one cost");
    const auto p = costs_.front().dimension();
    for (const auto& c : costs_) {
      if (c.dimension() != p) throw CostError("costs have mismatched dimensions");
    }
  }

  std::size_t agents() const noexcept { return costs_.size(); }
  std::size_t dimension() const noexcept { return costs_.empty() ? 0 : costs_.front().dimension(); }
  const std::vector<CostFunction>& costs() const noexcept { return costs_; }
  std::vector<CostFunction>& costs() noexcept { return costs_; }
  const CostFunction& operator[](std::size_t i) const { return costs_[i]; }

  std::optional<double> restricted_convexity() const noexcept { return restricted_convexity_; }
  void set_restricted_convexity(double mf) { restricted_convexity_ = mf; }

  bool all_quadratic() const {
    return std::all_of(costs_.begin(), costs_.end(), [](const auto& c) { return c.is_quadratic(); });
  }
  bool globally_lipschitz() const {
    return std::all_of(costs_.begin(), costs_.end(),
                       [](const auto& c) { return c.global_lipschitz().has_value(); });
  }
  /// M-bar = max_i M-bar_i; requires every cost to carry one.
  double max_global_lipschitz() const {
    double m = 0.0;
    for (std::size_t i = 0; i < costs_.size(); ++i) {
      const auto l = costs_[i].global_lipschitz();
      if (!l) {
        throw HypothesisViolation("Global gradient Lipschitz",
                                  "cost " + std::to_string(i + 1) + " has no global Lipschitz bound");
      }
      m = std::max(m, *l);
    }
    return m;
  }

  /// f(x) = sum_i f_i(x_i), x stacked n x p.
  double value(const AgentMatrix& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < costs_.size(); ++i) {
      s += costs_[i].value(x.row(static_cast<Eigen::Index>(i)).transpose());
    }
    return s;
  }

  AgentMatrix gradient(const AgentMatrix& x) const {
    AgentMatrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < costs_.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      g.row(ii) = costs_[i].gradient(x.row(ii).transpose()).transpose();
    }
    return g;
  }

  /// sum_i f_i(z) at a common point z.
  double sum_value(const Vector& z) const {
    double s = 0.0;
    for (const auto& c : costs_) s += c.value(z);
    return s;
  }
  Vector sum_gradient(const Vector& z) const {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(dimension()));
    for (const auto& c : costs_) g += c.gradient(z);
    return g;
  }

 private:
  std::vector<CostFunction> costs_;
  std::optional<double> restricted_convexity_;
};

/// max_k ||grad f(x_k) - centraldiff(f, x_k, h)|| / max(1, ||grad f(x_k)||)
inline double gradient_check(const CostFunction& f, const std::vector<Vector>& samples,
                             double h = 1e-6) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  double worst = 0.0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Vector& x = samples[s];
    const Vector g = f.gradient(x);
    Vector fd(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      fd(k) = (f.value(xp) - f.value(xm)) / (2.0 * h);
    }
    if (!g.allFinite() || !fd.allFinite()) {
      throw std::domain_error("non-finite gradient evaluation at sample " + std::to_string(s) +
                              " x=" + detail::format_vector(x));
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  return worst;
}

struct MinimizerResult {
  Vector x;
  bool unique = true;
  double residual = 0.0;  ///< ||sum_i grad f_i(x)||
  std::size_t iterations = 0;
  enum class Method { LinearSolve, GradientDescent } method = Method::LinearSolve;
};

namespace detail {

inline MinimizerResult descent_minimizer(const GlobalObjective& obj, double tol,
                                         std::size_t max_iter) {
  const auto p = static_cast<Eigen::Index>(obj.dimension());
  MinimizerResult res;
  res.method = MinimizerResult::Method::GradientDescent;
  // Start from the mean of the quartic centers / quadratic shifts when known.
  Vector x = Vector::Zero(p);
  std::size_t anchors = 0;
  for (const auto& c : obj.costs()) {
    if (const auto* q = std::get_if<QuarticCost>(&c.kind())) {
      x += q->center;
      ++anchors;
    } else if (const auto* qc = std::get_if<QuadraticCost>(&c.kind())) {
      x += qc->shift;
      ++anchors;
    }
  }
  if (anchors) x /= static_cast<double>(anchors);

  double step = 1.0;
  double fx = obj.sum_value(x);
  Vector g = obj.sum_gradient(x);
  std::size_t it = 0;
  for (; it < max_iter && g.norm() > tol; ++it) {
    step = std::min(step * 2.0, 1e6);
    const double gg = g.squaredNorm();
    for (;;) {
      const Vector trial = x - step * g;
      const double ft = obj.sum_value(trial);
      if (ft <= fx - 0.5 * step * gg || step < 1e-300) {
        x = trial;
        fx = ft;
        break;
      }
      step *= 0.5;
    }
    g = obj.sum_gradient(x);
  }
  // Value-based line search stalls at the rounding floor of f; finish with
  // Newton steps on the gradient (finite-difference Jacobian).
  for (int k = 0; k < 20 && g.norm() > 0.1 * tol; ++k) {
    Matrix jac(p, p);
    for (Eigen::Index c = 0; c < p; ++c) {
      const double hc = 1e-6 * std::max(1.0, std::abs(x(c)));
      Vector xp = x, xm = x;
      xp(c) += hc;
      xm(c) -= hc;
      jac.col(c) = (obj.sum_gradient(xp) - obj.sum_gradient(xm)) / (2.0 * hc);
    }
    const Vector trial = x - symmetrize(jac).ldlt().solve(g);
    const Vector gt = obj.sum_gradient(trial);
    if (!trial.allFinite() || !(gt.norm() < g.norm())) break;
    x = trial;
    g = gt;
  }
  res.x = x;
  res.iterations = it;
  res.residual = g.norm();
  return res;
}

}  // namespace detail

/// x* in argmin sum_i f_i. Closed-form linear solve when every cost is
/// quadratic; otherwise backtracking gradient descent to ||sum grad|| <= 1e-8.
/// A singular quadratic system yields the minimum-norm solution with
/// unique = false.
inline MinimizerResult minimizer_oracle(const GlobalObjective& obj) {
  const auto p = static_cast<Eigen::Index>(obj.dimension());
  if (obj.all_quadratic()) {
    Matrix h = Matrix::Zero(p, p);
    Vector rhs = Vector::Zero(p);
    for (const auto& c : obj.costs()) {
      const auto& q = std::get<QuadraticCost>(c.kind());
      h += q.hessian;
      rhs += q.hessian * q.shift - q.linear;
    }
    h = detail::symmetrize(h);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    const Vector ev = es.eigenvalues();
    const double lmax = std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const double cutoff = 1e-10 * lmax;
    MinimizerResult res;
    res.method = MinimizerResult::Method::LinearSolve;
    if (ev.minCoeff() > cutoff) {
      res.x = h.ldlt().solve(rhs);
    } else {
      res.unique = false;
      Vector inv = Vector::Zero(p);
      for (Eigen::Index k = 0; k < p; ++k) inv(k) = ev(k) > cutoff ? 1.0 / ev(k) : 0.0;
      res.x = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * rhs;
    }
    res.residual = obj.sum_gradient(res.x).norm();
    return res;
  }
  auto res = detail::descent_minimizer(obj, 1e-8, 1'000'000);
  if (res.residual > 1e-8) {
    throw std::runtime_error("descent minimizer did not reach gradient residual 1e-8 (got " +
                             std::to_string(res.residual) + ")");
  }
  return res;
}

/// Upper bound on the gradient Lipschitz constant of f over the ball
/// B(center, radius).
inline double curvature_on_set(const CostFunction& f, double radius, const Vector& center) {
  if (radius < 0.0) throw std::invalid_argument("radius must be nonnegative");
  if (const auto* q = std::get_if<QuadraticCost>(&f.kind())) {
    return detail::lambda_max(detail::symmetrize(q->hessian));
  }
  if (const auto* q = std::get_if<QuarticCost>(&f.kind())) {
    // Hessian 4||z||^2 I + 8 z z^T has spectral norm 12 ||z||^2.
    const double reach = radius + (center - q->center).norm();
    return 12.0 * reach * reach;
  }
  // Custom: largest finite-difference Hessian norm over deterministic samples
  // of the ball (center, axis extremes, and random interior points).
  const auto p = static_cast<Eigen::Index>(f.dimension());
  std::vector<Vector> pts{center};
  for (Eigen::Index k = 0; k < p; ++k) {
    Vector e = Vector::Zero(p);
    e(k) = radius;
    pts.push_back(center + e);
    pts.push_back(center - e);
  }
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int s = 0; s < 64; ++s) {
    Vector d(p);
    for (Eigen::Index k = 0; k < p; ++k) d(k) = nd(rng);
    const double nrm = d.norm();
    if (nrm == 0.0) continue;
    pts.push_back(center + d / nrm * radius * std::pow(ud(rng), 1.0 / static_cast<double>(p)));
  }
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& x : pts) {
    Matrix hess(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
      Vector xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      hess.col(k) = (f.gradient(xp) - f.gradient(xm)) / (2.0 * h);
    }
    const Vector ev = detail::sym_eigenvalues(detail::symmetrize(hess));
    worst = std::max(worst, ev.cwiseAbs().maxCoeff());
  }
  return worst;
}

struct MfEstimate {
  double value = 0.0;
  bool exact = false;               ///< closed form for all-quadratic objectives
  bool assumption_violated = false;  ///< estimate <= 0
};

/// Lower estimate of the restricted strong convexity modulus m_f about x*.
inline MfEstimate estimate_mf(const GlobalObjective& obj, const Vector& xstar,
                              const std::vector<Vector>& samples) {
  MfEstimate est;
  const auto p = static_cast<Eigen::Index>(obj.dimension());
  const double noise = 1e-12;
  if (obj.all_quadratic()) {
    Matrix h = Matrix::Zero(p, p);
    double scale = 1.0;
    for (const auto& c : obj.costs()) {
      h += std::get<QuadraticCost>(c.kind()).hessian;
    }
    scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    est.value = detail::lambda_min(detail::symmetrize(h));
    est.exact = true;
    est.assumption_violated = est.value <= noise * scale;
    return est;
  }
  const Vector gstar = obj.sum_gradient(xstar);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& x : samples) {
    const Vector d = x - xstar;
    const double dd = d.squaredNorm();
    if (dd == 0.0) continue;
    best = std::min(best, (obj.sum_gradient(x) - gstar).dot(d) / dd);
  }
  if (!std::isfinite(best)) throw std::invalid_argument("estimate_mf needs samples distinct from x*");
  est.value = best;
  est.assumption_violated = best <= noise;
  return est;
}

}  // namespace sodo
