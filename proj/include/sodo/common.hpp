#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace sodo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Stacked agent quantities are stored as n x p matrices, one row per agent.
/// Applying (M kron I_p) to the stacked vector is then just M * X.
using AgentMatrix = Eigen::MatrixXd;

/// A theorem or assumption hypothesis that a configuration fails.
class HypothesisViolation : public std::invalid_argument {
 public:
  HypothesisViolation(std::string hypothesis, const std::string& detail)
      : std::invalid_argument(hypothesis + " violated: " + detail),
        hypothesis_(std::move(hypothesis)) {}

  const std::string& hypothesis() const noexcept { return hypothesis_; }

 private:
  std::string hypothesis_;
};

namespace detail {

/// sum_i u_i^T (M v)_i  ==  u^T (M kron I_p) v
inline double kron_form(const AgentMatrix& u, const Matrix& m, const AgentMatrix& v) {
  return u.cwiseProduct(m * v).sum();
}

inline double frob_dot(const AgentMatrix& u, const AgentMatrix& v) { return u.cwiseProduct(v).sum(); }

inline bool all_finite(const AgentMatrix& m) { return m.allFinite(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail
}  // namespace sodo
