#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace kinlub {

struct GmresOptions {
  double rel_tol = 1e-11;
  int restart = 40;
  int max_iterations = 2000;
};

struct GmresResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  /// Relative residual |b - A x| / |b| after each inner iteration.
  std::vector<double> history;
};

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
/// Never throws on non-convergence; callers inspect `converged`.
GmresResult gmres(const LinearMap& apply, const Eigen::VectorXd& b, Eigen::VectorXd x0,
                  const GmresOptions& opts);

}  // namespace kinlub
