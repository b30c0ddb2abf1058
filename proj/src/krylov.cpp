#include "kinlub/krylov.hpp"

#include <cmath>

namespace kinlub {

GmresResult gmres(const LinearMap& apply, const Eigen::VectorXd& b, Eigen::VectorXd x0,
                  const GmresOptions& opts) {
  GmresResult result;
  const double bnorm = b.norm();
  if (x0.size() != b.size()) x0 = Eigen::VectorXd::Zero(b.size());
  result.x = std::move(x0);
  if (bnorm == 0.0) {
    result.x.setZero();
    result.converged = true;
    result.history.push_back(0.0);
    return result;
  }

  const int m = opts.restart;
  Eigen::MatrixXd basis(b.size(), m + 1);
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);

  while (result.iterations < opts.max_iterations) {
    Eigen::VectorXd r = b - apply(result.x);
    double beta = r.norm();
    if (beta / bnorm <= opts.rel_tol) {
      result.converged = true;
      result.history.push_back(beta / bnorm);
      return result;
    }
    basis.col(0) = r / beta;
    g.setZero();
    g(0) = beta;
    hess.setZero();

    int j = 0;
    for (; j < m && result.iterations < opts.max_iterations; ++j) {
      Eigen::VectorXd w = apply(basis.col(j));
      for (int i = 0; i <= j; ++i) {
        hess(i, j) = basis.col(i).dot(w);
        w -= hess(i, j) * basis.col(i);
      }
      hess(j + 1, j) = w.norm();
      if (hess(j + 1, j) > 0.0) basis.col(j + 1) = w / hess(j + 1, j);

      for (int i = 0; i < j; ++i) {
        const double t = cs(i) * hess(i, j) + sn(i) * hess(i + 1, j);
        hess(i + 1, j) = -sn(i) * hess(i, j) + cs(i) * hess(i + 1, j);
        hess(i, j) = t;
      }
      const double denom = std::hypot(hess(j, j), hess(j + 1, j));
      cs(j) = denom > 0.0 ? hess(j, j) / denom : 1.0;
      sn(j) = denom > 0.0 ? hess(j + 1, j) / denom : 0.0;
      hess(j, j) = denom;
      hess(j + 1, j) = 0.0;
      g(j + 1) = -sn(j) * g(j);
      g(j) = cs(j) * g(j);

      ++result.iterations;
      const double rel = std::abs(g(j + 1)) / bnorm;
      result.history.push_back(rel);
      if (rel <= opts.rel_tol || hess(j, j) == 0.0) {
        ++j;
        break;
      }
    }

    const Eigen::VectorXd y =
        hess.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    result.x += basis.leftCols(j) * y;
  }

  const double final_rel = (b - apply(result.x)).norm() / bnorm;
  result.history.push_back(final_rel);
  result.converged = final_rel <= opts.rel_tol;
  return result;
}

}  // namespace kinlub
