#include "kinlub/velocity.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "kinlub/errors.hpp"

namespace kinlub {

namespace {

// Golub-Welsch for the probabilists' Hermite weight exp(-x^2/2)/sqrt(2 pi).
// The rule is symmetrized so that node k and node n-1-k are exact negatives.
void hermite_rule(int n, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  x = eig.eigenvalues();
  w = eig.eigenvectors().row(0).transpose().array().square();

  for (int k = 0; k < n / 2; ++k) {
    const int m = n - 1 - k;
    const double node = 0.5 * (x(m) - x(k));
    const double weight = 0.5 * (w(m) + w(k));
    x(k) = -node;
    x(m) = node;
    w(k) = w(m) = weight;
  }
  if (n % 2 == 1) x(n / 2) = 0.0;
  w /= w.sum();
}

}  // namespace

double gaussian_moment(int n) {
  if (n < 0) throw InvalidArgument("gaussian_moment: negative degree");
  if (n % 2 == 1) return 0.0;
  double m = 1.0;
  for (int k = n - 1; k > 0; k -= 2) m *= k;
  return m;
}

VelocityGrid::VelocityGrid(int order) : order_(order) {
  if (order < 2) throw InvalidArgument("velocity grid order must be >= 2");
  hermite_rule(order, nodes1d_, weights1d_);

  const auto n = static_cast<Eigen::Index>(order) * order * order;
  nodes_.resize(n, 3);
  weights_.resize(n);
  swap_xy_.resize(static_cast<std::size_t>(n));
  for (int ix = 0; ix < order; ++ix) {
    for (int iy = 0; iy < order; ++iy) {
      for (int iz = 0; iz < order; ++iz) {
        const auto k = static_cast<Eigen::Index>(index(ix, iy, iz));
        nodes_(k, 0) = nodes1d_(ix);
        nodes_(k, 1) = nodes1d_(iy);
        nodes_(k, 2) = nodes1d_(iz);
        weights_(k) = weights1d_(ix) * weights1d_(iy) * weights1d_(iz);
        swap_xy_[static_cast<std::size_t>(k)] = index(iy, ix, iz);
      }
    }
  }

  basis_.resize(n, kKernelDim);
  basis_.col(0).setOnes();
  basis_.col(1) = nodes_.col(0);
  basis_.col(2) = nodes_.col(1);
  basis_.col(3) = nodes_.col(2);
  basis_.col(4) = 0.5 * (nodes_.rowwise().squaredNorm().array() - 3.0);

  const Eigen::Matrix<double, kKernelDim, kKernelDim> gram =
      basis_.transpose() * weights_.asDiagonal() * basis_;
  gram_inv_ = gram.inverse();
}

double VelocityGrid::max_moment_error(int max_degree) const {
  double err = 0.0;
  for (int a = 0; a <= max_degree; ++a) {
    for (int b = 0; a + b <= max_degree; ++b) {
      for (int c = 0; a + b + c <= max_degree; ++c) {
        double q = 0.0;
        for (Eigen::Index k = 0; k < weights_.size(); ++k) {
          q += weights_(k) * std::pow(nodes_(k, 0), a) * std::pow(nodes_(k, 1), b) *
               std::pow(nodes_(k, 2), c);
        }
        const double exact = gaussian_moment(a) * gaussian_moment(b) * gaussian_moment(c);
        err = std::max(err, std::abs(q - exact));
      }
    }
  }
  return err;
}

Eigen::Matrix<double, kKernelDim, 1> FluidMoments::as_vector() const {
  Eigen::Matrix<double, kKernelDim, 1> m;
  m << a, b(0), b(1), b(2), c;
  return m;
}

FluidMoments FluidMoments::from_vector(const Eigen::Matrix<double, kKernelDim, 1>& m) {
  FluidMoments f;
  f.a = m(0);
  f.b = m.segment<3>(1);
  f.c = m(4);
  return f;
}

VelocityFunction FluidMoments::reconstruct(const VelocityGrid& grid) const {
  return grid.kernel_basis() * as_vector();
}

VelocityGrid build_velocity_grid(int order) { return VelocityGrid(order); }

double inner_product(const VelocityFunction& f, const VelocityFunction& g, const VelocityGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (f.size() != n || g.size() != n) {
    throw InvalidArgument("inner_product: function length does not match grid");
  }
  return (grid.weights().array() * f.array() * g.array()).sum();
}

FluidMoments project_kernel(const VelocityFunction& f, const VelocityGrid& grid) {
  if (grid.order() < 3) throw InvalidArgument("project_kernel needs grid order >= 3");
  if (f.size() != static_cast<Eigen::Index>(grid.size())) {
    throw InvalidArgument("project_kernel: function length does not match grid");
  }
  const Eigen::Matrix<double, kKernelDim, 1> rhs =
      grid.kernel_basis().transpose() * (grid.weights().array() * f.array()).matrix();
  return FluidMoments::from_vector(grid.kernel_gram_inverse() * rhs);
}

VelocityFunction orthogonal_part(const VelocityFunction& f, const VelocityGrid& grid) {
  return f - project_kernel(f, grid).reconstruct(grid);
}

void to_json(nlohmann::json& j, const VelocityGrid& grid) {
  j = nlohmann::json{{"order", grid.order()},
                     {"node_count", grid.size()},
                     {"max_moment_error_deg6", grid.max_moment_error(6)}};
}

}  // namespace kinlub
