#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace kinlub {

/// A function of velocity sampled on the nodes of a VelocityGrid.
using VelocityFunction = Eigen::VectorXd;

/// Number of collision invariants: 1, v_x, v_y, v_z, (|v|^2 - 3)/2.
inline constexpr int kKernelDim = 5;

/// Tensor Gauss quadrature for the Gaussian measure M(v) dv.
///
/// Weights absorb the normalized Maxwellian, so every L^2(M dv) inner
/// product is a plain weighted sum over nodes. Nodes are stored in
/// (x, y, z) lexicographic order: index = (ix * order + iy) * order + iz.
class VelocityGrid {
 public:
  explicit VelocityGrid(int order);

  int order() const noexcept { return order_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.size()); }

  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  /// size() x 3 matrix of node velocities.
  const Eigen::MatrixX3d& nodes() const noexcept { return nodes_; }
  Eigen::Vector3d node(std::size_t k) const { return nodes_.row(static_cast<Eigen::Index>(k)); }

  /// 1D nodes / weights of the underlying rule.
  const Eigen::VectorXd& nodes_1d() const noexcept { return nodes1d_; }
  const Eigen::VectorXd& weights_1d() const noexcept { return weights1d_; }

  std::size_t index(int ix, int iy, int iz) const noexcept {
    return static_cast<std::size_t>((ix * order_ + iy) * order_ + iz);
  }

  /// Node components as velocity functions.
  VelocityFunction vx() const { return nodes_.col(0); }
  VelocityFunction vy() const { return nodes_.col(1); }
  VelocityFunction vz() const { return nodes_.col(2); }
  VelocityFunction speed_squared() const { return nodes_.rowwise().squaredNorm(); }
  VelocityFunction constant(double c) const { return VelocityFunction::Constant(weights_.size(), c); }

  /// size() x 5 matrix whose columns are the kernel basis functions.
  const Eigen::Matrix<double, Eigen::Dynamic, kKernelDim>& kernel_basis() const noexcept {
    return basis_;
  }

  /// Inverse Gram matrix of the kernel basis under the grid quadrature.
  const Eigen::Matrix<double, kKernelDim, kKernelDim>& kernel_gram_inverse() const noexcept {
    return gram_inv_;
  }

  /// Permutation taking node (ix, iy, iz) to (iy, ix, iz): the x <-> y
  /// reflection, which maps g(v) to g(v_y, v_x, v_z).
  const std::vector<std::size_t>& swap_xy() const noexcept { return swap_xy_; }

  /// Largest absolute error over all monomial moments of total degree
  /// <= max_degree against the closed-form Gaussian moments.
  double max_moment_error(int max_degree) const;

 private:
  int order_;
  Eigen::VectorXd nodes1d_;
  Eigen::VectorXd weights1d_;
  Eigen::MatrixX3d nodes_;
  Eigen::VectorXd weights_;
  Eigen::Matrix<double, Eigen::Dynamic, kKernelDim> basis_;
  Eigen::Matrix<double, kKernelDim, kKernelDim> gram_inv_;
  std::vector<std::size_t> swap_xy_;
};

/// Coefficients of the kernel projection P f = a + v.b + c (|v|^2 - 3)/2.
struct FluidMoments {
  double a = 0.0;
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  double c = 0.0;

  Eigen::Matrix<double, kKernelDim, 1> as_vector() const;
  static FluidMoments from_vector(const Eigen::Matrix<double, kKernelDim, 1>& m);
  /// Evaluate a + v.b + c(|v|^2-3)/2 on the grid nodes.
  VelocityFunction reconstruct(const VelocityGrid& grid) const;
};

VelocityGrid build_velocity_grid(int order);

/// Sum_k w_k f_k g_k.
double inner_product(const VelocityFunction& f, const VelocityFunction& g, const VelocityGrid& grid);

FluidMoments project_kernel(const VelocityFunction& f, const VelocityGrid& grid);

/// f - P f.
VelocityFunction orthogonal_part(const VelocityFunction& f, const VelocityGrid& grid);

/// Exact Gaussian moment E[x^n] for a unit-variance centered normal.
double gaussian_moment(int n);

void to_json(nlohmann::json& j, const VelocityGrid& grid);

}  // namespace kinlub
