#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <memory>
#include <string>

#include "kinlub/velocity.hpp"

namespace kinlub {

enum class CollisionKind { weighted_bgk, plugin };

/// Parameters of the linearized collision operator.
///
/// The collision frequency is nu(v) = nu_const + nu_slope |v|, so that
/// min(nu_const, nu_slope) (1+|v|) <= nu(v) <= max(nu_const, nu_slope) (1+|v|).
struct CollisionModel {
  CollisionKind kind = CollisionKind::weighted_bgk;
  double nu_const = 1.0;
  double nu_slope = 1.0;
  double k0 = 1.0;
  /// Symmetric kernel k(v_i, v_j) for kind == plugin; (K g)_i = sum_j k_ij w_j g_j.
  std::shared_ptr<const Eigen::MatrixXd> plugin_kernel;

  double nu_min() const { return std::min(nu_const, nu_slope); }
  double nu_max() const { return std::max(nu_const, nu_slope); }
};

double collision_frequency(const Eigen::Vector3d& v, const CollisionModel& model);

/// L = nu I + K and the bilinear surrogate Gamma, bound to one grid.
///
/// weighted_bgk: L g = (nu/k0) (g - Pi_nu g), with Pi_nu the orthogonal
/// projection onto span{1, v, |v|^2} in the nu-weighted inner product.
/// plugin: L g = (nu/k0) g + K g with a user kernel (validated on load).
///
/// Gamma(f, g) = (1/2k0) (I - P)(nu f g) for both kinds. It is symmetric,
/// bilinear, orthogonal to ker L and nu-bounded. The hard-sphere identity
/// Gamma(1, g) = -L g does not hold for this surrogate.
class CollisionOperator {
 public:
  CollisionOperator(CollisionModel model, const VelocityGrid& grid);

  const CollisionModel& model() const noexcept { return model_; }
  const VelocityGrid& grid() const noexcept { return grid_; }

  /// nu(v_k)/k0 at every node: the multiplicative part of L.
  const Eigen::VectorXd& rate() const noexcept { return rate_; }
  /// nu(v_k) at every node.
  const Eigen::VectorXd& nu() const noexcept { return nu_; }

  VelocityFunction apply_L(const VelocityFunction& g) const;
  /// Applies L to every row of `rows` (one velocity function per row).
  Eigen::MatrixXd apply_L_rows(const Eigen::MatrixXd& rows) const;
  /// Applies K = L - rate() to every row.
  Eigen::MatrixXd apply_K_rows(const Eigen::MatrixXd& rows) const;

  VelocityFunction apply_Gamma(const VelocityFunction& f, const VelocityFunction& g) const;
  /// Row-wise Gamma(f_i, g_i).
  Eigen::MatrixXd apply_Gamma_rows(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g) const;

  /// Dense matrix of L acting on node values.
  Eigen::MatrixXd dense_L() const;

  /// Smallest eigenvalue of L on the orthogonal complement of its kernel,
  /// from a dense eigensolve of the symmetrized matrix W^1/2 L W^-1/2.
  double spectral_gap() const;

  /// Upper bound on |Gamma(f,g)| / (|f|_nu |g|_nu) valid on this grid:
  /// (1/2k0) max_k w_k^{-1/2}.
  double gamma_bound() const;

  /// |g|_nu^2 = sum_k w_k nu_k g_k^2.
  double nu_norm_squared(const VelocityFunction& g) const;

 private:
  Eigen::MatrixXd project_nu_rows(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd project_rows(const Eigen::MatrixXd& rows) const;

  CollisionModel model_;
  VelocityGrid grid_;
  Eigen::VectorXd nu_;
  Eigen::VectorXd rate_;
  // weights * nu times kernel basis, and the inverse nu-Gram matrix.
  Eigen::Matrix<double, Eigen::Dynamic, kKernelDim> weighted_basis_nu_;
  Eigen::Matrix<double, kKernelDim, kKernelDim> gram_nu_inv_;
  Eigen::Matrix<double, Eigen::Dynamic, kKernelDim> weighted_basis_;
  Eigen::MatrixXd plugin_operator_;  // K as an operator on node values (K = k W)
};

VelocityFunction apply_L(const VelocityFunction& g, const CollisionModel& model, const VelocityGrid& grid);
VelocityFunction apply_Gamma(const VelocityFunction& f, const VelocityFunction& g,
                             const CollisionModel& model, const VelocityGrid& grid);

/// The symmetric kernel k of the weighted-BGK operator, written in the
/// plugin layout. Loading it as a plugin reproduces the BGK operator.
Eigen::MatrixXd bgk_kernel_matrix(const CollisionModel& model, const VelocityGrid& grid);

/// Reads a plugin kernel k(v_i, v_j) from CSV (one row per line) or from a
/// raw binary file of size() * size() little-endian doubles (".bin").
/// Validates shape, symmetry and kernel annihilation against `base`.
CollisionModel load_plugin_model(const std::string& path, const CollisionModel& base,
                                 const VelocityGrid& grid);

/// Checks a plugin kernel: symmetric to 1e-10 relative and
/// (nu/k0) phi + K phi = 0 to 1e-8 for every kernel basis phi.
void validate_plugin_kernel(const Eigen::MatrixXd& kernel, const CollisionModel& base,
                            const VelocityGrid& grid);

}  // namespace kinlub
