#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinlub/collision.hpp"
#include "kinlub/velocity.hpp"

namespace kinlub {

/// Uniform grid on [0, height] with `nodes` points (nodes - 1 cells).
struct ZGrid {
  double height = 1.0;
  int nodes = 64;

  ZGrid() = default;
  ZGrid(double h, int n);
  int cells() const noexcept { return nodes - 1; }
  double dz() const noexcept { return height / cells(); }
  double z(int j) const noexcept { return j * dz(); }
  /// Trapezoid weights.
  Eigen::VectorXd trapezoid() const;
};

/// A distribution g(z, v): values(j, k) = g(z_j, v_k).
struct SlabField {
  ZGrid zgrid;
  Eigen::MatrixXd values;

  SlabField() = default;
  SlabField(const ZGrid& z, Eigen::Index velocity_nodes);
  SlabField(const ZGrid& z, Eigen::MatrixXd v);
  /// g(z, v) = f(v) for every z.
  static SlabField uniform(const ZGrid& z, const VelocityFunction& f);

  Eigen::Index velocity_nodes() const noexcept { return values.cols(); }
};

/// Per-z inner products (g(z_j), f) for a fixed velocity function f.
Eigen::VectorXd z_profile(const SlabField& g, const VelocityFunction& f, const VelocityGrid& grid);
/// int_0^H (g(z), f) dz by the trapezoid rule.
double z_integral(const SlabField& g, const VelocityFunction& f, const VelocityGrid& grid);
/// sqrt(int_0^H (g, g) dz).
double slab_norm(const SlabField& g, const VelocityGrid& grid);
/// sqrt(int_0^H (nu g, g) dz).
double slab_nu_norm(const SlabField& g, const CollisionOperator& op);

/// Mass flux int v_z g M dv at z = 0 and z = H.
std::pair<double, double> wall_mass_flux(const SlabField& g, const VelocityGrid& grid);

/// Step-1 integrator on one cell for speed * g' + sigma * g = q, with q
/// linear across the cell: g_out = decay * g_in + up * q_in + down * q_out.
struct CellCoefficients {
  double decay = 0.0;
  double up = 0.0;
  double down = 0.0;
};
CellCoefficients exponential_cell(double sigma, double speed, double dz);

/// Exact solution of v_z dg/dz + rho nu g = h for given inflow data
/// (inflow0 used where v_z > 0, inflowH where v_z < 0), with h linear
/// between z-nodes. Nodes with v_z = 0 solve rho nu g = h pointwise.
SlabField transport_sweep(const SlabField& h, double rho, const VelocityFunction& inflow0,
                          const VelocityFunction& inflowH, const CollisionOperator& op);

struct SlabOptions {
  enum class Method { krylov, source_iteration };
  Method method = Method::krylov;
  double tol = 1e-11;
  int max_iterations = 10000;
  int restart = 40;
  /// Bound on |int_0^H (h, 1) dz| relative to max(1, |h|).
  double compat_tol = 1e-10;
};

struct SlabSolveReport {
  SlabField solution;
  /// (v_z, g^2(H)/2) - (v_z, g^2(0)/2): the wall dissipation, >= 0.
  double boundary_defect = 0.0;
  /// rho int (L g, g) dz.
  double dirichlet_form = 0.0;
  int iterations = 0;
  /// |g + rho S K g - S h| / |S h| at exit.
  double residual = 0.0;
  std::vector<double> history;
  /// max_j |(g(z_j), 1)|; zero when the pointwise normalization holds.
  double max_pointwise_density = 0.0;
};

/// The linearized slab operator L_rho = v_z d/dz + rho L on [0, H] with
/// diffuse reflection at both walls.
///
/// The z-discretization is the box scheme: on every cell
///   v_z (g_{j+1} - g_j)/dz + rho L (g_j + g_{j+1})/2 = (h_j + h_{j+1})/2.
/// It is affine in rho and satisfies a discrete Green identity exactly
/// (with cell-averaged quadrature), so the resolvent identity and the
/// energy identities hold to solver precision. Diffuse reflection uses the
/// discrete normalization 1 / sum_{v_z>0} w v_z, so that wall mass flux
/// vanishes exactly on the grid.
class SlabSolver {
 public:
  SlabSolver(std::shared_ptr<const CollisionOperator> op, ZGrid zgrid, double rho);

  double rho() const noexcept { return rho_; }
  const ZGrid& zgrid() const noexcept { return zgrid_; }
  const CollisionOperator& op() const noexcept { return *op_; }
  const VelocityGrid& grid() const noexcept { return op_->grid(); }

  /// The diffuse-wall transport solve S: v_z g' + rho nu g = q with
  /// diffuse reflection, wall fluxes resolved exactly.
  Eigen::MatrixXd sweep_diffuse(const Eigen::MatrixXd& q) const;

  /// Solves L_rho g = h, normalized so that int_0^H (g, 1) dz = 0.
  SlabSolveReport solve(const SlabField& h, const SlabOptions& opts = {}) const;

  /// Box-scheme residual of L_rho g = h: one row per cell (nodes - 1 rows),
  /// plus the diffuse-reflection defect on the inflow rows at each wall.
  double max_residual(const SlabField& g, const SlabField& h) const;

  /// Mean density (1/H) int_0^H (g, 1) dz.
  double mean_density(const Eigen::MatrixXd& g) const;

  /// Diffuse-reflection re-emission values beta_g(0), beta_g(H).
  std::pair<double, double> wall_reemission(const Eigen::MatrixXd& g) const;

  /// int_0^H (A, B) dz with the cell-averaged rule of the box scheme.
  double cell_pair_integral(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;

  /// Wall term (v_z, g^2(H)/2) - (v_z, g^2(0)/2).
  double wall_energy(const Eigen::MatrixXd& g) const;

 private:
  std::shared_ptr<const CollisionOperator> op_;
  ZGrid zgrid_;
  double rho_;
  double wall_norm_ = 0.0;  // 1 / sum_{v_z > 0} w v_z
  Eigen::VectorXd decay_, gain_, decay_total_;
  Eigen::VectorXd vz_;
  double t0_ = 0.0, tH_ = 0.0;
};

/// Free-function form of SlabSolver::solve.
SlabSolveReport solve_diffuse(const SlabField& h, double rho, std::shared_ptr<const CollisionOperator> op,
                              const SlabOptions& opts = {});

/// Cross-validation oracle: assembles the box-scheme equations, the
/// diffuse-reflection rows and the normalization row into one sparse
/// system and solves it directly (sparse QR). Refuses more than 5e4 unknowns.
SlabField assemble_direct(const SlabField& h, double rho, const CollisionOperator& op);

inline constexpr Eigen::Index kDirectUnknownCap = 50000;

/// Fluid moments (a, b, c) of g(z_j) at each z-node.
std::vector<FluidMoments> moment_profiles(const SlabField& g, const VelocityGrid& grid);

/// Rescales a column to the thin slab [0, epsilon H]: same node values,
/// z-grid compressed by epsilon.
SlabField rescale_to_thin(const SlabField& g, double epsilon);

void to_json(nlohmann::json& j, const SlabSolveReport& report);
/// Writes (z, velocity-node index, value) rows.
void write_slab_csv(const std::string& path, const SlabField& g);

}  // namespace kinlub
