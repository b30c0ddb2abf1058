#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinlub/coefficients.hpp"
#include "kinlub/reynolds.hpp"

namespace kinlub {

/// L_rho^{-1} v_x and L_rho^{-1} v_y for one density, with A_xx and A_yy.
struct TransportPair {
  double rho = 0.0;
  SlabField gx, gy;
  double Axx = 0.0, Ayy = 0.0;
};

/// Base solves keyed by density rounded to a quantum. g^1 depends on the
/// planar position only through rho, so columns with equal (rounded) rho
/// share one solve. L_rho^{-1} v_y is the x <-> y reflection of
/// L_rho^{-1} v_x, so only one slab solve is made per entry.
class TransportCache {
 public:
  TransportCache(const SlabSetup& setup, double quantum = 1e-6);

  /// Solves every missing entry for the given densities (in parallel).
  void populate(const std::vector<double>& rhos, int threads = 1);
  /// The entry for rho; solves it if absent (not thread safe).
  std::shared_ptr<const TransportPair> get(double rho);
  /// Rounded density used as key and as the solve density.
  double key_density(double rho) const;
  std::size_t size() const noexcept { return entries_.size(); }
  const SlabSetup& setup() const noexcept { return setup_; }

 private:
  long long key(double rho) const;
  std::shared_ptr<const TransportPair> solve(double rho) const;
  SlabSetup setup_;
  double quantum_;
  std::map<long long, std::shared_ptr<const TransportPair>> entries_;
};

struct ExpansionOptions {
  /// Density quantum of the transport cache; 0 keys on the exact value.
  double rho_quantum = 1e-6;
  int threads = 1;
};

/// g^1 and g^2 on every node of a planar grid.
///
/// Gradients of rho come from the Kirchhoff variable, grad rho =
/// grad gamma / A(rho), and derivatives of g^1 are compact differences of
/// face values g^1_{i+1/2} built from (gamma_{i+1} - gamma_i)/h. With this
/// choice the mass moment of the g^2 source is exactly the 5-point Laplacian
/// of gamma, so the g^2 solvability condition holds to elliptic-solve
/// precision when rho solves the Reynolds problem.
struct ExpansionField {
  DensityField density;
  SlabSetup setup;
  /// Nodal gradient of gamma: central differences, one-sided on boundary nodes.
  Eigen::VectorXd dgamma_x, dgamma_y;
  /// grad rho = grad gamma / A(rho) at every inside node.
  Eigen::VectorXd drho_x, drho_y;
  /// Per-node solve density (rho rounded to the cache quantum).
  Eigen::VectorXd column_rho;
  /// Base solves shared between nodes (null outside the domain).
  std::vector<std::shared_ptr<const TransportPair>> columns;
  std::vector<SlabField> g1, g2;
  /// Box-scheme residuals of the order-1 and order-2 column equations,
  /// relative to max(1, max |source|) (interior nodes; NaN elsewhere).
  Eigen::VectorXd residual1, residual2;
  /// int_0^H (g^2 source, 1) dz on interior nodes.
  Eigen::VectorXd compatibility;
  bool has_g2 = false;

  const PlanarDomain& domain() const { return density.rho.domain; }
};

/// g^1 = -d_x rho L_rho^{-1} v_x - d_y rho L_rho^{-1} v_y on every inside node.
/// Slab failures propagate as the same error type with the node appended.
ExpansionField build_g1(const DensityField& density, TransportCache& cache, const ExpansionOptions& opts = {});
/// Same, with a fresh cache using opts.rho_quantum.
ExpansionField build_g1(const DensityField& density, const SlabSetup& setup, const ExpansionOptions& opts = {});

/// g^2 = L_rho^{-1}(2 Gamma(g^1, g^1) - v_x d_x g^1 - v_y d_y g^1) on interior
/// nodes, extrapolated linearly to boundary nodes. A node whose source
/// fails the solvability condition raises SolvabilityError carrying the
/// defect, which is the discrete Reynolds divergence at that node.
void build_g2(ExpansionField& field, const ExpansionOptions& opts = {});

/// d g^1/dx and d g^1/dy at an interior node by compact face differences.
std::pair<SlabField, SlabField> g1_derivatives(const ExpansionField& field, int i, int j);

/// div int_0^H (v, g^1) dz on interior nodes by compact differences of the
/// face fluxes (NaN elsewhere). Equals minus the 5-point Laplacian of gamma.
PlanarField mass_flux_divergence(const ExpansionField& field);

/// Incoming part of g^1 and g^2 at a lateral boundary node.
struct LateralTrace {
  int i = 0, j = 0;
  /// Outward unit normal in the (x, y) plane.
  Eigen::Vector2d normal = Eigen::Vector2d::Zero();
  /// Boundary length represented by the node.
  double length = 0.0;
  /// g restricted to v . n < 0 (zero on the other nodes).
  SlabField g1, g2;
};

std::vector<LateralTrace> boundary_traces(const ExpansionField& field);

/// |g|_{gamma_l,-} = (sum_nodes length int_0^H sum_{v.n<0} w |v.n| g^2 dz)^{1/2},
/// for order 1 or 2.
double trace_norm(const std::vector<LateralTrace>& traces, int order, const VelocityGrid& grid);

/// Largest residual over the interior nodes (order 1 or 2).
double max_expansion_residual(const ExpansionField& field, int order);

/// (x, y, rho, drho_x, drho_y, |g1|, |g2|, residual1, residual2, compatibility) per inside node.
void write_expansion_csv(const std::string& path, const ExpansionField& field);

/// Binary dump of g^order: a header of four little-endian int64 values
/// (nx, ny, z-nodes, velocity nodes) followed by nx * ny * nz * nv doubles in
/// row-major (i, j, z, v) order, zero outside the domain.
void write_expansion_binary(const std::string& path, const ExpansionField& field, int order);

void to_json(nlohmann::json& j, const ExpansionField& field);

}  // namespace kinlub
