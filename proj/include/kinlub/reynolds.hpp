#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinlub/coefficients.hpp"

namespace kinlub {

enum class DomainKind { rectangle, graph_bounded, interval };

/// A staircase Cartesian grid over a planar region omega.
///
/// Nodes sit at (x0 + i hx, ymin + j hy), stored with index i * ny + j.
/// A node is inside when it lies in the closed region; it is interior when
/// its four neighbours are inside too, and boundary otherwise. The
/// interval kind is the one-dimensional strip [x0, x1] (ny == 1) used for
/// y-independent problems; there only the end nodes are boundary nodes.
class PlanarDomain {
 public:
  enum class Node : unsigned char { outside, interior, boundary };

  PlanarDomain() = default;

  static PlanarDomain rectangle(double x0, double x1, double y0, double y1, int nx, int ny);
  /// Region between y_lo(x) <= y <= y_hi(x) for x in [x0, x1], meshed with
  /// nx columns and spacing hy = hx.
  static PlanarDomain graph_bounded(double x0, double x1, const std::function<double(double)>& y_lo,
                                    const std::function<double(double)>& y_hi, int nx);
  static PlanarDomain interval(double x0, double x1, int nx);

  DomainKind kind() const noexcept { return kind_; }
  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double hx() const noexcept { return hx_; }
  double hy() const noexcept { return hy_; }
  double x(int i) const noexcept { return x0_ + i * hx_; }
  double y(int j) const noexcept { return y0_ + j * hy_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(nx_) * ny_; }
  Eigen::Index index(int i, int j) const noexcept { return static_cast<Eigen::Index>(i) * ny_ + j; }
  Node type(int i, int j) const noexcept { return types_[static_cast<std::size_t>(index(i, j))]; }
  bool inside(int i, int j) const noexcept { return type(i, j) != Node::outside; }
  bool one_dimensional() const noexcept { return kind_ == DomainKind::interval; }

  int interior_count() const;
  int boundary_count() const;
  /// Largest |y''| of the bounding curves by second differences (0 for rectangles).
  double max_curvature() const noexcept { return curvature_; }

 private:
  void classify();
  DomainKind kind_ = DomainKind::rectangle;
  int nx_ = 0, ny_ = 0;
  double x0_ = 0, y0_ = 0, hx_ = 0, hy_ = 0;
  double curvature_ = 0;
  std::vector<Node> types_;
  std::vector<double> lo_, hi_;
};

/// Values on the nodes of a domain; NaN outside.
struct PlanarField {
  PlanarDomain domain;
  Eigen::VectorXd values;

  double at(int i, int j) const { return values(domain.index(i, j)); }
  /// min / max over boundary nodes and over all inside nodes.
  double boundary_min() const;
  double boundary_max() const;
  double inside_min() const;
  double inside_max() const;
};

/// Samples f on the boundary nodes (NaN elsewhere).
PlanarField boundary_data(const PlanarDomain& domain, const std::function<double(double, double)>& f);

struct EllipticOptions {
  double tol = 1e-13;
  int max_iterations = 100000;
  /// Start vector on inside nodes; defaults to the mean boundary value.
  std::optional<Eigen::VectorXd> initial_guess;
};

/// Solves div(a grad u) = f on interior nodes with u = data on boundary
/// nodes, by conjugate gradients with diagonal preconditioning on the
/// 5-point conservative stencil. face_x(i, j) is the coefficient on the
/// face between nodes (i, j) and (i + 1, j); face_y likewise in y.
PlanarField solve_dirichlet(const PlanarField& data, const std::function<double(int, int)>& face_x,
                            const std::function<double(int, int)>& face_y,
                            const std::function<double(int, int)>& source, const EllipticOptions& opts = {});

/// Discrete harmonic extension of the boundary data.
PlanarField harmonic_solve(const PlanarField& data, const EllipticOptions& opts = {});

/// Density solving div(A(rho) grad rho) = 0 with rho = rho0 on the boundary.
struct DensityField {
  PlanarField rho;
  /// Kirchhoff variable gamma = G(rho).
  PlanarField gamma;
  double rho0_min = 0.0, rho0_max = 0.0;
};

/// gamma = G(rho0) on the boundary, harmonic inside, rho = G^{-1}(gamma).
/// Throws RangeError if rho0 leaves (rho_m, rho_max] of the table.
DensityField solve_reynolds(const PlanarField& rho0, const CoefficientTable& table,
                            const EllipticOptions& opts = {});

/// y-independent solve on the interval [0, 1] with end values rho_left, rho_right.
DensityField solve_reynolds_1d(int nx, double rho_left, double rho_right, const CoefficientTable& table);

/// Max over interior nodes of the conservative divergence of A(rho) grad rho,
/// with A evaluated at face midpoints (rho_i + rho_{i+1}) / 2.
double reynolds_residual(const PlanarField& rho, const CoefficientTable& table);

/// Max over interior nodes of |D gamma - A(rho) D rho| with central differences D.
double transform_consistency(const DensityField& field, const CoefficientTable& table);

/// Solves d_x(H^3 d_x p) + d_y(H^3 d_y p) = 6 U d_x H with p = data on the boundary.
PlanarField classical_reynolds_reference(const PlanarField& pressure_data,
                                         const std::function<double(double, double)>& film_height, double U,
                                         const EllipticOptions& opts = {});

/// (x, y, value) rows for inside nodes.
void write_field_csv(const std::string& path, const PlanarField& field, const std::string& name = "value");
/// Gridded matrix (one row per y, one column per x, NaN outside) for plotting.
void write_grid_csv(const std::string& path, const PlanarField& field);
void to_json(nlohmann::json& j, const DensityField& field);

}  // namespace kinlub
