#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinlub/hilbert.hpp"

namespace kinlub {

/// A distribution on the reduced thin domain, stored in the rescaled
/// coordinates x in [0, 1], z in [0, H]: values(i * nz + j, k) = r(x_i, z_j, v_k).
/// The thin-domain field is r(x, z / epsilon, v) on [0, 1] x [0, epsilon H].
struct ThinDomainField {
  std::vector<double> x;
  ZGrid zgrid;
  double epsilon = 1.0;
  Eigen::MatrixXd values;

  ThinDomainField() = default;
  ThinDomainField(std::vector<double> x_nodes, const ZGrid& z, double eps, Eigen::Index velocity_nodes);

  int nx() const noexcept { return static_cast<int>(x.size()); }
  int nz() const noexcept { return zgrid.nodes; }
  SlabField column(int i) const;
  void set_column(int i, const Eigen::MatrixXd& v);
  /// Trapezoid weights in x times trapezoid weights in z, one per row.
  Eigen::VectorXd cell_weights() const;
};

/// Norms over the rescaled domain [0, 1] x [0, H].
double rescaled_norm(const ThinDomainField& f, const VelocityGrid& grid);
double rescaled_nu_norm(const ThinDomainField& f, const CollisionOperator& op);
/// Norms over the thin domain [0, 1] x [0, epsilon H]: epsilon^{1/2} times the rescaled ones.
double thin_norm(const ThinDomainField& f, const VelocityGrid& grid);
double thin_nu_norm(const ThinDomainField& f, const CollisionOperator& op);

struct RemainderOptions {
  double gmres_tol = 1e-10;
  int restart = 60;
  int max_inner = 10000;
  int max_outer = 200;
  /// Picard stops when the rescaled nu-norm of r^k - r^{k-1} drops below this.
  double picard_tol = 1e-9;
  /// Bound on |P s| relative to max(1, |s|) at every (x, z) node.
  double orthogonality_tol = 1e-10;
  int threads = 1;
};

/// |r^perp| / epsilon, |P r|, |r - beta_r| on outgoing wall traces and |r| on
/// outgoing lateral traces, all in thin-domain norms.
struct RemainderDiagnostics {
  double A = 0.0, B = 0.0, C = 0.0, Sigma = 0.0;
};

struct LinearRemainderReport {
  int iterations = 0;
  std::vector<double> history;
  /// Fixed-point residual of the discrete scheme relative to max(1, |rhs|).
  double residual = 0.0;
};

/// The remainder equation in the reduced geometry omega = [0, 1]:
///
///   v_x d_x r + (1/epsilon) v_z d_z r + (rho/epsilon) L r = s + w
///
/// in rescaled coordinates, diffuse reflection on z = 0, H and lateral inflow
/// r = -epsilon^{1/2} g^2 on incoming velocities at x = 0, 1. The x-direction
/// is a first-order upwind finite-volume scheme on the expansion nodes (half
/// cells at the two ends, inflow entering as a boundary flux); each column is
/// integrated exactly in z with exponential cells. The resulting fixed point
/// in (K r, wall re-emission) is solved by restarted GMRES.
class RemainderProblem {
 public:
  /// Needs an expansion on an interval domain with g^2 built.
  RemainderProblem(const ExpansionField& expansion, double epsilon);

  double epsilon() const noexcept { return epsilon_; }
  int nx() const noexcept { return static_cast<int>(x_.size()); }
  const std::vector<double>& x() const noexcept { return x_; }
  const ZGrid& zgrid() const noexcept { return setup_.zgrid; }
  const CollisionOperator& op() const noexcept { return *setup_.op; }
  const VelocityGrid& grid() const noexcept { return setup_.grid(); }
  double rho(int i) const { return rho_[static_cast<std::size_t>(i)]; }

  ThinDomainField zero_field() const;
  /// w = eps^{1/2} t + eps^{1/2} Gamma(g1, g2) + 2 eps^{3/2} Gamma(g2, g2), t = -v_x d_x g2.
  const ThinDomainField& w() const noexcept { return w_; }
  /// g^1 and g^2 sampled on the remainder grid.
  const ThinDomainField& g1() const noexcept { return g1_; }
  const ThinDomainField& g2() const noexcept { return g2_; }
  /// Lateral inflow data (nz x nv, zero on outgoing velocities) at x = 0 and x = 1.
  const Eigen::MatrixXd& inflow_left() const noexcept { return inflow_left_; }
  const Eigen::MatrixXd& inflow_right() const noexcept { return inflow_right_; }
  /// |r|_{gamma_l,-} of the inflow data in the thin-domain norm.
  double inflow_norm() const;

  /// s(r) = Gamma(r, g1) + eps Gamma(r, g2) + 2 eps^{1/2} Gamma(r, r).
  ThinDomainField s(const ThinDomainField& r) const;

  /// Solves the linear problem with source s (+ w and inflow when with_data).
  /// Throws InvalidArgument if s is not orthogonal to ker L, ConvergenceError
  /// with the GMRES history if the inner solve stalls.
  ThinDomainField solve_linear(const ThinDomainField& s, bool with_data, const RemainderOptions& opts = {},
                               const ThinDomainField* guess = nullptr, LinearRemainderReport* report = nullptr) const;

  /// Fixed-point residual of the discrete scheme for r.
  double residual(const ThinDomainField& r, const ThinDomainField& s, bool with_data) const;
  /// max over x-nodes and both walls of |int v_z r M dv|.
  double max_wall_flux(const ThinDomainField& r) const;
  RemainderDiagnostics diagnostics(const ThinDomainField& r) const;
  /// Norm of M^{-1} f - rho = eps g1 + eps^2 g2 + eps^{3/2} r over the
  /// rescaled domain, i.e. the thin-domain norm per unit thickness.
  double deviation_norm(const ThinDomainField& r) const;
  /// The same in the thin-domain norm: epsilon^{1/2} deviation_norm(r).
  double thin_deviation_norm(const ThinDomainField& r) const;

 private:
  struct Cell {
    double decay, up, down;
  };
  // Transport with given collision part and wall re-emission.
  Eigen::MatrixXd sweep(const Eigen::MatrixXd& q, const Eigen::VectorXd& beta0, const Eigen::VectorXd& betaH,
                        bool with_inflow, int threads) const;
  std::pair<Eigen::VectorXd, Eigen::VectorXd> reemission(const Eigen::MatrixXd& r) const;
  Eigen::MatrixXd source_term(const ThinDomainField& s, bool with_data) const;
  Eigen::MatrixXd apply_fixed_point(const Eigen::MatrixXd& r, const Eigen::MatrixXd& base, int threads) const;
  void check_orthogonal(const ThinDomainField& s, double tol) const;

  SlabSetup setup_;
  double epsilon_;
  std::vector<double> x_, rho_, volume_;
  ThinDomainField w_, g1_, g2_;
  Eigen::MatrixXd inflow_left_, inflow_right_;
  std::vector<Cell> cells_;  // index i * nv + k
  double wall_norm_ = 0.0;
};

struct IterationReport {
  int iterations = 0;
  /// |q^k|_nu / |q^{k-1}|_nu for k >= 2, q^k = r^k - r^{k-1}.
  std::vector<double> contraction_estimates;
  /// |q^k|_nu (rescaled) for k >= 1.
  std::vector<double> update_norms;
  std::vector<int> inner_iterations;
  /// Diagnostics after every iterate.
  std::vector<RemainderDiagnostics> diagnostics_history;
  /// Largest contraction estimate while |q^k| is above the noise floor.
  double contraction = 0.0;
  double final_norm = 0.0;       // |r|_nu, rescaled
  double final_thin_norm = 0.0;  // |r|_nu, thin domain
  double residual = 0.0;
  double max_wall_flux = 0.0;
  RemainderDiagnostics diagnostics;
};

/// Picard iteration r^k = solution with source s(r^{k-1}) + w. Throws
/// DivergenceError when the contraction estimate reaches 1 twice in a row or
/// the outer cap is hit.
std::pair<ThinDomainField, IterationReport> picard_solve(const RemainderProblem& problem,
                                                         const RemainderOptions& opts = {});

struct StudyRow {
  double epsilon = 0.0;
  bool ok = false;
  std::string error;
  /// |f_eps - rho M| per unit thickness, and divided by epsilon.
  double deviation = 0.0;
  double ratio = 0.0;
  /// |f_eps - rho M| in the thin-domain norm, and divided by epsilon.
  double thin_deviation = 0.0;
  double thin_ratio = 0.0;
  /// Least-squares slope of log deviation against log epsilon over rows so far.
  double slope_so_far = 0.0;
  int iterations = 0;
  double contraction = 0.0;
  double r_norm = 0.0;       // |r|_nu, rescaled
  double r_thin_norm = 0.0;  // |r|_nu, thin domain
  double w_norm = 0.0;       // |w|, thin domain
  double inflow_norm = 0.0;  // |r|_{gamma_l,-}, thin domain
  RemainderDiagnostics diagnostics;
};

struct ConvergenceStudy {
  std::vector<StudyRow> rows;
  /// Slopes of log deviation and log thin_deviation against log epsilon.
  double slope = 0.0;
  double thin_slope = 0.0;
  /// (max - min) / max of the ratio column over successful rows.
  double ratio_variation = 0.0;
  /// max_eps |r_eps| / |r_eps0| - 1 with eps0 the largest epsilon (rescaled nu-norm).
  double r_growth = 0.0;
  /// (max - min) / max of |r_eps| (rescaled nu-norm).
  double r_variation = 0.0;
  /// Largest contraction over successful rows.
  double max_contraction = 0.0;
  bool all_ok = false;
};

/// Runs picard_solve for each epsilon (at least three, strictly decreasing).
/// Failures are recorded per row and the study continues.
ConvergenceStudy convergence_study(const ExpansionField& expansion, const std::vector<double>& epsilons,
                                   const RemainderOptions& opts = {});

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

void write_study_csv(const std::string& path, const ConvergenceStudy& study);
void to_json(nlohmann::json& j, const IterationReport& report);
void to_json(nlohmann::json& j, const ConvergenceStudy& study);

}  // namespace kinlub
