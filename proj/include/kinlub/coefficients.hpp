#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kinlub/slab.hpp"

namespace kinlub {

/// Everything a transport-coefficient evaluation needs besides rho.
struct SlabSetup {
  std::shared_ptr<const CollisionOperator> op;
  ZGrid zgrid;
  SlabOptions options;

  static SlabSetup make(const CollisionModel& model, int velocity_order, ZGrid zgrid,
                        SlabOptions options = {});
  const VelocityGrid& grid() const { return op->grid(); }
};

/// L_rho^{-1} v_x together with the two evaluations of A(rho) on it.
struct TransportSolution {
  double rho = 0.0;
  SlabField g;
  /// int (v_x, g) dz.
  double A = 0.0;
  /// rho int (L g, g) dz + wall term, the energy form of the same number.
  double A_energy = 0.0;
};

/// Solves L_rho g = v_x and evaluates A in both forms.
TransportSolution solve_transport(double rho, const SlabSetup& setup);

/// A(rho) = int_0^H (v_x, L_rho^{-1} v_x) dz.
double compute_A(double rho, const SlabSetup& setup);

/// A'(rho) = -int_0^H (L_rho^{-1} L L_rho^{-1} v_x, v_x) dz, with both
/// solves at a tolerance ten times tighter than setup.options.tol.
double compute_Aprime(double rho, const SlabSetup& setup);

/// The 2x2 matrix A_ij = int (v_i, L_rho^{-1} v_j) dz for i, j in {x, y}.
struct CrossCoefficients {
  double xx = 0.0, xy = 0.0, yx = 0.0, yy = 0.0;
};
CrossCoefficients cross_coefficients(double rho, const SlabSetup& setup);

/// max |(L_eps^{-1} - L_rho^{-1} - (rho - eps) L_eps^{-1} L L_rho^{-1}) v_x|
/// relative to max |L_rho^{-1} v_x|.
double resolvent_defect(double epsilon, double rho, const SlabSetup& setup);

/// Piecewise cubic Hermite interpolant whose slopes are limited so that the
/// interpolant is monotone on every interval where the data are
/// (Fritsch-Carlson). Slopes may be supplied or estimated from the data.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;
  MonotoneCubic(std::vector<double> x, std::vector<double> y, std::vector<double> slopes = {});

  double operator()(double t) const;
  double derivative(double t) const;
  /// int_{x_0}^{t} of the interpolant, exact.
  double integral(double t) const;
  const std::vector<double>& slopes() const noexcept { return d_; }

 private:
  std::size_t segment(double t) const;
  std::vector<double> x_, y_, d_, cumulative_;
};

/// Sampled A, A' and the Kirchhoff primitive G(rho) = int_{rho_m}^{rho} A.
class CoefficientTable {
 public:
  CoefficientTable() = default;
  /// Builds a table from samples; rho_m is the first sample. Throws
  /// ModelViolation if any A <= 0 and InvalidArgument on malformed input.
  CoefficientTable(std::vector<double> rho, std::vector<double> A, std::vector<double> Aprime);

  /// A table with A == value, A' == 0 on [rho_min, rho_max].
  static CoefficientTable constant(double value, double rho_min, double rho_max, int samples = 8);

  const std::vector<double>& rho_samples() const noexcept { return rho_; }
  const std::vector<double>& A_values() const noexcept { return A_; }
  const std::vector<double>& Aprime_values() const noexcept { return Aprime_; }
  const std::vector<double>& G_values() const noexcept { return G_; }
  double rho_m() const { return rho_.front(); }
  double rho_max() const { return rho_.back(); }

  /// Interpolated A; throws RangeError outside [rho_m, rho_max].
  double A(double rho) const;
  double G(double rho) const;
  /// Inverse of G by bracketed root finding, |G(result) - gamma| <= 1e-12 (1 + |gamma|).
  double G_inverse(double gamma) const;

  /// Largest relative mismatch between A' samples and central differences
  /// of A on interior samples.
  double max_derivative_mismatch() const;

  /// Free-form metadata carried into the JSON file.
  void set_metadata(const nlohmann::json& meta);
  nlohmann::json metadata() const;

  void save_csv(const std::string& path) const;
  void save_json(const std::string& path) const;
  static CoefficientTable load_csv(const std::string& path);
  static CoefficientTable load_json(const std::string& path);

 private:
  void check_range(double rho) const;
  std::vector<double> rho_, A_, Aprime_, G_;
  MonotoneCubic interp_;
  std::string meta_ = "{}";  // serialized JSON object
};

void to_json(nlohmann::json& j, const CoefficientTable& table);

/// Uniform samples on [rho_min, rho_max], A and A' by slab solves (spread
/// over `threads` workers).
CoefficientTable tabulate(double rho_min, double rho_max, int n_samples, const SlabSetup& setup,
                          int threads = 1);

}  // namespace kinlub
