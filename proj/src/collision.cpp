#include "kinlub/collision.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kinlub/errors.hpp"

namespace kinlub {

namespace {

Eigen::VectorXd frequencies(const CollisionModel& model, const VelocityGrid& grid) {
  Eigen::VectorXd nu(static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index k = 0; k < nu.size(); ++k) {
    nu(k) = collision_frequency(grid.nodes().row(k).transpose(), model);
  }
  return nu;
}

void check_model(const CollisionModel& model) {
  if (!(model.nu_const > 0.0) || !(model.nu_slope > 0.0)) {
    throw InvalidArgument("collision frequency parameters must be positive");
  }
  if (!(model.k0 > 0.0)) throw InvalidArgument("k0 must be positive");
}

}  // namespace

double collision_frequency(const Eigen::Vector3d& v, const CollisionModel& model) {
  return model.nu_const + model.nu_slope * v.norm();
}

CollisionOperator::CollisionOperator(CollisionModel model, const VelocityGrid& grid)
    : model_(std::move(model)), grid_(grid) {
  check_model(model_);
  if (grid_.order() < 3) throw InvalidArgument("collision operator needs grid order >= 3");
  nu_ = frequencies(model_, grid_);
  rate_ = nu_ / model_.k0;

  const auto& basis = grid_.kernel_basis();
  weighted_basis_ = grid_.weights().asDiagonal() * basis;
  weighted_basis_nu_ = (grid_.weights().array() * nu_.array()).matrix().asDiagonal() * basis;
  const Eigen::Matrix<double, kKernelDim, kKernelDim> gram_nu = basis.transpose() * weighted_basis_nu_;
  gram_nu_inv_ = gram_nu.inverse();

  if (model_.kind == CollisionKind::plugin) {
    if (!model_.plugin_kernel) throw InvalidArgument("plugin collision model without a kernel matrix");
    validate_plugin_kernel(*model_.plugin_kernel, model_, grid_);
    plugin_operator_ = (*model_.plugin_kernel) * grid_.weights().asDiagonal();
  }
}

Eigen::MatrixXd CollisionOperator::project_nu_rows(const Eigen::MatrixXd& rows) const {
  // One step of iterative refinement keeps L phi at roundoff of phi itself.
  const auto& basis = grid_.kernel_basis();
  Eigen::Matrix<double, Eigen::Dynamic, kKernelDim> coeff = (rows * weighted_basis_nu_) * gram_nu_inv_;
  Eigen::MatrixXd proj = coeff * basis.transpose();
  coeff = ((rows - proj) * weighted_basis_nu_) * gram_nu_inv_;
  proj.noalias() += coeff * basis.transpose();
  return proj;
}

Eigen::MatrixXd CollisionOperator::project_rows(const Eigen::MatrixXd& rows) const {
  return (rows * weighted_basis_) * grid_.kernel_gram_inverse() * grid_.kernel_basis().transpose();
}

Eigen::MatrixXd CollisionOperator::apply_K_rows(const Eigen::MatrixXd& rows) const {
  if (model_.kind == CollisionKind::plugin) return rows * plugin_operator_.transpose();
  return -(project_nu_rows(rows) * rate_.asDiagonal());
}

Eigen::MatrixXd CollisionOperator::apply_L_rows(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out = apply_K_rows(rows);
  out += rows * rate_.asDiagonal();
  return out;
}

VelocityFunction CollisionOperator::apply_L(const VelocityFunction& g) const {
  if (g.size() != static_cast<Eigen::Index>(grid_.size())) {
    throw InvalidArgument("apply_L: function length does not match grid");
  }
  return apply_L_rows(g.transpose()).transpose();
}

Eigen::MatrixXd CollisionOperator::apply_Gamma_rows(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g) const {
  if (f.rows() != g.rows() || f.cols() != g.cols()) throw InvalidArgument("apply_Gamma: shape mismatch");
  const Eigen::MatrixXd product = (f.array() * g.array()).matrix() * (0.5 * rate_).asDiagonal();
  return product - project_rows(product);
}

VelocityFunction CollisionOperator::apply_Gamma(const VelocityFunction& f, const VelocityFunction& g) const {
  if (f.size() != static_cast<Eigen::Index>(grid_.size()) || g.size() != f.size()) {
    throw InvalidArgument("apply_Gamma: function length does not match grid");
  }
  return apply_Gamma_rows(f.transpose(), g.transpose()).transpose();
}

Eigen::MatrixXd CollisionOperator::dense_L() const {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  // Row i of apply_L_rows(I) is L e_i, so the operator matrix is its transpose.
  return apply_L_rows(Eigen::MatrixXd::Identity(n, n)).transpose();
}

double CollisionOperator::spectral_gap() const {
  const Eigen::VectorXd sw = grid_.weights().array().sqrt();
  const Eigen::MatrixXd sym_raw = sw.asDiagonal() * dense_L() * sw.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd sym = 0.5 * (sym_raw + sym_raw.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  // The first kKernelDim eigenvalues belong to the collision invariants.
  return ev(kKernelDim);
}

double CollisionOperator::gamma_bound() const {
  return 0.5 / model_.k0 / std::sqrt(grid_.weights().minCoeff());
}

double CollisionOperator::nu_norm_squared(const VelocityFunction& g) const {
  return (grid_.weights().array() * nu_.array() * g.array().square()).sum();
}

VelocityFunction apply_L(const VelocityFunction& g, const CollisionModel& model, const VelocityGrid& grid) {
  return CollisionOperator(model, grid).apply_L(g);
}

VelocityFunction apply_Gamma(const VelocityFunction& f, const VelocityFunction& g,
                             const CollisionModel& model, const VelocityGrid& grid) {
  return CollisionOperator(model, grid).apply_Gamma(f, g);
}

Eigen::MatrixXd bgk_kernel_matrix(const CollisionModel& model, const VelocityGrid& grid) {
  check_model(model);
  const Eigen::VectorXd nu = frequencies(model, grid);
  const auto& basis = grid.kernel_basis();
  const Eigen::Matrix<double, Eigen::Dynamic, kKernelDim> wb =
      (grid.weights().array() * nu.array()).matrix().asDiagonal() * basis;
  const Eigen::Matrix<double, kKernelDim, kKernelDim> gram_inv = (basis.transpose() * wb).inverse();
  const Eigen::Matrix<double, Eigen::Dynamic, kKernelDim> nb = nu.asDiagonal() * basis;
  Eigen::MatrixXd k = -(nb * gram_inv * nb.transpose()) / model.k0;
  return 0.5 * (k + k.transpose());
}

void validate_plugin_kernel(const Eigen::MatrixXd& kernel, const CollisionModel& base,
                            const VelocityGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (kernel.rows() != n || kernel.cols() != n) {
    throw InvalidArgument("plugin kernel must be " + std::to_string(n) + " x " + std::to_string(n));
  }
  if (!kernel.allFinite()) throw InvalidArgument("plugin kernel has non-finite entries");
  const double scale = std::max(kernel.cwiseAbs().maxCoeff(), 1e-300);
  if ((kernel - kernel.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ModelViolation("plugin kernel is not symmetric");
  }
  const Eigen::VectorXd rate = frequencies(base, grid) / base.k0;
  const auto& basis = grid.kernel_basis();
  const Eigen::MatrixXd l_phi =
      rate.asDiagonal() * basis + kernel * grid.weights().asDiagonal() * basis;
  const double phi_scale = (rate.asDiagonal() * basis).cwiseAbs().maxCoeff();
  if (l_phi.cwiseAbs().maxCoeff() > 1e-8 * phi_scale) {
    throw ModelViolation("plugin kernel does not annihilate span{1, v, |v|^2}");
  }
}

CollisionModel load_plugin_model(const std::string& path, const CollisionModel& base,
                                 const VelocityGrid& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd k(n, n);
  const bool binary = path.size() > 4 && path.substr(path.size() - 4) == ".bin";
  if (binary) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open plugin kernel " + path);
    std::vector<double> buf(static_cast<std::size_t>(n * n));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(double))) {
      throw InvalidArgument("plugin kernel file has the wrong size");
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) k(i, j) = buf[static_cast<std::size_t>(i * n + j)];
  } else {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open plugin kernel " + path);
    std::string line;
    Eigen::Index row = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      if (row >= n) throw InvalidArgument("plugin kernel CSV has too many rows");
      std::stringstream ss(line);
      std::string cell;
      Eigen::Index col = 0;
      while (std::getline(ss, cell, ',')) {
        if (col >= n) throw InvalidArgument("plugin kernel CSV row too long");
        k(row, col++) = std::stod(cell);
      }
      if (col != n) throw InvalidArgument("plugin kernel CSV row too short");
      ++row;
    }
    if (row != n) throw InvalidArgument("plugin kernel CSV has too few rows");
  }
  validate_plugin_kernel(k, base, grid);
  CollisionModel model = base;
  model.kind = CollisionKind::plugin;
  model.plugin_kernel = std::make_shared<const Eigen::MatrixXd>(std::move(k));
  return model;
}

}  // namespace kinlub
