#include "kinlub/slab.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseQR>
#include <Eigen/OrderingMethods>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>

#include "kinlub/errors.hpp"
#include "kinlub/krylov.hpp"

namespace kinlub {

ZGrid::ZGrid(double h, int n) : height(h), nodes(n) {
  if (!(h > 0.0)) throw InvalidArgument("slab height must be positive");
  if (n < 2) throw InvalidArgument("z-grid needs at least 2 nodes");
}

Eigen::VectorXd ZGrid::trapezoid() const {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(nodes, dz());
  w(0) *= 0.5;
  w(nodes - 1) *= 0.5;
  return w;
}

SlabField::SlabField(const ZGrid& z, Eigen::Index velocity_nodes)
    : zgrid(z), values(Eigen::MatrixXd::Zero(z.nodes, velocity_nodes)) {}

SlabField::SlabField(const ZGrid& z, Eigen::MatrixXd v) : zgrid(z), values(std::move(v)) {
  if (values.rows() != z.nodes) throw InvalidArgument("slab field rows must match z-grid nodes");
}

SlabField SlabField::uniform(const ZGrid& z, const VelocityFunction& f) {
  return SlabField(z, Eigen::MatrixXd(Eigen::VectorXd::Ones(z.nodes) * f.transpose()));
}

Eigen::VectorXd z_profile(const SlabField& g, const VelocityFunction& f, const VelocityGrid& grid) {
  return g.values * (grid.weights().array() * f.array()).matrix();
}

double z_integral(const SlabField& g, const VelocityFunction& f, const VelocityGrid& grid) {
  return g.zgrid.trapezoid().dot(z_profile(g, f, grid));
}

double slab_norm(const SlabField& g, const VelocityGrid& grid) {
  const Eigen::VectorXd per_z = g.values.array().square().matrix() * grid.weights();
  return std::sqrt(g.zgrid.trapezoid().dot(per_z));
}

double slab_nu_norm(const SlabField& g, const CollisionOperator& op) {
  const Eigen::VectorXd wn = op.grid().weights().array() * op.nu().array();
  const Eigen::VectorXd per_z = g.values.array().square().matrix() * wn;
  return std::sqrt(g.zgrid.trapezoid().dot(per_z));
}

std::pair<double, double> wall_mass_flux(const SlabField& g, const VelocityGrid& grid) {
  const Eigen::VectorXd wv = grid.weights().array() * grid.vz().array();
  return {g.values.row(0).dot(wv), g.values.row(g.values.rows() - 1).dot(wv)};
}

CellCoefficients exponential_cell(double sigma, double speed, double dz) {
  const double tau = sigma * dz / speed;
  CellCoefficients c;
  c.decay = std::exp(-tau);
  const double one_minus = -std::expm1(-tau);
  // phi = (1 - e^{-tau}(1 + tau)) / tau, by series where cancellation bites.
  const double phi = tau < 1e-4 ? tau * (0.5 - tau * (1.0 / 3.0 - tau / 8.0))
                                : (one_minus - tau * c.decay) / tau;
  c.up = phi / sigma;
  c.down = (one_minus - phi) / sigma;
  return c;
}

SlabField transport_sweep(const SlabField& h, double rho, const VelocityFunction& inflow0,
                          const VelocityFunction& inflowH, const CollisionOperator& op) {
  if (!(rho > 0.0)) throw InvalidArgument("transport_sweep: rho must be positive");
  const auto& grid = op.grid();
  const auto nv = static_cast<Eigen::Index>(grid.size());
  if (h.values.cols() != nv || inflow0.size() != nv || inflowH.size() != nv) {
    throw InvalidArgument("transport_sweep: size mismatch with velocity grid");
  }
  const int n = h.zgrid.nodes;
  const double dz = h.zgrid.dz();
  SlabField g(h.zgrid, nv);
  for (Eigen::Index k = 0; k < nv; ++k) {
    const double vz = grid.nodes()(k, 2);
    const double sigma = rho * op.rate()(k);
    auto col = g.values.col(k);
    const auto src = h.values.col(k);
    if (vz == 0.0) {
      col = src / sigma;
      continue;
    }
    const CellCoefficients c = exponential_cell(sigma, std::abs(vz), dz);
    if (vz > 0.0) {
      col(0) = inflow0(k);
      for (int j = 0; j + 1 < n; ++j) col(j + 1) = c.decay * col(j) + c.up * src(j) + c.down * src(j + 1);
    } else {
      col(n - 1) = inflowH(k);
      for (int j = n - 1; j > 0; --j) col(j - 1) = c.decay * col(j) + c.up * src(j) + c.down * src(j - 1);
    }
  }
  return g;
}

SlabSolver::SlabSolver(std::shared_ptr<const CollisionOperator> op, ZGrid zgrid, double rho)
    : op_(std::move(op)), zgrid_(zgrid), rho_(rho) {
  if (!op_) throw InvalidArgument("SlabSolver: null collision operator");
  if (!(rho > 0.0)) throw InvalidArgument("slab solve needs rho > 0");
  const auto& g = grid();
  const auto nv = static_cast<Eigen::Index>(g.size());
  vz_ = g.vz();
  decay_.resize(nv);
  gain_.resize(nv);
  decay_total_.resize(nv);
  const double dz = zgrid_.dz();
  double outflux_unit = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k) {
    const double speed = std::abs(vz_(k));
    const double half = 0.5 * rho_ * op_->rate()(k) * dz;
    decay_(k) = (speed - half) / (speed + half);
    gain_(k) = 0.5 * dz / (speed + half);
    decay_total_(k) = std::pow(decay_(k), zgrid_.cells());
    if (vz_(k) > 0.0) outflux_unit += g.weights()(k) * vz_(k);
  }
  wall_norm_ = 1.0 / outflux_unit;
  for (Eigen::Index k = 0; k < nv; ++k) {
    if (vz_(k) < 0.0) t0_ += g.weights()(k) * -vz_(k) * decay_total_(k);
    if (vz_(k) > 0.0) tH_ += g.weights()(k) * vz_(k) * decay_total_(k);
  }
  t0_ *= wall_norm_;
  tH_ *= wall_norm_;
}

std::pair<double, double> SlabSolver::wall_reemission(const Eigen::MatrixXd& g) const {
  const auto& w = grid().weights();
  const Eigen::Index last = g.rows() - 1;
  double b0 = 0.0, bH = 0.0;
  for (Eigen::Index k = 0; k < g.cols(); ++k) {
    if (vz_(k) < 0.0) b0 += w(k) * -vz_(k) * g(0, k);
    if (vz_(k) > 0.0) bH += w(k) * vz_(k) * g(last, k);
  }
  return {wall_norm_ * b0, wall_norm_ * bH};
}

Eigen::MatrixXd SlabSolver::sweep_diffuse(const Eigen::MatrixXd& q) const {
  const int n = zgrid_.nodes;
  const auto nv = q.cols();
  Eigen::MatrixXd g(n, nv);
  for (Eigen::Index k = 0; k < nv; ++k) {
    auto col = g.col(k);
    const auto src = q.col(k);
    const double vz = vz_(k);
    if (vz == 0.0) {
      col = src / (rho_ * op_->rate()(k));
      continue;
    }
    const double r = decay_(k), a = gain_(k);
    if (vz > 0.0) {
      col(0) = 0.0;
      for (int j = 0; j + 1 < n; ++j) col(j + 1) = r * col(j) + a * (src(j) + src(j + 1));
    } else {
      col(n - 1) = 0.0;
      for (int j = n - 1; j > 0; --j) col(j - 1) = r * col(j) + a * (src(j) + src(j - 1));
    }
  }
  // Diffuse closure: beta0 = F0 + t0 betaH, betaH = FH + tH beta0.
  const auto [f0, fH] = wall_reemission(g);
  const double beta0 = (f0 + t0_ * fH) / (1.0 - t0_ * tH_);
  const double betaH = fH + tH_ * beta0;
  for (Eigen::Index k = 0; k < nv; ++k) {
    const double vz = vz_(k);
    if (vz == 0.0) continue;
    auto col = g.col(k);
    const double r = decay_(k);
    if (vz > 0.0) {
      double p = beta0;
      for (int j = 0; j < n; ++j, p *= r) col(j) += p;
    } else {
      double p = betaH;
      for (int j = n - 1; j >= 0; --j, p *= r) col(j) += p;
    }
  }
  return g;
}

double SlabSolver::mean_density(const Eigen::MatrixXd& g) const {
  return zgrid_.trapezoid().dot(g * grid().weights()) / zgrid_.height;
}

double SlabSolver::cell_pair_integral(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
  const int cells = zgrid_.cells();
  const Eigen::MatrixXd abar = 0.5 * (a.topRows(cells) + a.bottomRows(cells));
  const Eigen::MatrixXd bbar = 0.5 * (b.topRows(cells) + b.bottomRows(cells));
  return zgrid_.dz() * ((abar.array() * bbar.array()).matrix() * grid().weights()).sum();
}

double SlabSolver::wall_energy(const Eigen::MatrixXd& g) const {
  const Eigen::VectorXd wv = grid().weights().array() * vz_.array();
  const Eigen::Index last = g.rows() - 1;
  return 0.5 * (g.row(last).array().square().matrix().dot(wv) - g.row(0).array().square().matrix().dot(wv));
}

double SlabSolver::max_residual(const SlabField& g, const SlabField& h) const {
  const int cells = zgrid_.cells();
  const double dz = zgrid_.dz();
  const Eigen::MatrixXd lg = op_->apply_L_rows(g.values);
  const Eigen::MatrixXd cell =
      ((g.values.bottomRows(cells) - g.values.topRows(cells)) / dz) * vz_.asDiagonal() +
      0.5 * rho_ * (lg.topRows(cells) + lg.bottomRows(cells)) -
      0.5 * (h.values.topRows(cells) + h.values.bottomRows(cells));
  double res = 0.0;
  const auto [b0, bH] = wall_reemission(g.values);
  for (Eigen::Index k = 0; k < g.values.cols(); ++k) {
    if (vz_(k) == 0.0) {
      res = std::max(res, (rho_ * lg.col(k) - h.values.col(k)).cwiseAbs().maxCoeff());
      continue;
    }
    res = std::max(res, cell.col(k).cwiseAbs().maxCoeff());
    if (vz_(k) > 0.0) res = std::max(res, std::abs(g.values(0, k) - b0));
    if (vz_(k) < 0.0) res = std::max(res, std::abs(g.values(cells, k) - bH));
  }
  return res;
}

SlabSolveReport SlabSolver::solve(const SlabField& h, const SlabOptions& opts) const {
  const auto nv = static_cast<Eigen::Index>(grid().size());
  if (h.values.rows() != zgrid_.nodes || h.values.cols() != nv) {
    throw InvalidArgument("solve_diffuse: right-hand side shape does not match grids");
  }
  const double hnorm = slab_norm(h, grid());
  const double compat = zgrid_.trapezoid().dot(h.values * grid().weights());
  if (std::abs(compat) > opts.compat_tol * std::max(1.0, hnorm)) {
    throw SolvabilityError("solve_diffuse: int_0^H (h, 1) dz = " + std::to_string(compat) +
                               " violates the compatibility condition",
                           compat);
  }

  SlabSolveReport report;
  report.solution = SlabField(zgrid_, nv);
  if (hnorm == 0.0) return report;

  const Eigen::Index n = zgrid_.nodes * nv;
  const Eigen::MatrixXd sh = sweep_diffuse(h.values);
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(sh.data(), n);
  auto fredholm = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::Map<const Eigen::MatrixXd> g(x.data(), zgrid_.nodes, nv);
    Eigen::MatrixXd out = g + rho_ * sweep_diffuse(op_->apply_K_rows(g));
    return Eigen::Map<const Eigen::VectorXd>(out.data(), n);
  };

  Eigen::VectorXd x;
  if (opts.method == SlabOptions::Method::krylov) {
    auto bordered = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
      const Eigen::Map<const Eigen::MatrixXd> g(v.data(), zgrid_.nodes, nv);
      return fredholm(v).array() + mean_density(g);
    };
    GmresOptions gopt;
    gopt.rel_tol = opts.tol;
    gopt.restart = opts.restart;
    gopt.max_iterations = opts.max_iterations;
    GmresResult res = gmres(bordered, rhs, Eigen::VectorXd::Zero(n), gopt);
    report.iterations = res.iterations;
    report.history = std::move(res.history);
    if (!res.converged) {
      throw ConvergenceError("solve_diffuse: Krylov iteration did not converge", report.history);
    }
    x = std::move(res.x);
  } else {
    x = rhs;
    for (int it = 1;; ++it) {
      const Eigen::Map<const Eigen::MatrixXd> g(x.data(), zgrid_.nodes, nv);
      Eigen::MatrixXd next = sh - rho_ * sweep_diffuse(op_->apply_K_rows(g));
      next.array() -= mean_density(next);
      const Eigen::VectorXd xn = Eigen::Map<const Eigen::VectorXd>(next.data(), n);
      const double update = (xn - x).norm() / std::max(xn.norm(), 1e-300);
      report.history.push_back(update);
      x = xn;
      report.iterations = it;
      if (update < opts.tol) break;
      if (it >= opts.max_iterations) {
        throw ConvergenceError("solve_diffuse: source iteration did not converge", report.history);
      }
    }
  }

  Eigen::MatrixXd g = Eigen::Map<const Eigen::MatrixXd>(x.data(), zgrid_.nodes, nv);
  g.array() -= mean_density(g);
  report.residual = (fredholm(Eigen::Map<const Eigen::VectorXd>(g.data(), n)) - rhs).norm() /
                    std::max(rhs.norm(), 1e-300);
  report.solution = SlabField(zgrid_, std::move(g));
  const auto& sol = report.solution.values;
  report.boundary_defect = wall_energy(sol);
  report.dirichlet_form = rho_ * cell_pair_integral(op_->apply_L_rows(sol), sol);
  report.max_pointwise_density = (sol * grid().weights()).cwiseAbs().maxCoeff();
  return report;
}

SlabSolveReport solve_diffuse(const SlabField& h, double rho, std::shared_ptr<const CollisionOperator> op,
                              const SlabOptions& opts) {
  const ZGrid z = h.zgrid;
  return SlabSolver(std::move(op), z, rho).solve(h, opts);
}

SlabField assemble_direct(const SlabField& h, double rho, const CollisionOperator& op) {
  if (!(rho > 0.0)) throw InvalidArgument("assemble_direct: rho must be positive");
  const auto& grid = op.grid();
  const auto nv = static_cast<Eigen::Index>(grid.size());
  const ZGrid& zg = h.zgrid;
  const int nz = zg.nodes;
  const Eigen::Index n = nz * nv;
  if (n > kDirectUnknownCap) {
    throw InvalidArgument("assemble_direct: " + std::to_string(n) + " unknowns exceeds the cap");
  }
  if (h.values.cols() != nv) throw InvalidArgument("assemble_direct: velocity size mismatch");

  const Eigen::MatrixXd lmat = op.dense_L();
  const Eigen::VectorXd& w = grid.weights();
  const Eigen::VectorXd vz = grid.vz();
  const double dz = zg.dz();
  double outflux_unit = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k)
    if (vz(k) > 0.0) outflux_unit += w(k) * vz(k);
  const double cw = 1.0 / outflux_unit;

  auto id = [nz](int j, Eigen::Index k) { return k * nz + j; };
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  Eigen::Index row = 0;

  auto add_collision = [&](Eigen::Index r, int j, Eigen::Index k, double scale) {
    for (Eigen::Index m = 0; m < nv; ++m) {
      const double v = lmat(k, m);
      if (v != 0.0) trip.emplace_back(r, id(j, m), scale * v);
    }
  };

  for (Eigen::Index k = 0; k < nv; ++k) {
    if (vz(k) == 0.0) {
      for (int j = 0; j < nz; ++j, ++row) {
        add_collision(row, j, k, rho);
        rhs(row) = h.values(j, k);
      }
      continue;
    }
    // Diffuse reflection row on the inflow wall.
    const int wall = vz(k) > 0.0 ? 0 : nz - 1;
    trip.emplace_back(row, id(wall, k), 1.0);
    for (Eigen::Index m = 0; m < nv; ++m) {
      const bool outgoing = vz(k) > 0.0 ? vz(m) < 0.0 : vz(m) > 0.0;
      if (outgoing) trip.emplace_back(row, id(wall, m), -cw * w(m) * std::abs(vz(m)));
    }
    ++row;
    for (int j = 0; j + 1 < nz; ++j, ++row) {
      trip.emplace_back(row, id(j + 1, k), vz(k) / dz);
      trip.emplace_back(row, id(j, k), -vz(k) / dz);
      add_collision(row, j, k, 0.5 * rho);
      add_collision(row, j + 1, k, 0.5 * rho);
      rhs(row) = 0.5 * (h.values(j, k) + h.values(j + 1, k));
    }
  }
  // Normalization: int_0^H (g, 1) dz = 0.
  const Eigen::VectorXd tw = zg.trapezoid();
  for (Eigen::Index k = 0; k < nv; ++k)
    for (int j = 0; j < nz; ++j) trip.emplace_back(row, id(j, k), tw(j) * w(k));
  ++row;

  Eigen::SparseMatrix<double> a(row, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr(a);
  if (qr.info() != Eigen::Success) throw Error("assemble_direct: sparse QR factorization failed");
  const Eigen::VectorXd x = qr.solve(rhs.head(row));
  if (qr.info() != Eigen::Success) throw Error("assemble_direct: sparse QR solve failed");
  return SlabField(zg, Eigen::Map<const Eigen::MatrixXd>(x.data(), nz, nv));
}

std::vector<FluidMoments> moment_profiles(const SlabField& g, const VelocityGrid& grid) {
  const Eigen::MatrixXd coeffs = (g.values * grid.weights().asDiagonal() * grid.kernel_basis()) *
                                 grid.kernel_gram_inverse();
  std::vector<FluidMoments> out;
  out.reserve(static_cast<std::size_t>(coeffs.rows()));
  for (Eigen::Index j = 0; j < coeffs.rows(); ++j) {
    out.push_back(FluidMoments::from_vector(coeffs.row(j).transpose()));
  }
  return out;
}

SlabField rescale_to_thin(const SlabField& g, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("rescale_to_thin: epsilon must be positive");
  return SlabField(ZGrid(g.zgrid.height * epsilon, g.zgrid.nodes), g.values);
}

void to_json(nlohmann::json& j, const SlabSolveReport& report) {
  j = nlohmann::json{{"boundary_defect", report.boundary_defect},
                     {"dirichlet_form", report.dirichlet_form},
                     {"iterations", report.iterations},
                     {"residual", report.residual},
                     {"max_pointwise_density", report.max_pointwise_density},
                     {"z_nodes", report.solution.zgrid.nodes},
                     {"height", report.solution.zgrid.height},
                     {"velocity_nodes", report.solution.values.cols()},
                     {"residual_history", report.history}};
}

void write_slab_csv(const std::string& path, const SlabField& g) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "z,velocity_node,value\n" << std::setprecision(17);
  for (int j = 0; j < g.zgrid.nodes; ++j)
    for (Eigen::Index k = 0; k < g.values.cols(); ++k)
      out << g.zgrid.z(j) << ',' << k << ',' << g.values(j, k) << '\n';
}

}  // namespace kinlub
