#include "kinlub/remainder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "kinlub/errors.hpp"
#include "kinlub/krylov.hpp"
#include "kinlub/parallel.hpp"

namespace kinlub {

namespace {

Eigen::VectorXd trapezoid_x(const std::vector<double>& x) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = x[static_cast<std::size_t>(i + 1)] - x[static_cast<std::size_t>(i)];
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

double weighted_square(const ThinDomainField& f, const Eigen::VectorXd& velocity_weights) {
  const Eigen::VectorXd cw = f.cell_weights();
  return (cw.asDiagonal() * f.values.cwiseAbs2() * velocity_weights).sum();
}

Eigen::MatrixXd kernel_projection(const Eigen::MatrixXd& rows, const VelocityGrid& grid) {
  const auto& basis = grid.kernel_basis();
  const Eigen::MatrixXd coeff = rows * (grid.weights().asDiagonal() * basis) * grid.kernel_gram_inverse();
  return coeff * basis.transpose();
}

std::string eps_label(double eps) {
  std::ostringstream s;
  s << " [epsilon = " << eps << "]";
  return s.str();
}

}  // namespace

ThinDomainField::ThinDomainField(std::vector<double> x_nodes, const ZGrid& z, double eps,
                                 Eigen::Index velocity_nodes)
    : x(std::move(x_nodes)),
      zgrid(z),
      epsilon(eps),
      values(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(x.size()) * z.nodes, velocity_nodes)) {}

SlabField ThinDomainField::column(int i) const { return SlabField(zgrid, values.middleRows(i * nz(), nz())); }

void ThinDomainField::set_column(int i, const Eigen::MatrixXd& v) { values.middleRows(i * nz(), nz()) = v; }

Eigen::VectorXd ThinDomainField::cell_weights() const {
  const Eigen::VectorXd wx = trapezoid_x(x), wz = zgrid.trapezoid();
  Eigen::VectorXd w(values.rows());
  for (int i = 0; i < nx(); ++i) w.segment(i * nz(), nz()) = wx(i) * wz;
  return w;
}

double rescaled_norm(const ThinDomainField& f, const VelocityGrid& grid) {
  return std::sqrt(weighted_square(f, grid.weights()));
}

double rescaled_nu_norm(const ThinDomainField& f, const CollisionOperator& op) {
  return std::sqrt(weighted_square(f, op.grid().weights().cwiseProduct(op.nu())));
}

double thin_norm(const ThinDomainField& f, const VelocityGrid& grid) {
  return std::sqrt(f.epsilon) * rescaled_norm(f, grid);
}

double thin_nu_norm(const ThinDomainField& f, const CollisionOperator& op) {
  return std::sqrt(f.epsilon) * rescaled_nu_norm(f, op);
}

RemainderProblem::RemainderProblem(const ExpansionField& expansion, double epsilon)
    : setup_(expansion.setup), epsilon_(epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("remainder: epsilon must lie in (0, 1)");
  const PlanarDomain& d = expansion.domain();
  if (!d.one_dimensional()) throw InvalidArgument("remainder: the reduced geometry needs an interval domain");
  if (!expansion.has_g2) throw InvalidArgument("remainder: the expansion has no g^2; call build_g2 first");

  const VelocityGrid& grid = setup_.grid();
  const CollisionOperator& op = *setup_.op;
  const auto nv = static_cast<Eigen::Index>(grid.size());
  const int n = d.nx(), nz = setup_.zgrid.nodes;
  const double dx = d.hx();
  for (int i = 0; i < n; ++i) {
    x_.push_back(d.x(i));
    rho_.push_back(expansion.column_rho(d.index(i, 0)));
    volume_.push_back(i == 0 || i == n - 1 ? 0.5 * dx : dx);
  }

  g1_ = ThinDomainField(x_, setup_.zgrid, epsilon, nv);
  g2_ = g1_;
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(d.index(i, 0));
    g1_.set_column(i, expansion.g1[k].values);
    g2_.set_column(i, expansion.g2[k].values);
  }

  // d_x g^2: central differences, second-order one-sided at the ends.
  ThinDomainField dg2 = g1_;
  const auto col = [&](int i) { return g2_.values.middleRows(i * nz, nz); };
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd v;
    if (i == 0)
      v = (4.0 * (col(1) - col(0)) - (col(2) - col(0))) / (2.0 * dx);
    else if (i == n - 1)
      v = -(4.0 * (col(n - 2) - col(n - 1)) - (col(n - 3) - col(n - 1))) / (2.0 * dx);
    else
      v = (col(i + 1) - col(i - 1)) / (2.0 * dx);
    dg2.set_column(i, v);
  }

  const double se = std::sqrt(epsilon);
  const Eigen::VectorXd vx = grid.vx(), vz = grid.vz();
  w_ = g1_;
  w_.values = -se * (dg2.values * vx.asDiagonal()) +
              op.apply_Gamma_rows(g2_.values, se * g1_.values + 2.0 * epsilon * se * g2_.values);

  inflow_left_ = -se * g2_.values.topRows(nz);
  inflow_right_ = -se * g2_.values.bottomRows(nz);
  for (Eigen::Index k = 0; k < nv; ++k) {
    if (!(vx(k) > 0.0)) inflow_left_.col(k).setZero();
    if (!(vx(k) < 0.0)) inflow_right_.col(k).setZero();
  }

  double outflux = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k)
    if (vz(k) > 0.0) outflux += grid.weights()(k) * vz(k);
  wall_norm_ = 1.0 / outflux;

  const double dz = setup_.zgrid.dz();
  cells_.resize(static_cast<std::size_t>(n * nv));
  for (int i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < nv; ++k) {
      const double sigma = rho_[static_cast<std::size_t>(i)] * op.rate()(k) +
                           epsilon * std::abs(vx(k)) / volume_[static_cast<std::size_t>(i)];
      Cell& c = cells_[static_cast<std::size_t>(i * nv + k)];
      if (vz(k) == 0.0) {
        c = Cell{0.0, 1.0 / sigma, 0.0};
      } else {
        const CellCoefficients e = exponential_cell(sigma, std::abs(vz(k)), dz);
        c = Cell{e.decay, e.up, e.down};
      }
    }
}

ThinDomainField RemainderProblem::zero_field() const {
  return ThinDomainField(x_, setup_.zgrid, epsilon_, static_cast<Eigen::Index>(grid().size()));
}

double RemainderProblem::inflow_norm() const {
  const VelocityGrid& g = grid();
  const Eigen::VectorXd wz = setup_.zgrid.trapezoid();
  const Eigen::VectorXd flux = g.weights().cwiseProduct(g.vx().cwiseAbs());
  const double sq = (wz.asDiagonal() * inflow_left_.cwiseAbs2() * flux).sum() +
                    (wz.asDiagonal() * inflow_right_.cwiseAbs2() * flux).sum();
  return std::sqrt(epsilon_ * sq);
}

ThinDomainField RemainderProblem::s(const ThinDomainField& r) const {
  ThinDomainField out = zero_field();
  out.values = op().apply_Gamma_rows(r.values, g1_.values + epsilon_ * g2_.values + 2.0 * std::sqrt(epsilon_) * r.values);
  return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> RemainderProblem::reemission(const Eigen::MatrixXd& r) const {
  const VelocityGrid& g = grid();
  const int n = nx(), nz = setup_.zgrid.nodes;
  const Eigen::VectorXd vz = g.vz();
  Eigen::VectorXd down = Eigen::VectorXd::Zero(vz.size()), up = down;
  for (Eigen::Index k = 0; k < vz.size(); ++k) {
    if (vz(k) < 0.0) down(k) = g.weights()(k) * -vz(k);
    if (vz(k) > 0.0) up(k) = g.weights()(k) * vz(k);
  }
  Eigen::VectorXd b0(n), bH(n);
  for (int i = 0; i < n; ++i) {
    b0(i) = wall_norm_ * r.row(i * nz).dot(down);
    bH(i) = wall_norm_ * r.row(i * nz + nz - 1).dot(up);
  }
  return {b0, bH};
}

Eigen::MatrixXd RemainderProblem::sweep(const Eigen::MatrixXd& q, const Eigen::VectorXd& beta0,
                                        const Eigen::VectorXd& betaH, bool with_inflow, int threads) const {
  const VelocityGrid& g = grid();
  const auto nv = static_cast<Eigen::Index>(g.size());
  const int n = nx(), nz = setup_.zgrid.nodes;
  Eigen::MatrixXd out(q.rows(), q.cols());
  parallel_for(static_cast<std::size_t>(nv), threads, [&](std::size_t kk) {
    const auto k = static_cast<Eigen::Index>(kk);
    const double vx = g.nodes()(k, 0), vz = g.nodes()(k, 2);
    const bool forward = vx >= 0.0;
    Eigen::VectorXd src(nz);
    for (int step = 0; step < n; ++step) {
      const int i = forward ? step : n - 1 - step;
      const int iup = forward ? i - 1 : i + 1;
      const double coupling = epsilon_ * std::abs(vx) / volume_[static_cast<std::size_t>(i)];
      for (int j = 0; j < nz; ++j) {
        double upstream = 0.0;
        if (iup >= 0 && iup < n)
          upstream = out(iup * nz + j, k);
        else if (with_inflow)
          upstream = forward ? inflow_left_(j, k) : inflow_right_(j, k);
        src(j) = q(i * nz + j, k) + coupling * upstream;
      }
      const Cell& c = cells_[static_cast<std::size_t>(i * nv + k)];
      const Eigen::Index base = i * nz;
      if (vz > 0.0) {
        out(base, k) = beta0(i);
        for (int j = 0; j + 1 < nz; ++j)
          out(base + j + 1, k) = c.decay * out(base + j, k) + c.up * src(j) + c.down * src(j + 1);
      } else if (vz < 0.0) {
        out(base + nz - 1, k) = betaH(i);
        for (int j = nz - 1; j > 0; --j)
          out(base + j - 1, k) = c.decay * out(base + j, k) + c.up * src(j) + c.down * src(j - 1);
      } else {
        for (int j = 0; j < nz; ++j) out(base + j, k) = c.up * src(j);
      }
    }
  });
  return out;
}

Eigen::MatrixXd RemainderProblem::source_term(const ThinDomainField& s, bool with_data) const {
  Eigen::MatrixXd q = epsilon_ * s.values;
  if (with_data) q += epsilon_ * w_.values;
  return q;
}

Eigen::MatrixXd RemainderProblem::apply_fixed_point(const Eigen::MatrixXd& r, const Eigen::MatrixXd& base,
                                                    int threads) const {
  Eigen::MatrixXd q = op().apply_K_rows(r);
  const int nz = setup_.zgrid.nodes;
  for (int i = 0; i < nx(); ++i) q.middleRows(i * nz, nz) *= -rho_[static_cast<std::size_t>(i)];
  if (base.size() > 0) q += base;
  const auto [b0, bH] = reemission(r);
  return sweep(q, b0, bH, false, threads);
}

void RemainderProblem::check_orthogonal(const ThinDomainField& s, double tol) const {
  if (s.values.rows() != w_.values.rows() || s.values.cols() != w_.values.cols())
    throw InvalidArgument("remainder: source has the wrong shape");
  if (!s.values.allFinite()) throw InvalidArgument("remainder: source is not finite");
  const double scale = std::max(1.0, s.values.cwiseAbs().maxCoeff());
  const double defect = kernel_projection(s.values, grid()).cwiseAbs().maxCoeff();
  if (defect > tol * scale) {
    std::ostringstream m;
    m << "remainder: source is not orthogonal to ker L (|P s| = " << defect << ")";
    throw InvalidArgument(m.str());
  }
}

ThinDomainField RemainderProblem::solve_linear(const ThinDomainField& s, bool with_data, const RemainderOptions& opts,
                                               const ThinDomainField* guess, LinearRemainderReport* report) const {
  check_orthogonal(s, opts.orthogonality_tol);
  const Eigen::Index rows = s.values.rows(), cols = s.values.cols();
  const Eigen::VectorXd zero_beta = Eigen::VectorXd::Zero(nx());
  const Eigen::MatrixXd b = sweep(source_term(s, with_data), zero_beta, zero_beta, with_data, opts.threads);
  const Eigen::MatrixXd none;

  const LinearMap apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    const Eigen::Map<const Eigen::MatrixXd> r(v.data(), rows, cols);
    const Eigen::MatrixXd m = apply_fixed_point(r, none, opts.threads);
    return v - Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  };
  Eigen::VectorXd x0 = guess ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(guess->values.data(), guess->values.size()))
                             : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(b.data(), b.size()));
  const GmresResult res =
      gmres(apply, Eigen::Map<const Eigen::VectorXd>(b.data(), b.size()), std::move(x0),
            GmresOptions{opts.gmres_tol, opts.restart, opts.max_inner});
  if (!res.converged)
    throw ConvergenceError("remainder: GMRES did not converge in " + std::to_string(res.iterations) +
                               " iterations" + eps_label(epsilon_),
                           res.history);

  ThinDomainField r = zero_field();
  r.values = Eigen::Map<const Eigen::MatrixXd>(res.x.data(), rows, cols);
  if (report) {
    report->iterations = res.iterations;
    report->history = res.history;
    report->residual = residual(r, s, with_data);
  }
  return r;
}

double RemainderProblem::residual(const ThinDomainField& r, const ThinDomainField& s, bool with_data) const {
  const Eigen::MatrixXd base = source_term(s, with_data);
  Eigen::MatrixXd q = op().apply_K_rows(r.values);
  const int nz = setup_.zgrid.nodes;
  for (int i = 0; i < nx(); ++i) q.middleRows(i * nz, nz) *= -rho_[static_cast<std::size_t>(i)];
  q += base;
  const auto [b0, bH] = reemission(r.values);
  const Eigen::MatrixXd image = sweep(q, b0, bH, with_data, 1);
  const double scale = std::max(1.0, image.cwiseAbs().maxCoeff());
  return (r.values - image).cwiseAbs().maxCoeff() / scale;
}

double RemainderProblem::max_wall_flux(const ThinDomainField& r) const {
  const VelocityGrid& g = grid();
  const Eigen::VectorXd flux = g.weights().cwiseProduct(g.vz());
  const int nz = setup_.zgrid.nodes;
  double worst = 0.0;
  for (int i = 0; i < nx(); ++i) {
    worst = std::max(worst, std::abs(r.values.row(i * nz).dot(flux)));
    worst = std::max(worst, std::abs(r.values.row(i * nz + nz - 1).dot(flux)));
  }
  return worst;
}

RemainderDiagnostics RemainderProblem::diagnostics(const ThinDomainField& r) const {
  const VelocityGrid& g = grid();
  RemainderDiagnostics d;
  ThinDomainField fluid = zero_field();
  fluid.values = kernel_projection(r.values, g);
  ThinDomainField kinetic = zero_field();
  kinetic.values = r.values - fluid.values;
  d.A = thin_norm(kinetic, g) / epsilon_;
  d.B = thin_norm(fluid, g);

  const int nz = setup_.zgrid.nodes;
  const Eigen::VectorXd wx = trapezoid_x(x_);
  const Eigen::VectorXd vz = g.vz(), vx = g.vx();
  const auto [b0, bH] = reemission(r.values);
  double wall = 0.0;
  for (int i = 0; i < nx(); ++i)
    for (Eigen::Index k = 0; k < vz.size(); ++k) {
      const double wk = g.weights()(k) * std::abs(vz(k));
      if (vz(k) < 0.0) wall += wx(i) * wk * std::pow(r.values(i * nz, k) - b0(i), 2);
      if (vz(k) > 0.0) wall += wx(i) * wk * std::pow(r.values(i * nz + nz - 1, k) - bH(i), 2);
    }
  d.C = std::sqrt(wall);

  const Eigen::VectorXd wz = setup_.zgrid.trapezoid();
  double lateral = 0.0;
  const int last = nx() - 1;
  for (Eigen::Index k = 0; k < vx.size(); ++k) {
    const double wk = g.weights()(k) * std::abs(vx(k));
    if (vx(k) < 0.0) lateral += wk * wz.dot(r.values.col(k).segment(0, nz).cwiseAbs2());
    if (vx(k) > 0.0) lateral += wk * wz.dot(r.values.col(k).segment(last * nz, nz).cwiseAbs2());
  }
  d.Sigma = std::sqrt(epsilon_ * lateral);
  return d;
}

double RemainderProblem::deviation_norm(const ThinDomainField& r) const {
  ThinDomainField dev = zero_field();
  dev.values = epsilon_ * g1_.values + epsilon_ * epsilon_ * g2_.values + std::pow(epsilon_, 1.5) * r.values;
  return rescaled_norm(dev, grid());
}

double RemainderProblem::thin_deviation_norm(const ThinDomainField& r) const {
  return std::sqrt(epsilon_) * deviation_norm(r);
}

std::pair<ThinDomainField, IterationReport> picard_solve(const RemainderProblem& problem,
                                                         const RemainderOptions& opts) {
  IterationReport rep;
  const ThinDomainField zero = problem.zero_field();
  LinearRemainderReport inner;
  ThinDomainField r = problem.solve_linear(zero, true, opts, nullptr, &inner);
  rep.inner_iterations.push_back(inner.iterations);
  rep.diagnostics_history.push_back(problem.diagnostics(r));

  const double floor = 10.0 * opts.picard_tol;
  int strikes = 0;
  bool converged = false;
  for (int k = 1; k <= opts.max_outer; ++k) {
    ThinDomainField next = problem.solve_linear(problem.s(r), true, opts, &r, &inner);
    rep.inner_iterations.push_back(inner.iterations);
    ThinDomainField q = next;
    q.values -= r.values;
    const double qn = rescaled_nu_norm(q, problem.op());
    rep.update_norms.push_back(qn);
    r = std::move(next);
    rep.diagnostics_history.push_back(problem.diagnostics(r));
    rep.iterations = k;
    if (k >= 2) {
      const double prev = rep.update_norms[rep.update_norms.size() - 2];
      const double zeta = prev > 0.0 ? qn / prev : 0.0;
      rep.contraction_estimates.push_back(zeta);
      if (qn >= floor) {
        rep.contraction = std::max(rep.contraction, zeta);
        strikes = zeta >= 1.0 ? strikes + 1 : 0;
      }
      if (strikes >= 2) {
        std::ostringstream m;
        m << "remainder: Picard iteration diverges (contraction estimate " << zeta
          << " >= 1); try a smaller epsilon" << eps_label(problem.epsilon());
        throw DivergenceError(m.str(), rep.update_norms);
      }
    }
    if (qn < opts.picard_tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw DivergenceError("remainder: Picard iteration hit the cap of " + std::to_string(opts.max_outer) +
                              " iterations" + eps_label(problem.epsilon()),
                          rep.update_norms);

  rep.final_norm = rescaled_nu_norm(r, problem.op());
  rep.final_thin_norm = thin_nu_norm(r, problem.op());
  rep.residual = problem.residual(r, problem.s(r), true);
  rep.max_wall_flux = problem.max_wall_flux(r);
  rep.diagnostics = rep.diagnostics_history.back();
  return {std::move(r), std::move(rep)};
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("loglog_slope: need two or more points");
  double mx = 0.0, my = 0.0;
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw InvalidArgument("loglog_slope: values must be positive");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

ConvergenceStudy convergence_study(const ExpansionField& expansion, const std::vector<double>& epsilons,
                                   const RemainderOptions& opts) {
  if (epsilons.size() < 3) throw InvalidArgument("convergence_study: need at least three values of epsilon");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) throw InvalidArgument("convergence_study: epsilon must be positive");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
      throw InvalidArgument("convergence_study: epsilon values must be strictly decreasing");
  }

  ConvergenceStudy study;
  std::vector<double> xs, ys, ys_thin;
  const auto slope_of = [](const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() >= 2 ? loglog_slope(a, b) : std::numeric_limits<double>::quiet_NaN();
  };
  for (double eps : epsilons) {
    StudyRow row;
    row.epsilon = eps;
    try {
      const RemainderProblem problem(expansion, eps);
      row.w_norm = thin_norm(problem.w(), problem.grid());
      row.inflow_norm = problem.inflow_norm();
      auto [r, rep] = picard_solve(problem, opts);
      row.ok = true;
      row.deviation = problem.deviation_norm(r);
      row.ratio = row.deviation / eps;
      row.thin_deviation = problem.thin_deviation_norm(r);
      row.thin_ratio = row.thin_deviation / eps;
      row.iterations = rep.iterations;
      row.contraction = rep.contraction;
      row.r_norm = rep.final_norm;
      row.r_thin_norm = rep.final_thin_norm;
      row.diagnostics = rep.diagnostics;
      // A vanishing deviation (constant density) has no logarithm.
      if (row.deviation > 0.0) {
        xs.push_back(eps);
        ys.push_back(row.deviation);
        ys_thin.push_back(row.thin_deviation);
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    row.slope_so_far = slope_of(xs, ys);
    study.rows.push_back(row);
  }
  study.slope = slope_of(xs, ys);
  study.thin_slope = slope_of(xs, ys_thin);

  study.all_ok = std::all_of(study.rows.begin(), study.rows.end(), [](const StudyRow& r) { return r.ok; });
  double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
  double nmax = 0.0, nmin = std::numeric_limits<double>::infinity();
  double first = -1.0;
  for (const StudyRow& r : study.rows) {
    if (!r.ok) continue;
    rmax = std::max(rmax, r.ratio);
    rmin = std::min(rmin, r.ratio);
    nmax = std::max(nmax, r.r_norm);
    nmin = std::min(nmin, r.r_norm);
    if (first < 0.0) first = r.r_norm;
    study.max_contraction = std::max(study.max_contraction, r.contraction);
  }
  study.ratio_variation = rmax > 0.0 ? (rmax - rmin) / rmax : 0.0;
  study.r_variation = nmax > 0.0 ? (nmax - nmin) / nmax : 0.0;
  study.r_growth = first > 0.0 ? nmax / first - 1.0 : 0.0;
  return study;
}

void write_study_csv(const std::string& path, const ConvergenceStudy& study) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "epsilon,ok,norm,norm_over_epsilon,slope_so_far,iterations,contraction,thin_norm,thin_norm_over_epsilon,"
         "r_norm,r_thin_norm,w_norm,inflow_norm,A,B,C,Sigma,error\n"
      << std::setprecision(12);
  for (const StudyRow& r : study.rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.epsilon << ',' << (r.ok ? 1 : 0) << ',' << r.deviation << ',' << r.ratio << ',' << r.slope_so_far << ','
        << r.iterations << ',' << r.contraction << ',' << r.thin_deviation << ',' << r.thin_ratio << ',' << r.r_norm << ',' << r.r_thin_norm << ',' << r.w_norm << ','
        << r.inflow_norm << ',' << r.diagnostics.A << ',' << r.diagnostics.B << ',' << r.diagnostics.C << ','
        << r.diagnostics.Sigma << ',' << err << '\n';
  }
}

namespace {
nlohmann::json diag_json(const RemainderDiagnostics& d) {
  return {{"A", d.A}, {"B", d.B}, {"C", d.C}, {"Sigma", d.Sigma}};
}
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace

void to_json(nlohmann::json& j, const IterationReport& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& d : r.diagnostics_history) history.push_back(diag_json(d));
  j = {{"iterations", r.iterations},
       {"contraction", r.contraction},
       {"contraction_estimates", r.contraction_estimates},
       {"update_norms", r.update_norms},
       {"inner_iterations", r.inner_iterations},
       {"final_norm", r.final_norm},
       {"final_thin_norm", r.final_thin_norm},
       {"residual", r.residual},
       {"max_wall_flux", r.max_wall_flux},
       {"diagnostics", diag_json(r.diagnostics)},
       {"diagnostics_history", history}};
}

void to_json(nlohmann::json& j, const ConvergenceStudy& study) {
  nlohmann::json rows = nlohmann::json::array();
  for (const StudyRow& r : study.rows)
    rows.push_back({{"epsilon", r.epsilon},
                    {"ok", r.ok},
                    {"error", r.error},
                    {"deviation", r.deviation},
                    {"ratio", r.ratio},
                    {"thin_deviation", r.thin_deviation},
                    {"thin_ratio", r.thin_ratio},
                    {"slope_so_far", finite_or_null(r.slope_so_far)},
                    {"iterations", r.iterations},
                    {"contraction", r.contraction},
                    {"r_norm", r.r_norm},
                    {"r_thin_norm", r.r_thin_norm},
                    {"w_norm", r.w_norm},
                    {"inflow_norm", r.inflow_norm},
                    {"diagnostics", diag_json(r.diagnostics)}});
  j = {{"rows", rows},
       {"slope", finite_or_null(study.slope)},
       {"thin_slope", finite_or_null(study.thin_slope)},
       {"ratio_variation", study.ratio_variation},
       {"r_growth", study.r_growth},
       {"r_variation", study.r_variation},
       {"max_contraction", study.max_contraction},
       {"all_ok", study.all_ok}};
}

}  // namespace kinlub
