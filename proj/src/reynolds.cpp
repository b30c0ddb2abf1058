#include "kinlub/reynolds.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "kinlub/errors.hpp"

namespace kinlub {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Neighbour {
  int i, j;
  bool along_x;
  bool forward;
};

// Stencil neighbours of (i, j); the interval kind has no y-neighbours.
std::vector<Neighbour> neighbours(const PlanarDomain& d, int i, int j) {
  std::vector<Neighbour> out = {{i - 1, j, true, false}, {i + 1, j, true, true}};
  if (!d.one_dimensional()) {
    out.push_back({i, j - 1, false, false});
    out.push_back({i, j + 1, false, true});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

PlanarDomain PlanarDomain::rectangle(double x0, double x1, double y0, double y1, int nx, int ny) {
  if (!(x1 > x0) || !(y1 > y0)) throw InvalidDomain("rectangle needs x1 > x0 and y1 > y0");
  if (nx < 3 || ny < 3) throw InvalidDomain("rectangle needs at least 3 x 3 nodes");
  PlanarDomain d;
  d.kind_ = DomainKind::rectangle;
  d.nx_ = nx;
  d.ny_ = ny;
  d.x0_ = x0;
  d.y0_ = y0;
  d.hx_ = (x1 - x0) / (nx - 1);
  d.hy_ = (y1 - y0) / (ny - 1);
  d.classify();
  return d;
}

PlanarDomain PlanarDomain::graph_bounded(double x0, double x1, const std::function<double(double)>& y_lo,
                                         const std::function<double(double)>& y_hi, int nx) {
  if (!(x1 > x0)) throw InvalidDomain("graph-bounded domain needs x1 > x0");
  if (nx < 3) throw InvalidDomain("graph-bounded domain needs at least 3 columns");
  PlanarDomain d;
  d.kind_ = DomainKind::graph_bounded;
  d.nx_ = nx;
  d.x0_ = x0;
  d.hx_ = d.hy_ = (x1 - x0) / (nx - 1);
  d.lo_.resize(static_cast<std::size_t>(nx));
  d.hi_.resize(static_cast<std::size_t>(nx));
  for (int i = 0; i < nx; ++i) {
    const double lo = y_lo(d.x(i)), hi = y_hi(d.x(i));
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
      throw InvalidDomain("bounding curves must satisfy y_lo < y_hi at every column");
    }
    d.lo_[static_cast<std::size_t>(i)] = lo;
    d.hi_[static_cast<std::size_t>(i)] = hi;
  }
  d.y0_ = *std::min_element(d.lo_.begin(), d.lo_.end());
  const double top = *std::max_element(d.hi_.begin(), d.hi_.end());
  d.ny_ = static_cast<int>(std::floor((top - d.y0_) / d.hy_ + 1e-9)) + 1;
  for (int i = 1; i + 1 < nx; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double h2 = d.hx_ * d.hx_;
    d.curvature_ = std::max({d.curvature_, std::abs(d.lo_[k + 1] - 2 * d.lo_[k] + d.lo_[k - 1]) / h2,
                             std::abs(d.hi_[k + 1] - 2 * d.hi_[k] + d.hi_[k - 1]) / h2});
  }
  d.classify();
  return d;
}

PlanarDomain PlanarDomain::interval(double x0, double x1, int nx) {
  if (!(x1 > x0)) throw InvalidDomain("interval needs x1 > x0");
  if (nx < 3) throw InvalidDomain("interval needs at least 3 nodes");
  PlanarDomain d;
  d.kind_ = DomainKind::interval;
  d.nx_ = nx;
  d.ny_ = 1;
  d.x0_ = x0;
  d.hx_ = (x1 - x0) / (nx - 1);
  d.hy_ = 1.0;
  d.classify();
  return d;
}

void PlanarDomain::classify() {
  types_.assign(static_cast<std::size_t>(size()), Node::outside);
  const double tol = 1e-9 * hy_;
  auto in_region = [&](int i, int j) {
    if (i < 0 || i >= nx_ || j < 0 || j >= ny_) return false;
    if (kind_ != DomainKind::graph_bounded) return true;
    const double y = this->y(j);
    return y >= lo_[static_cast<std::size_t>(i)] - tol && y <= hi_[static_cast<std::size_t>(i)] + tol;
  };
  for (int i = 0; i < nx_; ++i) {
    bool column_has_node = false;
    for (int j = 0; j < ny_; ++j) {
      if (!in_region(i, j)) continue;
      column_has_node = true;
      bool all = in_region(i - 1, j) && in_region(i + 1, j);
      if (kind_ != DomainKind::interval) all = all && in_region(i, j - 1) && in_region(i, j + 1);
      types_[static_cast<std::size_t>(index(i, j))] = all ? Node::interior : Node::boundary;
    }
    if (!column_has_node) throw InvalidDomain("a grid column contains no node of the domain");
  }
  if (interior_count() == 0) throw InvalidDomain("domain has no interior nodes at this resolution");
}

int PlanarDomain::interior_count() const {
  return static_cast<int>(std::count(types_.begin(), types_.end(), Node::interior));
}

int PlanarDomain::boundary_count() const {
  return static_cast<int>(std::count(types_.begin(), types_.end(), Node::boundary));
}

// ---------------------------------------------------------------------------

namespace {

template <class Pred>
double extreme(const PlanarField& f, Pred keep, bool want_max) {
  double best = want_max ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  for (int i = 0; i < f.domain.nx(); ++i)
    for (int j = 0; j < f.domain.ny(); ++j)
      if (keep(f.domain.type(i, j))) best = want_max ? std::max(best, f.at(i, j)) : std::min(best, f.at(i, j));
  return best;
}

bool is_boundary(PlanarDomain::Node n) { return n == PlanarDomain::Node::boundary; }
bool is_inside(PlanarDomain::Node n) { return n != PlanarDomain::Node::outside; }

}  // namespace

double PlanarField::boundary_min() const { return extreme(*this, is_boundary, false); }
double PlanarField::boundary_max() const { return extreme(*this, is_boundary, true); }
double PlanarField::inside_min() const { return extreme(*this, is_inside, false); }
double PlanarField::inside_max() const { return extreme(*this, is_inside, true); }

PlanarField boundary_data(const PlanarDomain& domain, const std::function<double(double, double)>& f) {
  PlanarField out{domain, Eigen::VectorXd::Constant(domain.size(), kNaN)};
  for (int i = 0; i < domain.nx(); ++i)
    for (int j = 0; j < domain.ny(); ++j)
      if (domain.type(i, j) == PlanarDomain::Node::boundary) out.values(domain.index(i, j)) = f(domain.x(i), domain.y(j));
  return out;
}

PlanarField solve_dirichlet(const PlanarField& data, const std::function<double(int, int)>& face_x,
                            const std::function<double(int, int)>& face_y,
                            const std::function<double(int, int)>& source, const EllipticOptions& opts) {
  const PlanarDomain& d = data.domain;
  std::vector<Eigen::Index> unknown(static_cast<std::size_t>(d.size()), -1);
  Eigen::Index n = 0;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      const auto t = d.type(i, j);
      if (t == PlanarDomain::Node::interior) unknown[static_cast<std::size_t>(d.index(i, j))] = n++;
      if (t == PlanarDomain::Node::boundary && !std::isfinite(data.at(i, j))) {
        throw InvalidArgument("Dirichlet data must be finite on every boundary node");
      }
    }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * n));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  bool source_free = true;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      const Eigen::Index row = unknown[static_cast<std::size_t>(d.index(i, j))];
      if (row < 0) continue;
      double diag = 0.0;
      for (const Neighbour& q : neighbours(d, i, j)) {
        const double h = q.along_x ? d.hx() : d.hy();
        const int fi = q.forward ? i : q.i, fj = q.forward ? j : q.j;
        const double a = (q.along_x ? face_x(fi, fj) : face_y(fi, fj)) / (h * h);
        if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("face coefficients must be positive and finite");
        diag += a;
        const Eigen::Index col = unknown[static_cast<std::size_t>(d.index(q.i, q.j))];
        if (col >= 0) {
          trip.emplace_back(row, col, -a);
        } else {
          rhs(row) += a * data.at(q.i, q.j);
        }
      }
      trip.emplace_back(row, row, diag);
      const double f = source(i, j);
      source_free = source_free && f == 0.0;
      rhs(row) -= f;
    }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());

  // Default start: the mean of the boundary data, which is exact for constant data.
  double mean = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  int count = 0;
  for (Eigen::Index k = 0; k < d.size(); ++k)
    if (unknown[static_cast<std::size_t>(k)] < 0 && std::isfinite(data.values(k))) {
      mean += data.values(k);
      lo = std::min(lo, data.values(k));
      hi = std::max(hi, data.values(k));
      ++count;
    }
  Eigen::VectorXd guess = Eigen::VectorXd::Constant(n, count == 0 ? 0.0 : lo == hi ? lo : mean / count);
  if (opts.initial_guess) {
    if (opts.initial_guess->size() != d.size()) throw InvalidArgument("initial guess has the wrong size");
    for (std::size_t k = 0; k < unknown.size(); ++k)
      if (unknown[k] >= 0) guess(unknown[k]) = (*opts.initial_guess)(static_cast<Eigen::Index>(k));
  }

  Eigen::VectorXd u;
  int iterations = 0;
  if (source_free && count > 0 && lo == hi) {
    // Constant data and no source: the discrete maximum principle pins the solution.
    u = Eigen::VectorXd::Constant(n, lo);
  } else if (d.one_dimensional()) {
    // Tridiagonal: CG stalls on long lines, the sparse factorization is exact and O(n).
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw InvalidDomain("elliptic operator could not be factored");
    u = ldlt.solve(rhs);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(opts.tol);
    cg.setMaxIterations(opts.max_iterations);
    cg.compute(m);
    if (cg.info() != Eigen::Success) throw InvalidDomain("elliptic operator could not be factored");
    u = cg.solveWithGuess(rhs, guess);
    iterations = static_cast<int>(cg.iterations());
  }
  // Backward error of the algebraic solve.
  double row_norm = 0.0;
  for (Eigen::Index c = 0; c < m.outerSize(); ++c) {
    double sum = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it) sum += std::abs(it.value());
    row_norm = std::max(row_norm, sum);
  }
  const double residual = (m * u - rhs).cwiseAbs().maxCoeff() /
                          std::max(row_norm * u.cwiseAbs().maxCoeff() + rhs.cwiseAbs().maxCoeff(), 1e-300);
  if (!u.allFinite() || residual > 1e-10) {
    std::ostringstream msg;
    msg << "elliptic solve stopped after " << iterations << " iterations with relative residual " << residual;
    throw ConvergenceError(msg.str(), {residual});
  }

  PlanarField out{d, Eigen::VectorXd::Constant(d.size(), kNaN)};
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      const Eigen::Index k = d.index(i, j);
      const Eigen::Index row = unknown[static_cast<std::size_t>(k)];
      if (row >= 0) out.values(k) = u(row);
      else if (d.type(i, j) == PlanarDomain::Node::boundary) out.values(k) = data.values(k);
    }
  return out;
}

PlanarField harmonic_solve(const PlanarField& data, const EllipticOptions& opts) {
  const auto one = [](int, int) { return 1.0; };
  const auto zero = [](int, int) { return 0.0; };
  return solve_dirichlet(data, one, one, zero, opts);
}

namespace {

void check_boundary_range(const PlanarField& rho0, const CoefficientTable& table) {
  const double lo = rho0.boundary_min(), hi = rho0.boundary_max();
  if (!(lo > 0.0)) throw RangeError("boundary density must be positive");
  if (!(lo > table.rho_m()) || !(hi <= table.rho_max())) {
    std::ostringstream msg;
    msg << "boundary density range [" << lo << ", " << hi << "] is not inside the table range ("
        << table.rho_m() << ", " << table.rho_max() << "]";
    throw RangeError(msg.str());
  }
}

PlanarField map_inside(const PlanarField& f, const std::function<double(double)>& fn) {
  PlanarField out{f.domain, Eigen::VectorXd::Constant(f.domain.size(), kNaN)};
  for (int i = 0; i < f.domain.nx(); ++i)
    for (int j = 0; j < f.domain.ny(); ++j)
      if (f.domain.inside(i, j) && std::isfinite(f.at(i, j))) out.values(f.domain.index(i, j)) = fn(f.at(i, j));
  return out;
}

}  // namespace

DensityField solve_reynolds(const PlanarField& rho0, const CoefficientTable& table, const EllipticOptions& opts) {
  check_boundary_range(rho0, table);
  DensityField out;
  out.rho0_min = rho0.boundary_min();
  out.rho0_max = rho0.boundary_max();
  const PlanarField gamma_data = map_inside(rho0, [&](double r) { return table.G(r); });
  out.gamma = harmonic_solve(gamma_data, opts);
  out.rho = map_inside(out.gamma, [&](double g) { return table.G_inverse(g); });
  // Boundary nodes carry the data itself rather than G^{-1}(G(rho0)).
  for (Eigen::Index k = 0; k < rho0.values.size(); ++k)
    if (std::isfinite(rho0.values(k))) out.rho.values(k) = rho0.values(k);
  return out;
}

DensityField solve_reynolds_1d(int nx, double rho_left, double rho_right, const CoefficientTable& table) {
  const PlanarDomain d = PlanarDomain::interval(0.0, 1.0, nx);
  PlanarField data = boundary_data(d, [&](double x, double) { return x < 0.5 ? rho_left : rho_right; });
  check_boundary_range(data, table);
  DensityField out;
  out.rho0_min = std::min(rho_left, rho_right);
  out.rho0_max = std::max(rho_left, rho_right);
  const double gl = table.G(rho_left), gr = table.G(rho_right);
  out.gamma = PlanarField{d, Eigen::VectorXd(d.size())};
  for (int i = 0; i < nx; ++i) out.gamma.values(i) = gl + (gr - gl) * d.x(i);
  out.rho = map_inside(out.gamma, [&](double g) { return table.G_inverse(g); });
  out.rho.values(0) = rho_left;
  out.rho.values(nx - 1) = rho_right;
  return out;
}

double reynolds_residual(const PlanarField& rho, const CoefficientTable& table) {
  const PlanarDomain& d = rho.domain;
  double worst = 0.0;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (d.type(i, j) != PlanarDomain::Node::interior) continue;
      const double r = rho.at(i, j);
      double div = 0.0;
      for (const Neighbour& q : neighbours(d, i, j)) {
        const double h = q.along_x ? d.hx() : d.hy();
        const double rq = rho.at(q.i, q.j);
        div += table.A(0.5 * (r + rq)) * (rq - r) / (h * h);
      }
      worst = std::max(worst, std::abs(div));
    }
  return worst;
}

double transform_consistency(const DensityField& field, const CoefficientTable& table) {
  const PlanarDomain& d = field.rho.domain;
  double worst = 0.0;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (d.type(i, j) != PlanarDomain::Node::interior) continue;
      const double a = table.A(field.rho.at(i, j));
      const double gx = (field.gamma.at(i + 1, j) - field.gamma.at(i - 1, j)) / (2 * d.hx());
      const double rx = (field.rho.at(i + 1, j) - field.rho.at(i - 1, j)) / (2 * d.hx());
      worst = std::max(worst, std::abs(gx - a * rx));
      if (d.one_dimensional()) continue;
      const double gy = (field.gamma.at(i, j + 1) - field.gamma.at(i, j - 1)) / (2 * d.hy());
      const double ry = (field.rho.at(i, j + 1) - field.rho.at(i, j - 1)) / (2 * d.hy());
      worst = std::max(worst, std::abs(gy - a * ry));
    }
  return worst;
}

PlanarField classical_reynolds_reference(const PlanarField& pressure_data,
                                         const std::function<double(double, double)>& film_height, double U,
                                         const EllipticOptions& opts) {
  const PlanarDomain& d = pressure_data.domain;
  auto height = [&](double x, double y) {
    const double h = film_height(x, y);
    if (!(h > 0.0)) throw InvalidArgument("film height must be positive");
    return h;
  };
  const auto face_x = [&](int i, int j) { return std::pow(height(d.x(i) + 0.5 * d.hx(), d.y(j)), 3); };
  const auto face_y = [&](int i, int j) { return std::pow(height(d.x(i), d.y(j) + 0.5 * d.hy()), 3); };
  const auto source = [&](int i, int j) {
    const double y = d.y(j);
    return 6.0 * U * (height(d.x(i) + 0.5 * d.hx(), y) - height(d.x(i) - 0.5 * d.hx(), y)) / d.hx();
  };
  return solve_dirichlet(pressure_data, face_x, face_y, source, opts);
}

void write_field_csv(const std::string& path, const PlanarField& field, const std::string& name) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "x,y," << name << '\n' << std::setprecision(17);
  const PlanarDomain& d = field.domain;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j)
      if (d.inside(i, j)) out << d.x(i) << ',' << (d.one_dimensional() ? 0.0 : d.y(j)) << ',' << field.at(i, j) << '\n';
}

void write_grid_csv(const std::string& path, const PlanarField& field) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << std::setprecision(17);
  const PlanarDomain& d = field.domain;
  for (int j = 0; j < d.ny(); ++j) {
    for (int i = 0; i < d.nx(); ++i) {
      if (i) out << ',';
      if (d.inside(i, j)) out << field.at(i, j);
      else out << "nan";
    }
    out << '\n';
  }
}

void to_json(nlohmann::json& j, const DensityField& field) {
  const PlanarDomain& d = field.rho.domain;
  const char* kind = d.kind() == DomainKind::rectangle ? "rectangle"
                     : d.kind() == DomainKind::graph_bounded ? "graph-bounded"
                                                             : "interval";
  j = nlohmann::json{{"domain", kind},
                     {"nx", d.nx()},
                     {"ny", d.ny()},
                     {"hx", d.hx()},
                     {"hy", d.hy()},
                     {"interior_nodes", d.interior_count()},
                     {"boundary_nodes", d.boundary_count()},
                     {"max_boundary_curvature", d.max_curvature()},
                     {"rho0_min", field.rho0_min},
                     {"rho0_max", field.rho0_max},
                     {"rho_min", field.rho.inside_min()},
                     {"rho_max", field.rho.inside_max()}};
}

}  // namespace kinlub
