#include "kinlub/coefficients.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "kinlub/errors.hpp"
#include "kinlub/parallel.hpp"

namespace kinlub {

SlabSetup SlabSetup::make(const CollisionModel& model, int velocity_order, ZGrid zgrid, SlabOptions options) {
  SlabSetup s;
  s.op = std::make_shared<const CollisionOperator>(model, VelocityGrid(velocity_order));
  s.zgrid = zgrid;
  s.options = options;
  return s;
}

namespace {

SlabOptions tightened(const SlabOptions& opts) {
  SlabOptions t = opts;
  t.tol = opts.tol / 10.0;
  return t;
}

SlabField solve_for(double rho, const SlabSetup& setup, const SlabField& h, const SlabOptions& opts) {
  return SlabSolver(setup.op, setup.zgrid, rho).solve(h, opts).solution;
}

struct ADerivative {
  double A = 0.0;
  double Aprime = 0.0;
};

ADerivative a_and_aprime(double rho, const SlabSetup& setup) {
  const SlabOptions opts = tightened(setup.options);
  const VelocityFunction vx = setup.grid().vx();
  const SlabSolver solver(setup.op, setup.zgrid, rho);
  const SlabField g = solver.solve(SlabField::uniform(setup.zgrid, vx), opts).solution;
  const SlabField lg(setup.zgrid, setup.op->apply_L_rows(g.values));
  const SlabField dg = solver.solve(lg, opts).solution;
  return {z_integral(g, vx, setup.grid()), -z_integral(dg, vx, setup.grid())};
}

void check_rho(double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be positive and finite");
}

}  // namespace

TransportSolution solve_transport(double rho, const SlabSetup& setup) {
  check_rho(rho);
  const SlabSolver solver(setup.op, setup.zgrid, rho);
  const SlabField h = SlabField::uniform(setup.zgrid, setup.grid().vx());
  SlabSolveReport report = solver.solve(h, setup.options);
  TransportSolution t;
  t.rho = rho;
  t.A = z_integral(report.solution, setup.grid().vx(), setup.grid());
  t.A_energy = report.boundary_defect + report.dirichlet_form;
  t.g = std::move(report.solution);
  return t;
}

double compute_A(double rho, const SlabSetup& setup) { return solve_transport(rho, setup).A; }

double compute_Aprime(double rho, const SlabSetup& setup) {
  check_rho(rho);
  return a_and_aprime(rho, setup).Aprime;
}

CrossCoefficients cross_coefficients(double rho, const SlabSetup& setup) {
  check_rho(rho);
  const VelocityGrid& grid = setup.grid();
  const VelocityFunction vx = grid.vx(), vy = grid.vy();
  const SlabField gx = solve_for(rho, setup, SlabField::uniform(setup.zgrid, vx), setup.options);
  const SlabField gy = solve_for(rho, setup, SlabField::uniform(setup.zgrid, vy), setup.options);
  CrossCoefficients c;
  c.xx = z_integral(gx, vx, grid);
  c.xy = z_integral(gy, vx, grid);
  c.yx = z_integral(gx, vy, grid);
  c.yy = z_integral(gy, vy, grid);
  return c;
}

double resolvent_defect(double epsilon, double rho, const SlabSetup& setup) {
  check_rho(epsilon);
  check_rho(rho);
  const SlabOptions opts = tightened(setup.options);
  const SlabField h = SlabField::uniform(setup.zgrid, setup.grid().vx());
  const SlabField a = solve_for(rho, setup, h, opts);
  const SlabField b = solve_for(epsilon, setup, h, opts);
  const SlabField la(setup.zgrid, setup.op->apply_L_rows(a.values));
  const SlabField c = solve_for(epsilon, setup, la, opts);
  const Eigen::MatrixXd defect = b.values - a.values - (rho - epsilon) * c.values;
  return defect.cwiseAbs().maxCoeff() / a.values.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y, std::vector<double> slopes)
    : x_(std::move(x)), y_(std::move(y)), d_(std::move(slopes)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw InvalidArgument("MonotoneCubic: need >= 2 matching samples");
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (!(x_[i + 1] > x_[i])) throw InvalidArgument("MonotoneCubic: abscissae must increase strictly");
  }
  std::vector<double> secant(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) secant[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);

  if (d_.empty()) {
    d_.resize(n);
    d_.front() = secant.front();
    d_.back() = secant.back();
    for (std::size_t i = 1; i + 1 < n; ++i) d_[i] = 0.5 * (secant[i - 1] + secant[i]);
  } else if (d_.size() != n) {
    throw InvalidArgument("MonotoneCubic: slope count mismatch");
  }

  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (secant[i - 1] * secant[i] <= 0.0) d_[i] = 0.0;
  }
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (secant[k] == 0.0) {
      d_[k] = d_[k + 1] = 0.0;
      continue;
    }
    double alpha = d_[k] / secant[k];
    double beta = d_[k + 1] / secant[k];
    if (alpha < 0.0) d_[k] = alpha = 0.0;
    if (beta < 0.0) d_[k + 1] = beta = 0.0;
    const double r2 = alpha * alpha + beta * beta;
    if (r2 > 9.0) {
      const double tau = 3.0 / std::sqrt(r2);
      d_[k] = tau * alpha * secant[k];
      d_[k + 1] = tau * beta * secant[k];
    }
  }

  cumulative_.assign(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double h = x_[k + 1] - x_[k];
    cumulative_[k + 1] = cumulative_[k] + h * (0.5 * (y_[k] + y_[k + 1]) + h * (d_[k] - d_[k + 1]) / 12.0);
  }
}

std::size_t MonotoneCubic::segment(double t) const {
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - x_.begin() - 1, 0));
  return std::min(idx, x_.size() - 2);
}

double MonotoneCubic::operator()(double t) const {
  const std::size_t k = segment(t);
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return y_[k] * (2 * s3 - 3 * s2 + 1) + h * d_[k] * (s3 - 2 * s2 + s) + y_[k + 1] * (3 * s2 - 2 * s3) +
         h * d_[k + 1] * (s3 - s2);
}

double MonotoneCubic::derivative(double t) const {
  const std::size_t k = segment(t);
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s;
  return (y_[k + 1] - y_[k]) * (6 * s - 6 * s2) / h + d_[k] * (3 * s2 - 4 * s + 1) + d_[k + 1] * (3 * s2 - 2 * s);
}

double MonotoneCubic::integral(double t) const {
  const std::size_t k = segment(t);
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
  const double part = y_[k] * (0.5 * s4 - s3 + s) + h * d_[k] * (0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2) +
                      y_[k + 1] * (s3 - 0.5 * s4) + h * d_[k + 1] * (0.25 * s4 - s3 / 3.0);
  return cumulative_[k] + h * part;
}

// ---------------------------------------------------------------------------

CoefficientTable::CoefficientTable(std::vector<double> rho, std::vector<double> A, std::vector<double> Aprime)
    : rho_(std::move(rho)), A_(std::move(A)), Aprime_(std::move(Aprime)) {
  const std::size_t n = rho_.size();
  if (n < 2 || A_.size() != n || Aprime_.size() != n) {
    throw InvalidArgument("coefficient table needs >= 2 samples of rho, A and A'");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(rho_[i]) || !std::isfinite(A_[i]) || !std::isfinite(Aprime_[i])) {
      throw InvalidArgument("coefficient table has non-finite entries");
    }
    if (!(rho_[i] > 0.0)) throw InvalidArgument("coefficient table rho samples must be positive");
    if (i > 0 && !(rho_[i] > rho_[i - 1])) throw InvalidArgument("rho samples must increase strictly");
    if (!(A_[i] > 0.0)) {
      std::ostringstream msg;
      msg << "A(" << rho_[i] << ") = " << A_[i] << " is not positive";
      throw ModelViolation(msg.str());
    }
  }
  interp_ = MonotoneCubic(rho_, A_, Aprime_);
  G_.resize(n);
  for (std::size_t i = 0; i < n; ++i) G_[i] = interp_.integral(rho_[i]);
  G_[0] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(G_[i] > G_[i - 1])) throw ModelViolation("G is not strictly increasing");
  }
}

CoefficientTable CoefficientTable::constant(double value, double rho_min, double rho_max, int samples) {
  if (samples < 2 || !(rho_max > rho_min)) throw InvalidArgument("constant table: bad range");
  std::vector<double> rho(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) rho[static_cast<std::size_t>(i)] = rho_min + (rho_max - rho_min) * i / (samples - 1);
  CoefficientTable t(rho, std::vector<double>(rho.size(), value), std::vector<double>(rho.size(), 0.0));
  t.set_metadata({{"kind", "constant"}, {"value", value}});
  return t;
}

void CoefficientTable::check_range(double rho) const {
  if (rho_.empty()) throw InvalidArgument("empty coefficient table");
  const double slack = 1e-12 * (rho_.back() - rho_.front());
  if (!(rho >= rho_.front() - slack && rho <= rho_.back() + slack)) {
    std::ostringstream msg;
    msg << "rho = " << rho << " outside the table range [" << rho_.front() << ", " << rho_.back() << "]";
    throw RangeError(msg.str());
  }
}

double CoefficientTable::A(double rho) const {
  check_range(rho);
  return interp_(rho);
}

double CoefficientTable::G(double rho) const {
  check_range(rho);
  return interp_.integral(rho);
}

double CoefficientTable::G_inverse(double gamma) const {
  if (rho_.empty()) throw InvalidArgument("empty coefficient table");
  const double top = G_.back();
  const double slack = 1e-12 * (1.0 + top);
  if (!(gamma >= -slack && gamma <= top + slack)) {
    std::ostringstream msg;
    msg << "gamma = " << gamma << " outside [0, " << top << "]";
    throw RangeError(msg.str());
  }
  if (gamma <= 0.0) return rho_.front();
  if (gamma >= top) return rho_.back();
  // Bracket within one sample interval first, then refine with TOMS 748.
  const auto it = std::upper_bound(G_.begin(), G_.end(), gamma);
  const auto k = static_cast<std::size_t>(it - G_.begin()) - 1;
  double lo = rho_[k], hi = rho_[k + 1];
  const auto f = [&](double r) { return interp_.integral(r) - gamma; };
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  std::uintmax_t iters = 200;
  const auto bracket = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                         boost::math::tools::eps_tolerance<double>(52), iters);
  const double root = 0.5 * (bracket.first + bracket.second);
  if (std::abs(f(root)) > 1e-12 * (1.0 + std::abs(gamma))) {
    throw ConvergenceError("G inversion did not reach tolerance", {std::abs(f(root))});
  }
  return root;
}

double CoefficientTable::max_derivative_mismatch() const {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < rho_.size(); ++i) {
    const double fd = (A_[i + 1] - A_[i - 1]) / (rho_[i + 1] - rho_[i - 1]);
    const double scale = std::max(std::abs(Aprime_[i]), std::abs(fd));
    if (scale > 0.0) worst = std::max(worst, std::abs(Aprime_[i] - fd) / scale);
  }
  return worst;
}

void CoefficientTable::set_metadata(const nlohmann::json& meta) { meta_ = meta.dump(); }

nlohmann::json CoefficientTable::metadata() const { return nlohmann::json::parse(meta_); }

void to_json(nlohmann::json& j, const CoefficientTable& t) {
  j = nlohmann::json{{"rho_m", t.rho_m()},
                     {"rho", t.rho_samples()},
                     {"A", t.A_values()},
                     {"Aprime", t.Aprime_values()},
                     {"G", t.G_values()},
                     {"metadata", t.metadata()}};
}

void CoefficientTable::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << "rho,A,Aprime,G\n" << std::setprecision(17);
  for (std::size_t i = 0; i < rho_.size(); ++i) {
    out << rho_[i] << ',' << A_[i] << ',' << Aprime_[i] << ',' << G_[i] << '\n';
  }
}

void CoefficientTable::save_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << nlohmann::json(*this).dump(2) << '\n';
}

CoefficientTable CoefficientTable::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("rho,A,Aprime", 0) != 0) throw InvalidArgument(path + ": unexpected CSV header");
  std::vector<double> rho, a, ap;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 3) throw InvalidArgument(path + ": short CSV row");
    rho.push_back(row[0]);
    a.push_back(row[1]);
    ap.push_back(row[2]);
  }
  return CoefficientTable(rho, a, ap);
}

CoefficientTable CoefficientTable::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    CoefficientTable t(j.at("rho").get<std::vector<double>>(), j.at("A").get<std::vector<double>>(),
                       j.at("Aprime").get<std::vector<double>>());
    if (j.contains("metadata")) t.set_metadata(j["metadata"]);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

CoefficientTable tabulate(double rho_min, double rho_max, int n_samples, const SlabSetup& setup, int threads) {
  if (!(rho_min > 0.0) || !(rho_max > rho_min)) throw InvalidArgument("tabulate: need 0 < rho_min < rho_max");
  if (n_samples < 8) throw InvalidArgument("tabulate: need at least 8 samples");
  const auto n = static_cast<std::size_t>(n_samples);
  std::vector<double> rho(n), a(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho[i] = rho_min + (rho_max - rho_min) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  parallel_for(n, threads, [&](std::size_t i) {
    const ADerivative d = a_and_aprime(rho[i], setup);
    a[i] = d.A;
    ap[i] = d.Aprime;
  });
  CoefficientTable table(rho, a, ap);
  const auto& model = setup.op->model();
  table.set_metadata({{"grid_order", setup.grid().order()},
                      {"z_nodes", setup.zgrid.nodes},
                      {"height", setup.zgrid.height},
                      {"model_kind", model.kind == CollisionKind::plugin ? "plugin" : "weighted-bgk"},
                      {"nu_const", model.nu_const},
                      {"nu_slope", model.nu_slope},
                      {"k0", model.k0},
                      {"solver_tol", setup.options.tol}});
  return table;
}

}  // namespace kinlub
