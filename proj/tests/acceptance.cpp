// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kinlub/remainder.hpp"

using namespace kinlub;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Outcome&)> body;
};

const SlabSetup& default_setup() {
  static const SlabSetup s = SlabSetup::make(CollisionModel{}, 8, ZGrid(1.0, 64));
  return s;
}

const SlabSetup& expansion_setup() {
  static const SlabSetup s = SlabSetup::make(CollisionModel{}, 6, ZGrid(1.0, 32));
  return s;
}

double max_finite(const PlanarField& f) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < f.values.size(); ++k)
    if (std::isfinite(f.values(k))) m = std::max(m, std::abs(f.values(k)));
  return m;
}

SlabField random_compatible(const SlabSetup& s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  const SlabSolver solver(s.op, s.zgrid, 1.0);
  SlabField h(s.zgrid, static_cast<Eigen::Index>(s.grid().size()));
  for (Eigen::Index i = 0; i < h.values.size(); ++i) h.values.data()[i] = normal(rng);
  h.values.array() -= solver.mean_density(h.values);
  return h;
}

void kernel_spectral(Outcome& o) {
  const CollisionOperator& op = *default_setup().op;
  const VelocityGrid& g = default_setup().grid();
  double annihilation = 0.0;
  for (int j = 0; j < kKernelDim; ++j)
    annihilation = std::max(annihilation, op.apply_L(g.kernel_basis().col(j)).cwiseAbs().maxCoeff());

  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> normal;
  const auto random_function = [&] {
    VelocityFunction f(static_cast<Eigen::Index>(g.size()));
    for (auto& x : f) x = normal(rng);
    return f;
  };
  double adjoint = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const VelocityFunction a = random_function(), b = random_function();
    const double d = std::abs(inner_product(op.apply_L(a), b, g) - inner_product(op.apply_L(b), a, g));
    adjoint = std::max(adjoint, d / std::sqrt(inner_product(a, a, g) * inner_product(b, b, g)));
  }
  const double gap = op.spectral_gap();
  o.detail << "kernel " << annihilation << ", adjoint " << adjoint << ", gap " << gap;
  o.require(annihilation <= 1e-12, "kernel annihilation");
  o.require(adjoint <= 1e-12, "self-adjointness");
  o.require(gap > 0.0, "spectral gap");
}

void slab_oracle(Outcome& o) {
  const SlabSetup s = SlabSetup::make(CollisionModel{}, 4, ZGrid(1.0, 16));
  std::mt19937_64 rng(77);
  const std::vector<SlabField> sources = {SlabField::uniform(s.zgrid, s.grid().vx()),
                                          SlabField::uniform(s.zgrid, s.grid().vy()), random_compatible(s, rng)};
  double worst = 0.0;
  for (double rho : {0.5, 1.0, 2.0}) {
    const SlabSolver solver(s.op, s.zgrid, rho);
    for (const SlabField& h : sources)
      worst = std::max(worst,
                       (solver.solve(h).solution.values - assemble_direct(h, rho, *s.op).values).cwiseAbs().maxCoeff());
  }
  o.detail << "max difference " << worst;
  o.require(worst <= 1e-8, "solve_diffuse vs assemble_direct");
}

// Constant of the bound |g| <= C (1 + 1/rho) |h|, frozen from dense direct
// solves at velocity orders 4, 6, 8 (1.493, 1.547, 1.564 at rho = 4, the
// maximiser of |g| / ((1 + 1/rho) |h|) on the sweep), rounded up.
constexpr double kBoundConstant = 1.6;

void green_and_bound(Outcome& o) {
  const SlabSetup& s = default_setup();
  double green = 0.0;
  for (double rho : {0.5, 1.0, 2.0}) {
    const TransportSolution t = solve_transport(rho, s);
    green = std::max(green, std::abs(t.A - t.A_energy) / std::abs(t.A));
  }
  std::mt19937_64 rng(31);
  const std::vector<SlabField> sources = {SlabField::uniform(s.zgrid, s.grid().vx()),
                                          SlabField::uniform(s.zgrid, s.grid().vy()), random_compatible(s, rng)};
  double worst = 0.0;
  for (int k = 0; k <= 16; ++k) {
    const double rho = 0.25 * std::pow(16.0, k / 16.0);
    const SlabSolver solver(s.op, s.zgrid, rho);
    for (const SlabField& h : sources) {
      const double ratio = slab_norm(solver.solve(h).solution, s.grid()) / slab_norm(h, s.grid());
      worst = std::max(worst, ratio / (1.0 + 1.0 / rho));
    }
  }
  o.detail << "Green " << green << ", max |g|/((1+1/rho)|h|) " << worst << " vs C " << kBoundConstant;
  o.require(green <= 1e-6, "Green identity");
  o.require(worst <= kBoundConstant, "resolvent bound");
}

void coefficient_properties(Outcome& o) {
  const SlabSetup& s = default_setup();
  double amin = std::numeric_limits<double>::infinity();
  double cross = 0.0, diagonal = 0.0;
  for (int k = 0; k < 16; ++k) {
    const double rho = 0.5 + 1.5 * k / 15.0;
    const CrossCoefficients c = cross_coefficients(rho, s);
    amin = std::min(amin, c.xx);
    cross = std::max(cross, std::max(std::abs(c.xy), std::abs(c.yx)) / c.xx);
    diagonal = std::max(diagonal, std::abs(c.xx - c.yy) / c.xx);
  }
  double derivative = 0.0, resolvent = 0.0;
  for (double rho : {0.5, 1.0, 2.0}) {
    const double h = 1e-3 * rho;
    const double fd = (compute_A(rho + h, s) - compute_A(rho - h, s)) / (2 * h);
    derivative = std::max(derivative, std::abs(compute_Aprime(rho, s) - fd) / std::abs(fd));
  }
  for (const auto& [eps, rho] : std::vector<std::pair<double, double>>{{0.8, 1.2}, {0.5, 2.0}, {1.5, 0.7}})
    resolvent = std::max(resolvent, resolvent_defect(eps, rho, s));
  o.detail << "min A " << amin << ", |A_xy|/A " << cross << ", |A_xx-A_yy|/A " << diagonal << ", A' rel "
           << derivative << ", resolvent " << resolvent;
  o.require(amin > 0.0, "A positive");
  o.require(cross <= 1e-10, "A_xy");
  o.require(diagonal <= 1e-10, "A_xx = A_yy");
  o.require(derivative <= 1e-4, "A' vs central differences");
  o.require(resolvent <= 1e-8, "resolvent identity");
}

const CoefficientTable& kinetic_table() {
  static const CoefficientTable t = tabulate(0.5, 2.5, 16, default_setup());
  return t;
}

DensityField harmonic_gamma_solution(int n) {
  const CoefficientTable& t = kinetic_table();
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, n, n);
  const double g0 = t.G(1.5);
  return solve_reynolds(boundary_data(d,
                                      [&](double x, double y) {
                                        return t.G_inverse(g0 + 0.4 * (x - 0.5) +
                                                           0.3 * ((x - 0.5) * (x - 0.5) - (y - 0.5) * (y - 0.5)));
                                      }),
                        t);
}

void reynolds_suite(Outcome& o) {
  const CoefficientTable& t = kinetic_table();
  const PlanarDomain flat_domain = PlanarDomain::rectangle(0, 1, 0, 0.5, 21, 11);
  const DensityField flat = solve_reynolds(boundary_data(flat_domain, [](double, double) { return 1.3; }), t);
  const double flat_dev = (flat.rho.values.array() - 1.3).abs().maxCoeff();

  const CoefficientTable unit = CoefficientTable::constant(1.0, 0.1, 5.0);
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 25, 25);
  const PlanarField data =
      boundary_data(d, [](double x, double y) { return 1.0 + 0.5 * std::sin(3 * x) * std::cos(2 * y); });
  const double harmonic = (solve_reynolds(data, unit).rho.values - harmonic_solve(data).values).cwiseAbs().maxCoeff();

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.6, 2.4);
  const PlanarDomain curved = PlanarDomain::graph_bounded(
      0, 2, [](double x) { return 0.1 * x * x; }, [](double x) { return 1.0 + 0.2 * std::cos(x); }, 41);
  int violations = 0, checked = 0;
  for (const PlanarDomain* dom : {&d, &curved})
    for (int trial = 0; trial < 4; ++trial) {
      const DensityField f = solve_reynolds(boundary_data(*dom, [&](double, double) { return u(rng); }), t);
      for (int i = 0; i < dom->nx(); ++i)
        for (int j = 0; j < dom->ny(); ++j) {
          if (!dom->inside(i, j)) continue;
          ++checked;
          const double r = f.rho.at(i, j);
          if (!(r >= f.rho0_min && r <= f.rho0_max)) ++violations;
        }
    }

  const double r1 = reynolds_residual(harmonic_gamma_solution(17).rho, t);
  const double r2 = reynolds_residual(harmonic_gamma_solution(33).rho, t);
  const double r3 = reynolds_residual(harmonic_gamma_solution(65).rho, t);
  o.detail << "constant " << flat_dev << ", A=1 vs harmonic " << harmonic << ", max principle " << violations << "/"
           << checked << ", residual ratios " << r1 / r2 << " " << r2 / r3;
  o.require(flat_dev <= 2 * std::numeric_limits<double>::epsilon() * 1.3, "constant field");
  o.require(harmonic <= 1e-10, "harmonic oracle");
  o.require(violations == 0 && checked > 0, "maximum principle");
  o.require(std::abs(r1 / r2 - 4.0) <= 0.8 && std::abs(r2 / r3 - 4.0) <= 0.8, "second-order residual");
}

void expansion_consistency(Outcome& o) {
  const SlabSetup& s = expansion_setup();
  const CoefficientTable t = tabulate(0.5, 2.5, 16, s);
  const int n = 17;
  const double h2 = 1.0 / ((n - 1) * (n - 1));

  const DensityField solved = solve_reynolds_1d(n, 0.8, 2.2, t);
  const ExpansionField good = build_g1(solved, s);
  const PlanarDomain square = PlanarDomain::rectangle(0, 1, 0, 1, 9, 9);
  const ExpansionField good2d = build_g1(
      solve_reynolds(boundary_data(square, [](double x, double y) { return 1.0 + 0.6 * x + 0.3 * std::sin(M_PI * y); }),
                     t),
      s);

  DensityField lin;
  const PlanarDomain line = PlanarDomain::interval(0, 1, n);
  lin.rho = PlanarField{line, Eigen::VectorXd(n)};
  lin.gamma = PlanarField{line, Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    lin.rho.values(i) = 0.8 + 1.4 * line.x(i);
    lin.gamma.values(i) = t.G(lin.rho.values(i));
  }
  lin.rho0_min = 0.8;
  lin.rho0_max = 2.2;
  const ExpansionField bad = build_g1(lin, s);

  const double res = std::max({max_expansion_residual(good, 1), max_expansion_residual(good2d, 1),
                               max_expansion_residual(bad, 1)});
  const double div_good = std::max(max_finite(mass_flux_divergence(good)), max_finite(mass_flux_divergence(good2d)));
  const double div_bad = max_finite(mass_flux_divergence(bad));
  o.detail << "column residual " << res << ", divergence solved " << div_good << ", control " << div_bad
           << ", threshold h^2 " << h2;
  o.require(res <= 1e-9, "order-1 residual");
  o.require(div_good < h2, "divergence on the Reynolds solution");
  o.require(div_bad > h2, "negative control");
}

void hydrodynamic_limit(Outcome& o) {
  const CoefficientTable table = tabulate(0.9, 1.575, 16, default_setup());
  const DensityField density = solve_reynolds_1d(32, 1.0, 1.5, table);
  const ExpansionOptions eo{1e-6, 1};
  ExpansionField f = build_g1(density, expansion_setup(), eo);
  build_g2(f, eo);
  RemainderOptions ro;
  const ConvergenceStudy study = convergence_study(f, {0.2, 0.1, 0.05}, ro);
  o.detail << "contraction " << study.max_contraction << ", |r| =";
  for (const StudyRow& r : study.rows) o.detail << ' ' << r.r_norm;
  o.detail << ", variation " << study.r_variation << ", slope " << study.slope;
  o.require(study.all_ok, "Picard convergence");
  o.require(study.max_contraction < 1.0, "contraction");
  o.require(study.r_variation <= 0.5, "remainder variation");
  o.require(study.slope >= 0.85, "slope");
}

void scaling_identity(Outcome& o) {
  const VelocityGrid& g = expansion_setup().grid();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (double eps : {0.2, 0.1, 0.05, 0.01}) {
    SlabField col(ZGrid(1.0, 24), static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index i = 0; i < col.values.size(); ++i) col.values.data()[i] = normal(rng);
    worst = std::max(worst, std::abs(slab_norm(rescale_to_thin(col, eps), g) / (std::sqrt(eps) * slab_norm(col, g)) - 1));

    ThinDomainField r({0.0, 0.3, 0.7, 1.0}, ZGrid(1.0, 12), eps, static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values.data()[i] = normal(rng);
    worst = std::max(worst, std::abs(thin_norm(r, g) / (std::sqrt(eps) * rescaled_norm(r, g)) - 1));
  }
  o.detail << "max relative defect " << worst;
  o.require(worst <= 1e-12, "scaling");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "kernel and spectral suite", 10, kernel_spectral},
      {2, "slab oracle equivalence", 30, slab_oracle},
      {3, "Green identity and resolvent bound", 120, green_and_bound},
      {4, "transport coefficient properties", 300, coefficient_properties},
      {5, "Reynolds suite", 60, reynolds_suite},
      {6, "expansion consistency", 180, expansion_consistency},
      {7, "hydrodynamic limit", 1800, hydrodynamic_limit},
      {8, "thin-domain scaling identity", 1, scaling_identity},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.require(seconds <= c.budget_seconds, "runtime budget");
    if (!o.pass) ++failures;
    std::printf("criterion %d %s: %s (%.2f s of %.0f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", seconds,
                c.budget_seconds, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
