#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "kinlub/errors.hpp"
#include "kinlub/reynolds.hpp"

using namespace kinlub;

namespace {

const CoefficientTable& kinetic_table() {
  static const CoefficientTable table = [] {
    const SlabSetup setup = SlabSetup::make(CollisionModel{}, 8, ZGrid(1.0, 64));
    return tabulate(0.5, 2.5, 16, setup);
  }();
  return table;
}

bool maximum_principle_holds(const DensityField& f) {
  const PlanarDomain& d = f.rho.domain;
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) {
      if (!d.inside(i, j)) continue;
      const double r = f.rho.at(i, j);
      if (r < f.rho0_min - 1e-12 || r > f.rho0_max + 1e-12 || !(r > 0.0)) return false;
    }
  return true;
}

// Boundary data whose Kirchhoff transform is exactly discrete-harmonic, so
// gamma is known in closed form and only the inversion and the residual
// discretisation remain.
DensityField smooth_solution(int n, const CoefficientTable& t) {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, n, n);
  const double g0 = t.G(1.5);
  const auto gamma = [g0](double x, double y) {
    return g0 + 0.4 * (x - 0.5) + 0.3 * ((x - 0.5) * (x - 0.5) - (y - 0.5) * (y - 0.5));
  };
  return solve_reynolds(boundary_data(d, [&](double x, double y) { return t.G_inverse(gamma(x, y)); }), t);
}

// p(x) for (H^3 p')' = 6 U H' on [0, 1], p(0) = p(1) = 0, H = h0 + s x.
double channel_pressure(double x, double h0, double s, double U) {
  const auto i2 = [&](double t) { return (1.0 / h0 - 1.0 / (h0 + s * t)) / s; };
  const auto i3 = [&](double t) { return (1.0 / (h0 * h0) - 1.0 / ((h0 + s * t) * (h0 + s * t))) / (2 * s); };
  const double c = -6.0 * U * i2(1.0) / i3(1.0);
  return 6.0 * U * i2(x) + c * i3(x);
}

}  // namespace

TEST_CASE("domain construction and classification") {
  const PlanarDomain r = PlanarDomain::rectangle(0, 2, 0, 1, 9, 5);
  CHECK(r.hx() == doctest::Approx(0.25));
  CHECK(r.hy() == doctest::Approx(0.25));
  CHECK(r.interior_count() == 7 * 3);
  CHECK(r.boundary_count() == 9 * 5 - 21);
  CHECK(r.max_curvature() == 0.0);

  const PlanarDomain line = PlanarDomain::interval(0, 1, 11);
  CHECK(line.ny() == 1);
  CHECK(line.interior_count() == 9);
  CHECK(line.boundary_count() == 2);

  const PlanarDomain g = PlanarDomain::graph_bounded(
      0, 1, [](double) { return 0.0; }, [](double x) { return 0.6 + 0.2 * std::sin(M_PI * x); }, 41);
  CHECK(g.interior_count() > 0);
  CHECK(g.max_curvature() == doctest::Approx(0.2 * M_PI * M_PI).epsilon(1e-2));
  for (int i = 0; i < g.nx(); ++i) CHECK(g.type(i, 0) == PlanarDomain::Node::boundary);

  CHECK_THROWS_AS(PlanarDomain::rectangle(0, 1, 0, 1, 2, 5), InvalidDomain);
  CHECK_THROWS_AS(PlanarDomain::rectangle(1, 0, 0, 1, 5, 5), InvalidDomain);
  CHECK_THROWS_AS(PlanarDomain::interval(0, 1, 2), InvalidDomain);
  CHECK_THROWS_AS(PlanarDomain::graph_bounded(
                      0, 1, [](double) { return 0.0; }, [](double) { return 0.01; }, 11),
                  InvalidDomain);
}

TEST_CASE("harmonic solve examples") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 17, 17);
  const PlanarField c = harmonic_solve(boundary_data(d, [](double, double) { return 3.25; }));
  for (Eigen::Index k = 0; k < c.values.size(); ++k) CHECK(c.values(k) == doctest::Approx(3.25).epsilon(1e-14));

  const PlanarField x = harmonic_solve(boundary_data(d, [](double x, double) { return x; }));
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) CHECK(std::abs(x.at(i, j) - d.x(i)) <= 1e-12);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const PlanarField f = harmonic_solve(boundary_data(d, [&](double, double) { return u(rng); }));
    CHECK(f.inside_min() >= f.boundary_min() - 1e-12);
    CHECK(f.inside_max() <= f.boundary_max() + 1e-12);
  }

  PlanarField bad = boundary_data(d, [](double, double) { return 0.0; });
  bad.values(0) = std::nan("");
  CHECK_THROWS_AS(harmonic_solve(bad), InvalidArgument);
}

TEST_CASE("constant boundary density gives a constant field") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 0.5, 21, 11);
  const DensityField f = solve_reynolds(boundary_data(d, [](double, double) { return 1.0; }), kinetic_table());
  for (Eigen::Index k = 0; k < f.rho.values.size(); ++k)
    CHECK(std::abs(f.rho.values(k) - 1.0) <= 4 * std::numeric_limits<double>::epsilon());
  CHECK(reynolds_residual(f.rho, kinetic_table()) == 0.0);
}

TEST_CASE("constant A reduces to the harmonic problem") {
  const CoefficientTable unit = CoefficientTable::constant(1.0, 0.1, 5.0);
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 25, 25);
  const PlanarField data = boundary_data(d, [](double x, double y) { return 1.0 + 0.5 * std::sin(3 * x) * std::cos(2 * y); });
  const DensityField f = solve_reynolds(data, unit);
  const PlanarField h = harmonic_solve(data);
  CHECK((f.rho.values - h.values).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("maximum principle on every node") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.6, 2.4);
  const PlanarDomain rect = PlanarDomain::rectangle(0, 1, 0, 1, 21, 21);
  const PlanarDomain curved = PlanarDomain::graph_bounded(
      0, 2, [](double x) { return 0.1 * x * x; }, [](double x) { return 1.0 + 0.2 * std::cos(x); }, 41);
  for (const PlanarDomain* d : {&rect, &curved}) {
    for (int trial = 0; trial < 3; ++trial) {
      const DensityField f = solve_reynolds(boundary_data(*d, [&](double, double) { return u(rng); }), kinetic_table());
      CHECK(maximum_principle_holds(f));
      CHECK(f.rho.inside_min() >= f.rho0_min - 1e-12);
      CHECK(f.rho.inside_max() <= f.rho0_max + 1e-12);
    }
  }
}

TEST_CASE("residual converges at second order and flags perturbed fields") {
  const CoefficientTable& t = kinetic_table();
  const double r1 = reynolds_residual(smooth_solution(17, t).rho, t);
  const double r2 = reynolds_residual(smooth_solution(33, t).rho, t);
  const double r3 = reynolds_residual(smooth_solution(65, t).rho, t);
  MESSAGE("residuals " << r1 << " " << r2 << " " << r3);
  CHECK(r1 / r2 == doctest::Approx(4.0).epsilon(0.2));
  CHECK(r2 / r3 == doctest::Approx(4.0).epsilon(0.2));

  DensityField f = smooth_solution(33, t);
  CHECK(transform_consistency(f, t) <= 1e-2 * 0.4 / 32);
  f.rho.values(f.rho.domain.index(16, 16)) += 1e-3;
  CHECK(reynolds_residual(f.rho, t) > 100 * r2);
}

TEST_CASE("direct construction does not depend on the start vector") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 21, 21);
  const PlanarField data = boundary_data(d, [](double x, double y) { return 1.0 + 0.8 * x * y; });
  EllipticOptions a, b;
  a.initial_guess = Eigen::VectorXd::Zero(d.size());
  b.initial_guess = Eigen::VectorXd::Constant(d.size(), 7.0);
  const DensityField fa = solve_reynolds(data, kinetic_table(), a);
  const DensityField fb = solve_reynolds(data, kinetic_table(), b);
  CHECK((fa.rho.values - fb.rho.values).cwiseAbs().maxCoeff() <= 1e-11);
}

TEST_CASE("range checks") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 9, 9);
  CHECK_THROWS_AS(solve_reynolds(boundary_data(d, [](double, double) { return 3.0; }), kinetic_table()), RangeError);
  CHECK_THROWS_AS(solve_reynolds(boundary_data(d, [](double, double) { return 0.5; }), kinetic_table()), RangeError);
  CHECK_THROWS_AS(solve_reynolds_1d(9, 0.4, 1.0, kinetic_table()), RangeError);
}

TEST_CASE("one-dimensional solve") {
  const CoefficientTable& t = kinetic_table();
  const DensityField f = solve_reynolds_1d(101, 0.8, 2.2, t);
  CHECK(f.rho.values(0) == 0.8);
  CHECK(f.rho.values(100) == 2.2);
  for (int i = 1; i < 101; ++i) CHECK(f.rho.values(i) > f.rho.values(i - 1));
  CHECK(reynolds_residual(f.rho, t) <= 1e-3);
  // The flux A(rho) rho' is constant and equals G(2.2) - G(0.8).
  CHECK(t.A(f.rho.values(50)) * (f.rho.values(51) - f.rho.values(49)) / 0.02 ==
        doctest::Approx(t.G(2.2) - t.G(0.8)).epsilon(1e-3));
}

TEST_CASE("classical Reynolds baseline") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 17, 17);
  const PlanarField zero = boundary_data(d, [](double, double) { return 0.0; });
  const PlanarField p0 = classical_reynolds_reference(boundary_data(d, [](double, double) { return 2.0; }),
                                                      [](double x, double) { return 1.0 + 0.5 * x; }, 0.0);
  CHECK((p0.values.array() - 2.0).abs().maxCoeff() <= 1e-12);
  const PlanarField px = classical_reynolds_reference(boundary_data(d, [](double x, double) { return x; }),
                                                      [](double, double) { return 0.7; }, 0.0);
  CHECK((px.values - harmonic_solve(boundary_data(d, [](double x, double) { return x; })).values)
            .cwiseAbs()
            .maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(classical_reynolds_reference(zero, [](double, double) { return -1.0; }, 1.0), InvalidArgument);

  const int n = 4097;
  const PlanarDomain line = PlanarDomain::interval(0, 1, n);
  const double h0 = 1.0, s = -0.5, U = 1.0;
  const PlanarField p = classical_reynolds_reference(boundary_data(line, [](double, double) { return 0.0; }),
                                                     [&](double x, double) { return h0 + s * x; }, U);
  double err = 0.0, peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double exact = channel_pressure(line.x(i), h0, s, U);
    err = std::max(err, std::abs(p.values(i) - exact));
    peak = std::max(peak, std::abs(exact));
  }
  MESSAGE("channel error " << err << " peak " << peak);
  CHECK(peak > 0.1);
  CHECK(err <= 1e-6);
}

TEST_CASE("field output") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 5, 5);
  const DensityField f = solve_reynolds(boundary_data(d, [](double x, double) { return 1.0 + x; }), kinetic_table());
  const auto dir = std::filesystem::temp_directory_path() / "kinlub_reynolds_test";
  std::filesystem::create_directories(dir);
  write_field_csv((dir / "rho.csv").string(), f.rho, "rho");
  write_grid_csv((dir / "grid.csv").string(), f.rho);
  std::ifstream in(dir / "rho.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,y,rho");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 25);
  nlohmann::json j = f;
  CHECK(j["domain"] == "rectangle");
  CHECK(j["rho_max"].get<double>() == doctest::Approx(2.0));
  std::filesystem::remove_all(dir);
}
