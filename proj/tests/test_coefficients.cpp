#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>

#include "kinlub/coefficients.hpp"
#include "kinlub/errors.hpp"

using namespace kinlub;

namespace {

const SlabSetup& default_setup() {
  static const SlabSetup setup = SlabSetup::make(CollisionModel{}, 8, ZGrid(1.0, 64));
  return setup;
}

// A(1) for the default model, order-8 velocity grid, 64 z-nodes, H = 1.
constexpr double kGoldenA1 = 1.05679986164;

}  // namespace

TEST_CASE("A is positive and equals its energy form") {
  for (double rho : {0.5, 1.0, 2.0}) {
    const TransportSolution t = solve_transport(rho, default_setup());
    CHECK(t.A > 0.0);
    CHECK(std::abs(t.A - t.A_energy) <= 1e-6 * t.A);
  }
  CHECK(compute_A(1.0, default_setup()) == doctest::Approx(kGoldenA1).epsilon(1e-10));
  CHECK_THROWS_AS(compute_A(0.0, default_setup()), InvalidArgument);
}

TEST_CASE("isotropy of the transport coefficients") {
  for (double rho : {0.5, 1.0, 2.0}) {
    const CrossCoefficients c = cross_coefficients(rho, default_setup());
    CHECK(std::abs(c.xy) <= 1e-10 * c.xx);
    CHECK(std::abs(c.yx) <= 1e-10 * c.xx);
    CHECK(std::abs(c.xx - c.yy) <= 1e-10 * c.xx);
  }
}

TEST_CASE("A' matches central differences and the resolvent identity holds") {
  const double delta = 1e-3;
  for (double rho : {0.5, 1.0, 2.0}) {
    const double ap = compute_Aprime(rho, default_setup());
    const double fd = (compute_A(rho + delta, default_setup()) - compute_A(rho - delta, default_setup())) / (2 * delta);
    CHECK(std::abs(ap - fd) <= 1e-4 * std::abs(fd));
    CHECK((ap > 0) == (fd > 0));
  }
  CHECK(resolvent_defect(0.7, 1.3, default_setup()) <= 1e-8);
  CHECK(resolvent_defect(2.0, 0.5, default_setup()) <= 1e-8);
}

TEST_CASE("monotone cubic interpolation") {
  // Exact slopes of a cubic reproduce it, and the integral is exact.
  const auto p = [](double x) { return 1.0 + x + 0.3 * x * x + 0.05 * x * x * x; };
  const auto dp = [](double x) { return 1.0 + 0.6 * x + 0.15 * x * x; };
  const auto ip = [](double x) { return x + 0.5 * x * x + 0.1 * x * x * x + 0.0125 * x * x * x * x; };
  std::vector<double> x = {0.0, 0.4, 1.0, 1.5, 2.5}, y, d;
  for (double t : x) {
    y.push_back(p(t));
    d.push_back(dp(t));
  }
  const MonotoneCubic c(x, y, d);
  for (double t : {0.0, 0.1, 0.77, 1.2, 2.0, 2.5}) {
    CHECK(c(t) == doctest::Approx(p(t)).epsilon(1e-13));
    CHECK(c.derivative(t) == doctest::Approx(dp(t)).epsilon(1e-12));
    CHECK(c.integral(t) == doctest::Approx(ip(t)).epsilon(1e-13));
  }

  // Step-like data: the limited interpolant stays monotone between samples.
  const MonotoneCubic step({0, 1, 2, 3, 4}, {0, 0, 1, 1, 1});
  double prev = -1.0;
  for (int i = 0; i <= 400; ++i) {
    const double v = step(i / 100.0);
    CHECK(v >= prev - 1e-15);
    CHECK(v >= -1e-15);
    CHECK(v <= 1.0 + 1e-15);
    prev = v;
  }
  // Oversized slopes get limited.
  const MonotoneCubic wild({0, 1}, {0, 1}, {10, 10});
  CHECK(wild.slopes()[0] * wild.slopes()[0] + wild.slopes()[1] * wild.slopes()[1] <= 9.0 + 1e-12);
  CHECK_THROWS_AS(MonotoneCubic({0, 0}, {1, 2}), InvalidArgument);
}

TEST_CASE("coefficient table invariants and inversion") {
  const CoefficientTable t = tabulate(0.5, 2.0, 16, default_setup());
  CHECK(t.rho_m() == 0.5);
  CHECK(t.G(t.rho_m()) == 0.0);
  CHECK(t.G_values().front() == 0.0);
  for (std::size_t i = 0; i < t.A_values().size(); ++i) CHECK(t.A_values()[i] > 0.0);
  for (std::size_t i = 1; i < t.G_values().size(); ++i) CHECK(t.G_values()[i] > t.G_values()[i - 1]);
  for (double rho : {0.5, 0.61, 1.0, 1.77, 2.0}) {
    CHECK(t.G_inverse(t.G(rho)) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(t.A(rho) > 0.0);
  }
  CHECK_THROWS_AS(t.A(0.4), RangeError);
  CHECK_THROWS_AS(t.G_inverse(-1.0), RangeError);
  CHECK_THROWS_AS(t.G_inverse(t.G_values().back() * 1.01), RangeError);
  CHECK(t.metadata()["grid_order"] == 8);

  const CoefficientTable fine = tabulate(0.5, 2.0, 32, default_setup());
  CHECK(std::abs(fine.G(2.0) - t.G(2.0)) <= 1e-6 * fine.G(2.0));
  // The central-difference check is limited by its own O(h^2) error, so it
  // is made on the finer table (spacing 0.05).
  CHECK(fine.max_derivative_mismatch() <= 1e-3);
  CHECK(fine.max_derivative_mismatch() < t.max_derivative_mismatch());
}

TEST_CASE("table validation, constant tables and persistence") {
  CHECK_THROWS_AS(CoefficientTable({0.5, 1.0, 1.5}, {1.0, -0.1, 1.0}, {0, 0, 0}), ModelViolation);
  CHECK_THROWS_AS(CoefficientTable({0.5, 0.4}, {1.0, 1.0}, {0, 0}), InvalidArgument);
  CHECK_THROWS_AS(tabulate(0.5, 2.0, 4, default_setup()), InvalidArgument);

  const CoefficientTable unit = CoefficientTable::constant(1.0, 0.5, 3.0);
  CHECK(unit.G(2.0) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(unit.G_inverse(0.75) == doctest::Approx(1.25).epsilon(1e-14));

  const CoefficientTable t({0.5, 1.0, 1.5, 2.0}, {1.0, 1.2, 1.5, 1.9}, {0.3, 0.5, 0.7, 0.9});
  const auto dir = std::filesystem::temp_directory_path() / "kinlub_table_test";
  std::filesystem::create_directories(dir);
  t.save_csv((dir / "t.csv").string());
  t.save_json((dir / "t.json").string());
  const CoefficientTable a = CoefficientTable::load_csv((dir / "t.csv").string());
  const CoefficientTable b = CoefficientTable::load_json((dir / "t.json").string());
  CHECK(a.G_values() == t.G_values());
  CHECK(b.G_values() == t.G_values());
  CHECK(b.A(1.3) == t.A(1.3));
  CHECK_THROWS_AS(CoefficientTable::load_csv((dir / "missing.csv").string()), InvalidArgument);
  std::filesystem::remove_all(dir);
}
