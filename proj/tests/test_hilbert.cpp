#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "kinlub/errors.hpp"
#include "kinlub/hilbert.hpp"

using namespace kinlub;

namespace {

const SlabSetup& setup() {
  static const SlabSetup s = SlabSetup::make(CollisionModel{}, 6, ZGrid(1.0, 32));
  return s;
}

const CoefficientTable& table() {
  static const CoefficientTable t = tabulate(0.5, 2.5, 16, setup());
  return t;
}

DensityField solved_2d(int n) {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, n, n);
  return solve_reynolds(boundary_data(d, [](double x, double y) { return 1.0 + 0.6 * x + 0.3 * std::sin(M_PI * y); }),
                        table());
}

// Density that ignores the Reynolds equation: the linear interpolant between
// the end values, with its own Kirchhoff variable.
DensityField linear_interpolant(int n, double left, double right) {
  const PlanarDomain d = PlanarDomain::interval(0, 1, n);
  DensityField f;
  f.rho = PlanarField{d, Eigen::VectorXd(n)};
  f.gamma = PlanarField{d, Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    f.rho.values(i) = left + (right - left) * d.x(i);
    f.gamma.values(i) = table().G(f.rho.values(i));
  }
  f.rho0_min = std::min(left, right);
  f.rho0_max = std::max(left, right);
  return f;
}

double max_finite(const PlanarField& f) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < f.values.size(); ++k)
    if (std::isfinite(f.values(k))) m = std::max(m, std::abs(f.values(k)));
  return m;
}

}  // namespace

TEST_CASE("constant density gives a vanishing expansion") {
  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 7, 7);
  const DensityField rho = solve_reynolds(boundary_data(d, [](double, double) { return 1.3; }), table());
  ExpansionField f = build_g1(rho, setup());
  build_g2(f);
  for (std::size_t k = 0; k < f.g1.size(); ++k) {
    CHECK(f.g1[k].values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(f.g2[k].values.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(max_finite(mass_flux_divergence(f)) == 0.0);
  const auto traces = boundary_traces(f);
  CHECK(trace_norm(traces, 1, setup().grid()) == 0.0);
  CHECK(trace_norm(traces, 2, setup().grid()) == 0.0);
}

TEST_CASE("order-by-order equations on a solved two-dimensional density") {
  TransportCache cache(setup());
  ExpansionField f = build_g1(solved_2d(9), cache);
  const VelocityGrid& grid = setup().grid();
  CHECK(max_expansion_residual(f, 1) <= 1e-9);
  for (const SlabField& g : f.g1) CHECK(z_profile(g, grid.constant(1.0), grid).cwiseAbs().maxCoeff() <= 1e-12);

  // Face fluxes telescope to minus the 5-point Laplacian of gamma, which the
  // harmonic solve drives to zero.
  const PlanarField div = mass_flux_divergence(f);
  const PlanarDomain& d = f.domain();
  for (int i = 1; i + 1 < d.nx(); ++i)
    for (int j = 1; j + 1 < d.ny(); ++j) {
      const auto g = [&](int a, int b) { return f.density.gamma.at(a, b); };
      const double lap = (g(i + 1, j) - 2 * g(i, j) + g(i - 1, j)) / (d.hx() * d.hx()) +
                         (g(i, j + 1) - 2 * g(i, j) + g(i, j - 1)) / (d.hy() * d.hy());
      CHECK(std::abs(div.at(i, j) + lap) <= 1e-9);
    }
  CHECK(max_finite(div) <= 1e-10);

  build_g2(f);
  CHECK(max_expansion_residual(f, 2) <= 1e-9);
  for (Eigen::Index k = 0; k < f.compatibility.size(); ++k)
    if (std::isfinite(f.compatibility(k))) CHECK(std::abs(f.compatibility(k)) <= 1e-10);
  for (std::size_t k = 0; k < f.g2.size(); ++k) {
    REQUIRE(f.g2[k].values.size() > 0);
    const auto [w0, wH] = wall_mass_flux(f.g2[k], grid);
    CHECK(std::abs(w0) <= 1e-8);
    CHECK(std::abs(wH) <= 1e-8);
  }

  const auto traces = boundary_traces(f);
  CHECK(traces.size() == static_cast<std::size_t>(d.boundary_count()));
  for (const LateralTrace& t : traces) {
    const VelocityFunction vn = t.normal.x() * grid.vx() + t.normal.y() * grid.vy();
    for (Eigen::Index v = 0; v < vn.size(); ++v)
      if (vn(v) >= 0.0) {
        CHECK(t.g1.values.col(v).cwiseAbs().maxCoeff() == 0.0);
        CHECK(t.g2.values.col(v).cwiseAbs().maxCoeff() == 0.0);
      }
  }
  const double n1 = trace_norm(traces, 1, grid), n2 = trace_norm(traces, 2, grid);
  CHECK(n1 > 0.0);
  CHECK(std::isfinite(n2));
  CHECK(n2 > 0.0);

  nlohmann::json j = f;
  CHECK(j["has_g2"] == true);
  CHECK(j["distinct_column_solves"].get<std::size_t>() <= cache.size());
}

TEST_CASE("one-dimensional expansion: parity, traces and smoothness") {
  const VelocityGrid& grid = setup().grid();
  double variation[2];
  int slot = 0;
  for (int n : {17, 33}) {
    ExpansionField f = build_g1(solve_reynolds_1d(n, 0.8, 2.2, table()), setup());
    // g1 is odd under v_x -> -v_x: pair node (ix, iy, iz) with (order-1-ix, iy, iz).
    const int o = grid.order();
    for (const SlabField& g : f.g1)
      for (int ix = 0; ix < o; ++ix)
        for (int iy = 0; iy < o; ++iy)
          for (int iz = 0; iz < o; ++iz) {
            const auto a = static_cast<Eigen::Index>(grid.index(ix, iy, iz));
            const auto b = static_cast<Eigen::Index>(grid.index(o - 1 - ix, iy, iz));
            CHECK((g.values.col(a) + g.values.col(b)).cwiseAbs().maxCoeff() <= 1e-12);
          }
    CHECK(max_finite(mass_flux_divergence(f)) <= 1e-10);
    build_g2(f);
    CHECK(max_expansion_residual(f, 2) <= 1e-9);

    const auto traces = boundary_traces(f);
    REQUIRE(traces.size() == 2);
    CHECK(traces[0].normal.x() == -1.0);
    CHECK(traces[1].normal.x() == 1.0);
    for (Eigen::Index v = 0; v < grid.vx().size(); ++v) {
      if (grid.vx()(v) < 0.0) CHECK(traces[0].g1.values.col(v).cwiseAbs().maxCoeff() == 0.0);
      if (grid.vx()(v) > 0.0) CHECK(traces[1].g1.values.col(v).cwiseAbs().maxCoeff() == 0.0);
    }

    // Column-to-column variation of g1 per unit length.
    double worst = 0.0;
    for (int i = 0; i + 1 < n; ++i)
      worst = std::max(worst, slab_norm(SlabField(f.setup.zgrid, f.g1[i + 1].values - f.g1[i].values), grid) /
                                  f.domain().hx());
    variation[slot++] = worst;
  }
  CHECK(variation[1] == doctest::Approx(variation[0]).epsilon(0.1));
}

TEST_CASE("negative control: a density that ignores the Reynolds equation") {
  const DensityField lin = linear_interpolant(17, 0.8, 2.2);
  ExpansionField f = build_g1(lin, setup());
  const PlanarField div = mass_flux_divergence(f);
  // Continuum value: -d/dx (A(rho) rho') = -A'(rho) rho'^2 for linear rho.
  for (int i = 1; i < 16; ++i) {
    const double rho = lin.rho.values(i);
    const double expected = -compute_Aprime(rho, setup()) * 1.4 * 1.4;
    CHECK(div.values(i) == doctest::Approx(expected).epsilon(2e-2));
  }
  // Far above an h^2 threshold (h = 1/16).
  CHECK(max_finite(div) > 100.0 / (16.0 * 16.0));
  try {
    build_g2(f);
    FAIL("expected a solvability failure");
  } catch (const SolvabilityError& e) {
    CHECK(std::abs(e.defect()) > 0.1);
    CHECK(std::string(e.what()).find("node") != std::string::npos);
  }
}

TEST_CASE("transport cache sharing and quantization") {
  TransportCache cache(setup(), 1e-6);
  const auto a = cache.get(1.0);
  const auto b = cache.get(1.0 + 2e-7);
  CHECK(a.get() == b.get());
  CHECK(cache.size() == 1);
  CHECK(cache.key_density(1.2345674) == doctest::Approx(1.234567).epsilon(1e-15));
  CHECK(a->Axx == doctest::Approx(a->Ayy).epsilon(1e-10));
  CHECK(a->Axx == doctest::Approx(compute_A(1.0, setup())).epsilon(1e-12));
  // Reflection gives the same field as a direct solve with v_y.
  const SlabField gy = solve_diffuse(SlabField::uniform(setup().zgrid, setup().grid().vy()), 1.0, setup().op).solution;
  CHECK((gy.values - a->gy.values).cwiseAbs().maxCoeff() <= 1e-9);

  const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 7, 7);
  const DensityField flat = solve_reynolds(boundary_data(d, [](double, double) { return 1.7; }), table());
  TransportCache shared(setup());
  build_g1(flat, shared);
  CHECK(shared.size() == 1);
  CHECK_THROWS_AS(TransportCache(setup(), -1.0), InvalidArgument);
  CHECK_THROWS_AS(cache.get(-1.0), InvalidArgument);
}

TEST_CASE("curved domain and output formats") {
  const PlanarDomain d = PlanarDomain::graph_bounded(
      0, 1, [](double x) { return 0.05 * x * x; }, [](double x) { return 0.6 + 0.1 * std::sin(M_PI * x); }, 13);
  const DensityField rho =
      solve_reynolds(boundary_data(d, [](double x, double y) { return 1.0 + 0.5 * x + 0.2 * y; }), table());
  ExpansionField f = build_g1(rho, setup(), ExpansionOptions{1e-6, 2});
  build_g2(f);
  CHECK(max_expansion_residual(f, 1) <= 1e-9);
  CHECK(max_expansion_residual(f, 2) <= 1e-9);
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j)
      if (d.inside(i, j)) CHECK(f.g2[static_cast<std::size_t>(d.index(i, j))].values.allFinite());

  const auto dir = std::filesystem::temp_directory_path() / "kinlub_hilbert_test";
  std::filesystem::create_directories(dir);
  write_expansion_csv((dir / "e.csv").string(), f);
  write_expansion_binary((dir / "g2.bin").string(), f, 2);
  std::ifstream csv(dir / "e.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("x,y,rho,", 0) == 0);
  std::ifstream bin(dir / "g2.bin", std::ios::binary);
  std::int64_t dims[4];
  bin.read(reinterpret_cast<char*>(dims), sizeof dims);
  CHECK(dims[0] == d.nx());
  CHECK(dims[1] == d.ny());
  CHECK(dims[2] == 32);
  CHECK(dims[3] == 216);
  CHECK(std::filesystem::file_size(dir / "g2.bin") ==
        sizeof dims + static_cast<std::uintmax_t>(d.nx() * d.ny() * 32 * 216) * sizeof(double));
  std::filesystem::remove_all(dir);
}
