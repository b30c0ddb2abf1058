#include <doctest.h>

#include <cmath>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>

#include "kinlub/errors.hpp"
#include "kinlub/slab.hpp"

using namespace kinlub;

namespace {

std::shared_ptr<const CollisionOperator> make_op(int order) {
  return std::make_shared<const CollisionOperator>(CollisionModel{}, VelocityGrid(order));
}

SlabField random_compatible(const SlabSolver& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  SlabField h(s.zgrid(), static_cast<Eigen::Index>(s.grid().size()));
  for (Eigen::Index i = 0; i < h.values.size(); ++i) h.values.data()[i] = normal(rng);
  h.values.array() -= s.mean_density(h.values);
  return h;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("z-grid and slab field basics") {
  const ZGrid z(2.0, 5);
  CHECK(z.cells() == 4);
  CHECK(z.dz() == 0.5);
  CHECK(z.trapezoid().sum() == doctest::Approx(2.0));
  CHECK_THROWS_AS(ZGrid(0.0, 5), InvalidArgument);
  CHECK_THROWS_AS(ZGrid(1.0, 1), InvalidArgument);
  const VelocityGrid g(4);
  const SlabField u = SlabField::uniform(z, g.vx());
  CHECK(u.values.rows() == 5);
  CHECK(z_integral(u, g.vx(), g) == doctest::Approx(2.0));
}

TEST_CASE("exponential cell") {
  const CellCoefficients c = exponential_cell(2.0, 0.5, 0.1);
  CHECK(c.decay == doctest::Approx(std::exp(-0.4)));
  // Constant source q: g_out = decay g_in + (1 - decay) q / sigma.
  CHECK(c.up + c.down == doctest::Approx((1.0 - std::exp(-0.4)) / 2.0));
  const CellCoefficients tiny = exponential_cell(1.0, 1.0, 1e-9);
  CHECK(tiny.up == doctest::Approx(0.5e-9).epsilon(1e-6));
  CHECK(tiny.down == doctest::Approx(0.5e-9).epsilon(1e-6));
  const CellCoefficients grazing = exponential_cell(3.0, 1e-4, 0.05);
  CHECK(std::isfinite(grazing.up));
  CHECK(grazing.decay == 0.0);
  CHECK(grazing.down == doctest::Approx((1.0 - 1.0 / 1500.0) / 3.0));
  CHECK(grazing.up == doctest::Approx(1.0 / 1500.0 / 3.0));
}

TEST_CASE("transport sweep closed forms") {
  const auto op = make_op(4);
  const VelocityGrid& g = op->grid();
  const ZGrid z(1.0, 33);
  const double rho = 1.5;
  const auto nv = static_cast<Eigen::Index>(g.size());
  const VelocityFunction inflow = VelocityFunction::LinSpaced(nv, 1.0, 2.0);
  const VelocityFunction zero = VelocityFunction::Zero(nv);

  SlabField none(z, nv);
  CHECK(max_abs(transport_sweep(none, rho, zero, zero, *op).values) == 0.0);

  const SlabField decay = transport_sweep(none, rho, inflow, inflow, *op);
  double err = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k) {
    const double vz = g.nodes()(k, 2);
    for (int j = 0; j < z.nodes; ++j) {
      const double dist = vz > 0 ? z.z(j) : z.height - z.z(j);
      err = std::max(err, std::abs(decay.values(j, k) - inflow(k) * std::exp(-rho * op->nu()(k) * dist / std::abs(vz))));
    }
  }
  CHECK(err <= 1e-13);

  SlabField source(z, nv);
  for (Eigen::Index k = 0; k < nv; ++k) source.values.col(k).setConstant(rho * op->rate()(k));
  const SlabField filled = transport_sweep(source, rho, zero, zero, *op);
  err = 0.0;
  for (Eigen::Index k = 0; k < nv; ++k) {
    const double vz = g.nodes()(k, 2);
    if (vz <= 0) continue;
    for (int j = 0; j < z.nodes; ++j) {
      err = std::max(err, std::abs(filled.values(j, k) - (1.0 - std::exp(-rho * op->nu()(k) * z.z(j) / vz))));
    }
  }
  CHECK(err <= 1e-13);
  CHECK_THROWS_AS(transport_sweep(none, 0.0, zero, zero, *op), InvalidArgument);
}

TEST_CASE("zero right-hand side gives the zero solution") {
  const SlabSolver s(make_op(4), ZGrid(1.0, 16), 1.0);
  const SlabField h(s.zgrid(), static_cast<Eigen::Index>(s.grid().size()));
  const SlabSolveReport r = s.solve(h);
  CHECK(max_abs(r.solution.values) == 0.0);
  CHECK(max_abs(assemble_direct(h, 1.0, s.op()).values) == 0.0);
}

TEST_CASE("h = v_x: parity, normalization, walls and Green identity") {
  const auto op = make_op(6);
  const VelocityGrid& g = op->grid();
  for (double rho : {0.5, 1.0, 2.0}) {
    const SlabSolver s(op, ZGrid(1.0, 64), rho);
    const SlabField h = SlabField::uniform(s.zgrid(), g.vx());
    const SlabSolveReport r = s.solve(h);
    const Eigen::MatrixXd& sol = r.solution.values;
    CHECK(r.residual <= 1e-10);
    CHECK(s.max_residual(r.solution, h) <= 1e-9);

    // Odd in v_x: g(v_x -> -v_x) = -g.
    double parity = 0.0;
    const int n = g.order();
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy)
        for (int iz = 0; iz < n; ++iz) {
          const auto a = static_cast<Eigen::Index>(g.index(ix, iy, iz));
          const auto b = static_cast<Eigen::Index>(g.index(n - 1 - ix, iy, iz));
          parity = std::max(parity, (sol.col(a) + sol.col(b)).cwiseAbs().maxCoeff());
        }
    CHECK(parity <= 1e-12 * max_abs(sol));
    CHECK(r.max_pointwise_density <= 1e-12);

    const auto [f0, fH] = wall_mass_flux(r.solution, g);
    CHECK(std::abs(f0) <= 1e-10);
    CHECK(std::abs(fH) <= 1e-10);

    const double rhs = s.cell_pair_integral(sol, h.values);
    const double lhs = r.boundary_defect + r.dirichlet_form;
    CHECK(r.boundary_defect >= 0.0);
    CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(rhs));

    const auto moments = moment_profiles(r.solution, g);
    for (const auto& m : moments) {
      CHECK(std::abs(m.b(2)) <= 1e-12);
      CHECK(std::abs(m.c) <= 1e-12);
      CHECK(std::abs(m.a) <= 1e-12);
    }
  }
}

TEST_CASE("direct assembly agrees with the iterative solver") {
  for (int order : {4, 5}) {
    const auto op = make_op(order);
    const VelocityGrid& g = op->grid();
    const SlabSolver s(op, ZGrid(1.0, 16), 1.0);
    std::vector<SlabField> cases = {SlabField::uniform(s.zgrid(), g.vx()),
                                    SlabField::uniform(s.zgrid(), g.vy()),
                                    random_compatible(s, 7)};
    for (const auto& h : cases) {
      const SlabField it = s.solve(h).solution;
      const SlabField direct = assemble_direct(h, 1.0, *op);
      CHECK(max_abs(it.values - direct.values) <= 1e-8);
    }
  }
  const auto big = make_op(8);
  const SlabField h(ZGrid(1.0, 128), static_cast<Eigen::Index>(big->grid().size()));
  CHECK_THROWS_AS(assemble_direct(h, 1.0, *big), InvalidArgument);
}

TEST_CASE("source iteration agrees with the Krylov solve") {
  const SlabSolver s(make_op(4), ZGrid(1.0, 24), 0.8);
  const SlabField h = random_compatible(s, 3);
  SlabOptions si;
  si.method = SlabOptions::Method::source_iteration;
  si.tol = 1e-13;
  const SlabSolveReport a = s.solve(h);
  const SlabSolveReport b = s.solve(h, si);
  CHECK(max_abs(a.solution.values - b.solution.values) <= 1e-9);
  CHECK(b.iterations > a.iterations);
}

TEST_CASE("incompatible data and iteration caps") {
  const SlabSolver s(make_op(4), ZGrid(1.0, 16), 1.0);
  const SlabField h = SlabField::uniform(s.zgrid(), s.grid().constant(1.0));
  CHECK_THROWS_AS(s.solve(h), SolvabilityError);
  SlabOptions capped;
  capped.max_iterations = 2;
  capped.tol = 1e-14;
  try {
    (void)s.solve(random_compatible(s, 1), capped);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(!e.history().empty());
  }
  CHECK_THROWS_AS(SlabSolver(make_op(4), ZGrid(1.0, 8), -1.0), InvalidArgument);
  CHECK_THROWS_AS(SlabSolver(nullptr, ZGrid(1.0, 8), 1.0), InvalidArgument);
}

TEST_CASE("constants are reproduced by the diffuse sweep") {
  // L 1 = 0, so -rho S(K 1) = S(rho nu 1) must return the constant itself.
  const double rho = 1.3;
  const SlabSolver s(make_op(4), ZGrid(1.0, 16), rho);
  const auto nv = static_cast<Eigen::Index>(s.grid().size());
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(16, nv);
  const Eigen::MatrixXd fixed = -rho * s.sweep_diffuse(s.op().apply_K_rows(ones));
  CHECK(max_abs(fixed - ones) <= 1e-12);
}

TEST_CASE("kinetic smallness and boundedness across rho") {
  const auto op = make_op(4);
  const VelocityGrid& g = op->grid();
  for (double rho : {0.5, 1.0, 2.0, 4.0}) {
    const SlabSolver s(op, ZGrid(1.0, 32), rho);
    const SlabField h = SlabField::uniform(s.zgrid(), g.vx());
    const SlabField sol = s.solve(h).solution;
    SlabField perp = sol;
    for (Eigen::Index j = 0; j < perp.values.rows(); ++j) {
      perp.values.row(j) = orthogonal_part(perp.values.row(j).transpose(), g).transpose();
    }
    CHECK(slab_nu_norm(perp, *op) * rho <= 3.0 * slab_norm(h, g));
  }
}

TEST_CASE("report json, csv and thin rescaling") {
  const SlabSolver s(make_op(4), ZGrid(1.0, 8), 1.0);
  const SlabField h = SlabField::uniform(s.zgrid(), s.grid().vx());
  const SlabSolveReport r = s.solve(h);
  nlohmann::json j = r;
  CHECK(j["z_nodes"] == 8);
  CHECK(j.contains("boundary_defect"));
  const SlabField thin = rescale_to_thin(r.solution, 0.25);
  CHECK(thin.zgrid.height == 0.25);
  CHECK(slab_norm(thin, s.grid()) == doctest::Approx(0.5 * slab_norm(r.solution, s.grid())).epsilon(1e-12));
  CHECK_THROWS_AS(rescale_to_thin(r.solution, 0.0), InvalidArgument);
}
