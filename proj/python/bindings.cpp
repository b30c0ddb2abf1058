#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "kinlub/errors.hpp"
#include "kinlub/remainder.hpp"

namespace py = pybind11;
using namespace kinlub;

namespace {

// nlohmann -> Python objects through the json module keeps the bindings free
// of a hand-written converter.
py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

// Planar field as an (nx, ny) array, NaN outside the domain.
py::array_t<double> planar_array(const PlanarField& f) {
  const PlanarDomain& d = f.domain;
  py::array_t<double> out({d.nx(), d.ny()});
  auto a = out.mutable_unchecked<2>();
  for (int i = 0; i < d.nx(); ++i)
    for (int j = 0; j < d.ny(); ++j) a(i, j) = f.at(i, j);
  return out;
}

py::array_t<double> node_x(const PlanarDomain& d) {
  py::array_t<double> out(d.nx());
  auto a = out.mutable_unchecked<1>();
  for (int i = 0; i < d.nx(); ++i) a(i) = d.x(i);
  return out;
}

py::array_t<double> node_y(const PlanarDomain& d) {
  py::array_t<double> out(d.ny());
  auto a = out.mutable_unchecked<1>();
  for (int j = 0; j < d.ny(); ++j) a(j) = d.y(j);
  return out;
}

SlabSetup make_setup(int order, int z_nodes, double height, double nu_const, double nu_slope, double k0, double tol) {
  CollisionModel m;
  m.nu_const = nu_const;
  m.nu_slope = nu_slope;
  m.k0 = k0;
  SlabOptions opts;
  opts.tol = tol;
  return SlabSetup::make(m, order, ZGrid(height, z_nodes), opts);
}

}  // namespace

PYBIND11_MODULE(_kinlub, m) {
  m.doc() = "Kinetic thin-film solver: slab transport coefficients, generalized Reynolds equation, "
            "Hilbert expansion and remainder study";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<InvalidDomain>(m, "InvalidDomain", PyExc_ValueError);
  py::register_exception<ModelViolation>(m, "ModelViolation", base.ptr());
  py::register_exception<SolvabilityError>(m, "SolvabilityError", base.ptr());
  auto conv = py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", conv.ptr());

  py::class_<SlabSetup>(m, "SlabSetup", "Velocity grid, collision operator and z-grid for slab solves.")
      .def(py::init(&make_setup), py::arg("order") = 8, py::arg("z_nodes") = 64, py::arg("height") = 1.0,
           py::arg("nu_const") = 1.0, py::arg("nu_slope") = 1.0, py::arg("k0") = 1.0, py::arg("tol") = 1e-11)
      .def_property_readonly("order", [](const SlabSetup& s) { return s.grid().order(); })
      .def_property_readonly("velocity_nodes", [](const SlabSetup& s) { return s.grid().size(); })
      .def_property_readonly("z_nodes", [](const SlabSetup& s) { return s.zgrid.nodes; })
      .def_property_readonly("height", [](const SlabSetup& s) { return s.zgrid.height; })
      .def("spectral_gap", [](const SlabSetup& s) { return s.op->spectral_gap(); })
      .def("A", [](const SlabSetup& s, double rho) { return compute_A(rho, s); }, py::arg("rho"),
           py::call_guard<py::gil_scoped_release>())
      .def("A_prime", [](const SlabSetup& s, double rho) { return compute_Aprime(rho, s); }, py::arg("rho"),
           py::call_guard<py::gil_scoped_release>())
      .def(
          "transport",
          [](const SlabSetup& s, double rho) {
            const TransportSolution t = solve_transport(rho, s);
            py::dict d;
            d["rho"] = t.rho;
            d["A"] = t.A;
            d["A_energy"] = t.A_energy;
            d["norm"] = slab_norm(t.g, s.grid());
            return d;
          },
          py::arg("rho"), "Solves L_rho g = v_x and returns A in both forms with the norm of g.")
      .def(
          "cross_coefficients",
          [](const SlabSetup& s, double rho) {
            const CrossCoefficients c = cross_coefficients(rho, s);
            return py::make_tuple(py::make_tuple(c.xx, c.xy), py::make_tuple(c.yx, c.yy));
          },
          py::arg("rho"))
      .def("resolvent_defect", [](const SlabSetup& s, double eps, double rho) { return resolvent_defect(eps, rho, s); },
           py::arg("epsilon"), py::arg("rho"));

  py::class_<CoefficientTable>(m, "CoefficientTable")
      .def_static("constant", &CoefficientTable::constant, py::arg("value"), py::arg("rho_min"), py::arg("rho_max"),
                  py::arg("samples") = 8)
      .def_static("load_json", &CoefficientTable::load_json)
      .def_static("load_csv", &CoefficientTable::load_csv)
      .def("save_json", &CoefficientTable::save_json)
      .def("save_csv", &CoefficientTable::save_csv)
      .def_property_readonly("rho", &CoefficientTable::rho_samples)
      .def_property_readonly("A_values", &CoefficientTable::A_values)
      .def_property_readonly("A_prime_values", &CoefficientTable::Aprime_values)
      .def_property_readonly("G_values", &CoefficientTable::G_values)
      .def_property_readonly("rho_m", &CoefficientTable::rho_m)
      .def_property_readonly("rho_max", &CoefficientTable::rho_max)
      .def("A", &CoefficientTable::A, py::arg("rho"))
      .def("G", &CoefficientTable::G, py::arg("rho"))
      .def("G_inverse", &CoefficientTable::G_inverse, py::arg("gamma"));

  m.def("tabulate", &tabulate, py::arg("rho_min"), py::arg("rho_max"), py::arg("samples"), py::arg("setup"),
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());

  py::class_<DensityField>(m, "Density")
      .def_property_readonly("x", [](const DensityField& f) { return node_x(f.rho.domain); })
      .def_property_readonly("y", [](const DensityField& f) { return node_y(f.rho.domain); })
      .def_property_readonly("rho", [](const DensityField& f) { return planar_array(f.rho); })
      .def_property_readonly("gamma", [](const DensityField& f) { return planar_array(f.gamma); })
      .def_readonly("rho0_min", &DensityField::rho0_min)
      .def_readonly("rho0_max", &DensityField::rho0_max)
      .def("residual", [](const DensityField& f, const CoefficientTable& t) { return reynolds_residual(f.rho, t); })
      .def("to_dict", [](const DensityField& f) { return to_python(nlohmann::json(f)); });

  m.def("solve_reynolds_1d", &solve_reynolds_1d, py::arg("nx"), py::arg("rho_left"), py::arg("rho_right"),
        py::arg("table"));
  m.def(
      "solve_reynolds_rectangle",
      [](int nx, int ny, const std::function<double(double, double)>& rho0, const CoefficientTable& table) {
        const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, nx, ny);
        return solve_reynolds(boundary_data(d, rho0), table);
      },
      py::arg("nx"), py::arg("ny"), py::arg("rho0"), py::arg("table"),
      "Generalized Reynolds solve on the unit square with boundary density rho0(x, y).");

  py::class_<ExpansionField>(m, "Expansion")
      .def_readonly("density", &ExpansionField::density)
      .def_readonly("has_g2", &ExpansionField::has_g2)
      .def("residual", &max_expansion_residual, py::arg("order"))
      .def("mass_flux_divergence", [](const ExpansionField& f) { return planar_array(mass_flux_divergence(f)); })
      .def("to_dict", [](const ExpansionField& f) { return to_python(nlohmann::json(f)); });

  m.def(
      "build_expansion",
      [](const DensityField& density, const SlabSetup& setup, bool second_order, double rho_quantum, int threads) {
        const ExpansionOptions opts{rho_quantum, threads};
        ExpansionField f = build_g1(density, setup, opts);
        if (second_order) build_g2(f, opts);
        return f;
      },
      py::arg("density"), py::arg("setup"), py::arg("second_order") = true, py::arg("rho_quantum") = 1e-6,
      py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());

  m.def(
      "convergence_study",
      [](const ExpansionField& f, const std::vector<double>& epsilons, double gmres_tol, double picard_tol,
         int threads) {
        RemainderOptions opts;
        opts.gmres_tol = gmres_tol;
        opts.picard_tol = picard_tol;
        opts.threads = threads;
        ConvergenceStudy study;
        {
          py::gil_scoped_release release;
          study = convergence_study(f, epsilons, opts);
        }
        return to_python(nlohmann::json(study));
      },
      py::arg("expansion"), py::arg("epsilons"), py::arg("gmres_tol") = 1e-10, py::arg("picard_tol") = 1e-9,
      py::arg("threads") = 1, "Picard solves of the remainder over a decreasing ladder of epsilon; returns a dict.");

  m.attr("__version__") = KINLUB_VERSION;
}
