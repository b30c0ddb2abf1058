#include "pipeline.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <boost/version.hpp>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>

#include "kinlub/errors.hpp"

#ifndef KINLUB_VERSION
#define KINLUB_VERSION "unknown"
#endif

namespace kinlub::cli {

namespace fs = std::filesystem;

Artifacts::Artifacts(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string Artifacts::add(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  return (dir_ / name).string();
}

CollisionModel make_model(const RunConfig& cfg, int order) {
  CollisionModel m;
  m.nu_const = cfg.nu_const;
  m.nu_slope = cfg.nu_slope;
  m.k0 = cfg.k0;
  if (cfg.model == "plugin") return load_plugin_model(cfg.plugin_kernel, m, VelocityGrid(order));
  return m;
}

SlabSetup make_slab_setup(const RunConfig& cfg) {
  SlabOptions opts;
  opts.tol = cfg.slab_tol;
  return SlabSetup::make(make_model(cfg, cfg.order), cfg.order, ZGrid(cfg.height, cfg.z_nodes), opts);
}

SlabSetup make_expansion_setup(const RunConfig& cfg) {
  SlabOptions opts;
  opts.tol = cfg.slab_tol;
  return SlabSetup::make(make_model(cfg, cfg.expansion_order), cfg.expansion_order,
                         ZGrid(cfg.height, cfg.expansion_z_nodes), opts);
}

namespace {

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << j.dump(2) << '\n';
}

PlanarDomain make_domain(const RunConfig& cfg) {
  if (cfg.domain == "rectangle") return PlanarDomain::rectangle(0, 1, 0, 1, cfg.nx, cfg.ny);
  return PlanarDomain::interval(0, 1, cfg.nx);
}

std::string hex(const unsigned char* data, unsigned int n) {
  std::ostringstream s;
  for (unsigned int i = 0; i < n; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(data[i]);
  return s.str();
}

const char* stage_error_type(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
  if (dynamic_cast<const SolvabilityError*>(&e)) return "solvability";
  if (dynamic_cast<const ModelViolation*>(&e)) return "model_violation";
  if (dynamic_cast<const RangeError*>(&e)) return "range";
  if (dynamic_cast<const InvalidDomain*>(&e)) return "invalid_domain";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid_argument";
  return "error";
}

}  // namespace

CoefficientTable run_coefficients(const RunConfig& cfg, Artifacts& out) {
  const auto [lo, hi] = rho0_range(cfg);
  const SlabSetup setup = make_slab_setup(cfg);
  CoefficientTable table = tabulate(0.9 * lo, 1.05 * hi, cfg.table_samples, setup, cfg.threads);
  table.set_metadata({{"order", cfg.order}, {"z_nodes", cfg.z_nodes}, {"height", cfg.height}, {"model", cfg.model}});
  table.save_csv(out.add("coefficients.csv"));
  table.save_json(out.add("coefficients.json"));
  return table;
}

DensityField run_reynolds(const RunConfig& cfg, const CoefficientTable& table, Artifacts& out) {
  const PlanarDomain d = make_domain(cfg);
  const DensityField f = solve_reynolds(boundary_data(d, [&](double x, double y) { return rho0_at(cfg, x, y); }), table);
  write_field_csv(out.add("density.csv"), f.rho, "rho");
  write_grid_csv(out.add("density_grid.csv"), f.rho);
  nlohmann::json j = f;
  j["reynolds_residual"] = reynolds_residual(f.rho, table);
  j["transform_consistency"] = transform_consistency(f, table);
  write_json(out.add("density.json"), j);
  return f;
}

ExpansionField run_expansion(const RunConfig& cfg, const DensityField& density, Artifacts& out) {
  const ExpansionOptions opts{cfg.rho_quantum, cfg.threads};
  ExpansionField f = build_g1(density, make_expansion_setup(cfg), opts);
  build_g2(f, opts);
  write_expansion_csv(out.add("expansion.csv"), f);
  nlohmann::json j = f;
  j["max_residual_g1"] = max_expansion_residual(f, 1);
  j["max_residual_g2"] = max_expansion_residual(f, 2);
  const auto traces = boundary_traces(f);
  j["trace_norm_g1"] = trace_norm(traces, 1, f.setup.grid());
  j["trace_norm_g2"] = trace_norm(traces, 2, f.setup.grid());
  write_json(out.add("expansion.json"), j);
  return f;
}

ConvergenceStudy run_study(const RunConfig& cfg, const CoefficientTable& table, const DensityField& density,
                           const ExpansionField* expansion, Artifacts& out) {
  ExpansionField reduced;
  const ExpansionField* use = expansion;
  if (!use || !density.rho.domain.one_dimensional()) {
    const DensityField line = density.rho.domain.one_dimensional()
                                  ? density
                                  : solve_reynolds_1d(cfg.nx, rho0_at(cfg, 0.0, 0.5), rho0_at(cfg, 1.0, 0.5), table);
    const ExpansionOptions opts{cfg.rho_quantum, cfg.threads};
    reduced = build_g1(line, make_expansion_setup(cfg), opts);
    build_g2(reduced, opts);
    use = &reduced;
  }
  RemainderOptions ro;
  ro.gmres_tol = cfg.gmres_tol;
  ro.picard_tol = cfg.picard_tol;
  ro.threads = cfg.threads;
  const ConvergenceStudy study = convergence_study(*use, cfg.epsilons, ro);
  write_study_csv(out.add("study.csv"), study);
  write_json(out.add("study.json"), nlohmann::json(study));
  return study;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest initialization failed");
  }
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    if (!in) break;
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return hex(md, len);
}

void write_manifest(const RunConfig& cfg, Artifacts& out, const std::string& command, const nlohmann::json& status) {
  nlohmann::json files = nlohmann::json::array();
  for (const std::string& name : out.files()) {
    const std::string path = (out.dir() / name).string();
    files.push_back({{"name", name}, {"sha256", sha256_file(path)}, {"bytes", fs::file_size(path)}});
  }
  std::ostringstream eigen;
  eigen << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION;
  const nlohmann::json manifest = {
      {"tool", "kinlub"},
      {"version", KINLUB_VERSION},
      {"command", command},
      {"libraries",
       {{"eigen", eigen.str()},
        {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                      std::to_string(BOOST_VERSION % 100)},
        {"openssl", OPENSSL_VERSION_TEXT},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
      {"config", to_json(cfg)},
      {"tolerances",
       {{"slab", cfg.slab_tol}, {"gmres", cfg.gmres_tol}, {"picard", cfg.picard_tol}, {"rho_quantum", cfg.rho_quantum}}},
      {"status", status},
      {"files", files}};
  write_json((out.dir() / "manifest.json").string(), manifest);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const RangeError*>(&e) ||
      dynamic_cast<const InvalidDomain*>(&e))
    return 2;
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const SolvabilityError*>(&e)) return 3;
  if (dynamic_cast<const ModelViolation*>(&e)) return 4;
  return 1;
}

std::vector<PropertyCheck> check_properties(const RunConfig& cfg) {
  std::vector<PropertyCheck> out;
  const auto record = [&](std::string name, double value, double threshold, bool passed) {
    out.push_back({std::move(name), passed, value, threshold});
  };
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  const auto random_function = [&](const VelocityGrid& g) {
    VelocityFunction f(static_cast<Eigen::Index>(g.size()));
    for (auto& x : f) x = normal(rng);
    return f;
  };

  const SlabSetup setup = make_slab_setup(cfg);
  const VelocityGrid& g = setup.grid();
  const CollisionOperator& op = *setup.op;

  double annihilation = 0.0;
  for (int j = 0; j < kKernelDim; ++j)
    annihilation = std::max(annihilation, op.apply_L(g.kernel_basis().col(j)).cwiseAbs().maxCoeff());
  record("L annihilates the kernel", annihilation, 1e-12, annihilation <= 1e-12);

  double adjoint = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const VelocityFunction a = random_function(g), b = random_function(g);
    const double d = std::abs(inner_product(op.apply_L(a), b, g) - inner_product(op.apply_L(b), a, g));
    adjoint = std::max(adjoint, d / std::sqrt(inner_product(a, a, g) * inner_product(b, b, g)));
  }
  record("L is self-adjoint", adjoint, 1e-12, adjoint <= 1e-12);
  const double gap = op.spectral_gap();
  record("spectral gap is positive", gap, 0.0, gap > 0.0);

  {
    const SlabSetup small = SlabSetup::make(make_model(cfg, 4), 4, ZGrid(cfg.height, 16));
    const SlabSolver s(small.op, small.zgrid, 1.0);
    SlabField h(small.zgrid, static_cast<Eigen::Index>(small.grid().size()));
    for (Eigen::Index i = 0; i < h.values.size(); ++i) h.values.data()[i] = normal(rng);
    h.values.array() -= s.mean_density(h.values);
    double worst = 0.0;
    for (const SlabField& src : {SlabField::uniform(small.zgrid, small.grid().vx()),
                                 SlabField::uniform(small.zgrid, small.grid().vy()), h})
      worst = std::max(worst, (s.solve(src).solution.values - assemble_direct(src, 1.0, *small.op).values)
                                  .cwiseAbs()
                                  .maxCoeff());
    record("slab solve matches direct assembly", worst, 1e-8, worst <= 1e-8);
  }

  double green = 0.0, cross = 0.0, diagonal = 0.0, amin = INFINITY;
  for (double rho : {0.5, 1.0, 2.0}) {
    const TransportSolution t = solve_transport(rho, setup);
    green = std::max(green, std::abs(t.A - t.A_energy) / std::abs(t.A));
    const CrossCoefficients c = cross_coefficients(rho, setup);
    cross = std::max(cross, std::max(std::abs(c.xy), std::abs(c.yx)) / c.xx);
    diagonal = std::max(diagonal, std::abs(c.xx - c.yy) / c.xx);
    amin = std::min(amin, t.A);
  }
  record("Green identity for A", green, 1e-6, green <= 1e-6);
  record("A is positive", amin, 0.0, amin > 0.0);
  record("A_xy vanishes", cross, 1e-10, cross <= 1e-10);
  record("A_xx equals A_yy", diagonal, 1e-10, diagonal <= 1e-10);

  {
    const double h = 1e-3;
    const double fd = (compute_A(1.0 + h, setup) - compute_A(1.0 - h, setup)) / (2 * h);
    const double exact = compute_Aprime(1.0, setup);
    const double rel = std::abs(exact - fd) / std::abs(exact);
    record("A' matches central differences", rel, 1e-4, rel <= 1e-4);
  }
  const double resolvent = resolvent_defect(0.8, 1.2, setup);
  record("resolvent identity", resolvent, 1e-8, resolvent <= 1e-8);

  const CoefficientTable table = tabulate(0.5, 2.5, 8, setup, cfg.threads);
  {
    const PlanarDomain d = PlanarDomain::rectangle(0, 1, 0, 1, 9, 9);
    const DensityField flat = solve_reynolds(boundary_data(d, [](double, double) { return 1.3; }), table);
    const double dev = (flat.rho.values.array() - 1.3).abs().maxCoeff();
    const double tol = 4 * std::numeric_limits<double>::epsilon() * 1.3;
    record("constant boundary data give a constant density", dev, tol, dev <= tol);

    const PlanarDomain e = PlanarDomain::rectangle(0, 1, 0, 1, 17, 17);
    const DensityField rho = solve_reynolds(
        boundary_data(e, [](double x, double y) { return 1.0 + 0.6 * x + 0.3 * std::sin(M_PI * y); }), table);
    const double excess = std::max(rho.rho.inside_max() - rho.rho.boundary_max(),
                                   rho.rho.boundary_min() - rho.rho.inside_min());
    record("discrete maximum principle", excess, 0.0, excess <= 0.0);
  }

  {
    const SlabSetup es = make_expansion_setup(cfg);
    const CoefficientTable et = tabulate(0.5, 2.5, 8, es, cfg.threads);
    ExpansionField f = build_g1(solve_reynolds_1d(17, 0.8, 2.2, et), es, ExpansionOptions{cfg.rho_quantum, cfg.threads});
    const double r1 = max_expansion_residual(f, 1);
    record("order-1 column residual", r1, 1e-9, r1 <= 1e-9);
    const PlanarField div = mass_flux_divergence(f);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < div.values.size(); ++k)
      if (std::isfinite(div.values(k))) worst = std::max(worst, std::abs(div.values(k)));
    record("mass flux of g1 is divergence free", worst, 1e-10, worst <= 1e-10);
  }

  {
    SlabField col(ZGrid(cfg.height, 16), static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index i = 0; i < col.values.size(); ++i) col.values.data()[i] = normal(rng);
    const double ratio = slab_norm(rescale_to_thin(col, 0.25), g) / slab_norm(col, g);
    record("thin scaling identity", std::abs(ratio - 0.5), 1e-12, std::abs(ratio - 0.5) <= 1e-12);
  }
  return out;
}

int run_pipeline(const RunConfig& cfg, std::ostream& log) {
  Artifacts out{fs::path(cfg.out)};
  std::string stage = "coefficients";
  try {
    const CoefficientTable table = run_coefficients(cfg, out);
    log << "coefficients: " << table.rho_samples().size() << " samples on [" << table.rho_m() << ", "
        << table.rho_max() << "]\n";
    stage = "reynolds";
    const DensityField density = run_reynolds(cfg, table, out);
    log << "reynolds: rho in [" << density.rho.inside_min() << ", " << density.rho.inside_max() << "]\n";
    stage = "expansion";
    const ExpansionField expansion = run_expansion(cfg, density, out);
    log << "expansion: residuals " << max_expansion_residual(expansion, 1) << ", "
        << max_expansion_residual(expansion, 2) << "\n";
    stage = "remainder";
    const ConvergenceStudy study = run_study(cfg, table, density, &expansion, out);
    for (const StudyRow& r : study.rows)
      log << "remainder: epsilon " << r.epsilon << (r.ok ? "" : " FAILED: " + r.error) << "\n";
    log << "remainder: slope " << study.slope << "\n";
    if (!study.all_ok) {
      write_manifest(cfg, out, "run", {{"ok", false}, {"stage", stage}});
      return 3;
    }
    write_manifest(cfg, out, "run", {{"ok", true}});
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"stage", stage}, {"type", stage_error_type(e)}, {"message", e.what()}};
    if (const auto* c = dynamic_cast<const ConvergenceError*>(&e)) err["history"] = c->history();
    if (const auto* s = dynamic_cast<const SolvabilityError*>(&e)) err["defect"] = s->defect();
    write_json(out.add("error.json"), err);
    write_manifest(cfg, out, "run", {{"ok", false}, {"stage", stage}});
    log << "stage " << stage << " failed: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace kinlub::cli
