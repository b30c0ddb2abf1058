#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "config.hpp"
#include "kinlub/errors.hpp"
#include "pipeline.hpp"

using namespace kinlub;
using namespace kinlub::cli;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::string out;
  int threads = 0;
  long long seed = -1;
  std::vector<std::string> overrides;
};

RunConfig resolve(const GlobalOptions& g) {
  RunConfig cfg = g.config_path.empty() ? preset("default") : load_config(g.config_path);
  apply_overrides(cfg, g.overrides);
  if (!g.out.empty()) cfg.out = g.out;
  if (g.threads > 0) cfg.threads = g.threads;
  if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
  return cfg;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic thin-film solver: transport coefficients, generalized Reynolds equation, "
               "Hilbert expansion and hydrodynamic-limit study"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "seed for randomized property checks")->check(CLI::NonNegativeNumber);
  app.add_option("--set", g.overrides, "configuration override key=value (repeatable)");
  bool show_schema = false;
  app.add_flag("--config-help", show_schema, "list configuration keys and exit");

  auto* compute_a = app.add_subcommand("compute-a", "A(rho) and A'(rho) from slab solves");
  std::vector<double> rhos;
  compute_a->add_option("--rho", rhos, "densities (repeatable)")->required();

  auto* solve_rey = app.add_subcommand("solve-reynolds", "coefficient table and the generalized Reynolds solve");
  auto* build_exp = app.add_subcommand("build-expansion", "Reynolds solve followed by g1 and g2");

  auto* verify = app.add_subcommand("verify-limit", "remainder study over a ladder of epsilon");
  std::string eps_text;
  verify->add_option("--epsilons", eps_text, "comma-separated, strictly decreasing");

  auto* props = app.add_subcommand("check-properties", "invariant suite with a pass/fail table");
  auto* run = app.add_subcommand("run", "full pipeline with manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (show_schema) {
    for (const auto& [k, v] : config_schema()) std::cout << std::left << std::setw(20) << k << v << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  RunConfig cfg;
  try {
    cfg = resolve(g);
    if (!eps_text.empty()) cfg.epsilons = parse_list(eps_text);
    validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*run) return run_pipeline(cfg, std::cout);

    Artifacts out{std::filesystem::path(cfg.out)};
    if (*compute_a) {
      const SlabSetup setup = make_slab_setup(cfg);
      nlohmann::json rows = nlohmann::json::array();
      std::cout << std::setprecision(12);
      for (double rho : rhos) {
        if (!(rho > 0.0)) throw InvalidArgument("compute-a: rho must be positive");
        const TransportSolution t = solve_transport(rho, setup);
        const double ap = compute_Aprime(rho, setup);
        std::cout << "A(" << rho << ") = " << t.A << "  A'(" << rho << ") = " << ap << '\n';
        rows.push_back({{"rho", rho}, {"A", t.A}, {"A_energy", t.A_energy}, {"Aprime", ap}});
      }
      write_json(out.add("compute_a.json"), {{"order", cfg.order}, {"z_nodes", cfg.z_nodes}, {"values", rows}});
      write_manifest(cfg, out, "compute-a", {{"ok", true}});
      return 0;
    }
    if (*solve_rey || *build_exp) {
      const CoefficientTable table = run_coefficients(cfg, out);
      const DensityField density = run_reynolds(cfg, table, out);
      std::cout << "rho in [" << density.rho.inside_min() << ", " << density.rho.inside_max()
                << "], Reynolds residual " << reynolds_residual(density.rho, table) << '\n';
      if (*build_exp) {
        const ExpansionField f = run_expansion(cfg, density, out);
        std::cout << "expansion residuals: g1 " << max_expansion_residual(f, 1) << ", g2 "
                  << max_expansion_residual(f, 2) << '\n';
      }
      write_manifest(cfg, out, *build_exp ? "build-expansion" : "solve-reynolds", {{"ok", true}});
      return 0;
    }
    if (*verify) {
      const CoefficientTable table = run_coefficients(cfg, out);
      const DensityField density = run_reynolds(cfg, table, out);
      const ConvergenceStudy study = run_study(cfg, table, density, nullptr, out);
      std::cout << std::setprecision(6);
      for (const StudyRow& r : study.rows) {
        std::cout << "epsilon " << r.epsilon;
        if (r.ok)
          std::cout << "  norm " << r.deviation << "  norm/epsilon " << r.ratio << "  iterations " << r.iterations
                    << "  contraction " << r.contraction << '\n';
        else
          std::cout << "  failed: " << r.error << '\n';
      }
      std::cout << "slope " << study.slope << " (thin-domain norm " << study.thin_slope << ")\n";
      write_manifest(cfg, out, "verify-limit", {{"ok", study.all_ok}});
      return study.all_ok ? 0 : 3;
    }
    if (*props) {
      const auto checks = check_properties(cfg);
      bool all = true;
      nlohmann::json rows = nlohmann::json::array();
      for (const PropertyCheck& c : checks) {
        std::cout << (c.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(48) << c.name << std::setprecision(3)
                  << std::scientific << c.value << "  (threshold " << c.threshold << ")\n"
                  << std::defaultfloat;
        all = all && c.passed;
        rows.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"threshold", c.threshold}});
      }
      write_json(out.add("properties.json"), {{"all_passed", all}, {"checks", rows}});
      write_manifest(cfg, out, "check-properties", {{"ok", all}});
      return all ? 0 : 4;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 1;
}
