#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace kinlub::cli {

/// Everything a pipeline run depends on. Built from a named preset, then a
/// key = value file, then command-line overrides (in that order).
struct RunConfig {
  std::string preset = "default";

  // Slab solves and the coefficient table.
  int order = 8;
  int z_nodes = 64;
  double height = 1.0;
  int table_samples = 16;

  // Collision model.
  std::string model = "bgk";
  std::string plugin_kernel;  // path, for model = plugin
  double nu_const = 1.0;
  double nu_slope = 1.0;
  double k0 = 1.0;

  // Planar domain and boundary density.
  std::string domain = "interval";  // interval | rectangle
  int nx = 32;
  int ny = 17;
  std::string rho0 = "linear";  // linear | table
  double rho_left = 1.0;
  double rho_right = 1.5;
  double rho_amplitude = 0.0;      // adds rho_amplitude sin(pi y) on rectangles
  std::vector<double> rho_table;  // uniform samples in x on [0, 1], for rho0 = table

  // Expansion and remainder study.
  int expansion_order = 6;
  int expansion_z_nodes = 32;
  std::vector<double> epsilons = {0.2, 0.1, 0.05};

  // Tolerances.
  double slab_tol = 1e-11;
  double gmres_tol = 1e-10;
  double picard_tol = 1e-9;
  double rho_quantum = 1e-6;

  int threads = 1;
  std::uint64_t seed = 12345;
  std::string out = "kinlub-out";
};

/// Embedded presets: "default" and "constant-rho".
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Sets one key from its textual value. Throws InvalidArgument on unknown
/// keys or malformed values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Reads a key = value file ('#' starts a comment). A `preset` key, wherever
/// it appears, selects the base configuration the other keys modify.
RunConfig load_config(const std::string& path);

/// Parses "k1=v1" style overrides onto cfg.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

/// Throws InvalidArgument describing the first violated constraint.
void validate(const RunConfig& cfg);

/// Boundary density rho0(x, y).
double rho0_at(const RunConfig& cfg, double x, double y);
/// Smallest and largest rho0 over the boundary samples of the configured grid.
std::pair<double, double> rho0_range(const RunConfig& cfg);

std::vector<double> parse_list(const std::string& text);

/// Documented keys with their meaning.
const std::map<std::string, std::string>& config_schema();

nlohmann::json to_json(const RunConfig& cfg);

}  // namespace kinlub::cli
