#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "config.hpp"
#include "kinlub/remainder.hpp"

namespace kinlub::cli {

/// Output directory plus the list of files written into it.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir);
  const std::filesystem::path& dir() const noexcept { return dir_; }
  /// Absolute path of `name` inside the directory; records it for the manifest.
  std::string add(const std::string& name);
  const std::vector<std::string>& files() const noexcept { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

CollisionModel make_model(const RunConfig& cfg, int order);
SlabSetup make_slab_setup(const RunConfig& cfg);
SlabSetup make_expansion_setup(const RunConfig& cfg);

/// Table on [0.9 min rho0, 1.05 max rho0] (rho_m = 0.9 min rho0).
CoefficientTable run_coefficients(const RunConfig& cfg, Artifacts& out);
DensityField run_reynolds(const RunConfig& cfg, const CoefficientTable& table, Artifacts& out);
ExpansionField run_expansion(const RunConfig& cfg, const DensityField& density, Artifacts& out);
/// Study on the reduced geometry: the configured interval, or for
/// rectangles the x-profile of rho0 along y = 1/2.
ConvergenceStudy run_study(const RunConfig& cfg, const CoefficientTable& table, const DensityField& density,
                           const ExpansionField* expansion, Artifacts& out);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

/// manifest.json: tool version, library versions, configuration and a
/// content hash for every recorded file. No timestamps, so identical
/// configurations give identical manifests.
void write_manifest(const RunConfig& cfg, Artifacts& out, const std::string& command, const nlohmann::json& status);

struct PropertyCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
};

/// The invariant suite at desk scale (randomized inputs use cfg.seed).
std::vector<PropertyCheck> check_properties(const RunConfig& cfg);

/// 2 validation, 3 convergence or solvability failure, 4 model violation, 1 otherwise.
int exit_code_for(const std::exception& e);

/// Runs coefficients, Reynolds, expansion and the remainder study, writes the
/// manifest, and on failure an error.json naming the stage. Returns the exit code.
int run_pipeline(const RunConfig& cfg, std::ostream& log);

}  // namespace kinlub::cli
