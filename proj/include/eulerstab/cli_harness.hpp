#pragma once

// Configuration-driven experiments: schema validation, the subcommand
// pipelines and deterministic artifact output.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/simulator.hpp"
#include "eulerstab/steady_flows.hpp"

namespace eulerstab {

inline constexpr const char* kVersion = "0.1.0";

struct ProfileConfig {
  std::string kind = "affine";  // affine | lane-emden | piecewise
  std::optional<double> alpha;
  std::optional<double> alpha_over_lambda1;
  double beta = 1.0;
  double p = 3.0;
  std::vector<PolyPiece> pieces;
};

struct ConstructionConfig {
  std::string method;  // linear | semilinear | lane-emden
  SemilinearMethod solver = SemilinearMethod::kDampedFixedPoint;
  double tol = 1e-8;
  int max_iterations = 5000;
};

struct PerturbationConfig {
  std::size_t count = 20;
  double t_min = 1e-4;
  double t_max = 3e-2;
  bool snap = true;
  std::vector<PerturbationSpec> specs;  // explicit specs are used before random ones
};

struct SimulationConfig {
  bool enabled = true;
  double turnovers = 5.0;
  double cfl = 0.5;
  std::vector<double> p_norms{1.0, 2.0, 4.0};
  Scheme scheme = Scheme::kArakawaRK4;
  double sample_every_turnovers = 0.1;
  std::vector<double> amplitudes{1e-3, 1e-2, 1e-1};
  std::vector<BumpSpec> xi;  // perturbing stream function; empty: default_dipole
  double p = 2.0;
};

struct OutputConfig {
  bool snapshots = false;
};

struct ExperimentConfig {
  nlohmann::json normalized;  // validated document with defaults filled in
  GridSpec grid_spec;
  GridPtr grid;
  ProfileConfig profile;
  ConstructionConfig construction;
  PerturbationConfig perturbations;
  SimulationConfig simulation;
  OutputConfig output;
  std::uint64_t seed = 0;
  std::vector<nlohmann::json> sweep;  // entry documents, already merged onto the base
  std::string hash;                   // SHA-256 of the normalized document
};

/// Validates and normalizes a config document; throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);

/// Text artifacts keyed by relative path, plus field snapshots.
struct Artifacts {
  std::map<std::string, std::string> files;
  std::vector<std::pair<std::string, ScalarField>> snapshots;
  nlohmann::json summary = nlohmann::json::object();
};

struct RunContext {
  int jobs = 1;
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand in memory. Throws ConfigError or module errors.
Artifacts run_subcommand(const std::string& name, const ExperimentConfig& config, const RunContext& ctx = {});

/// Writes the artifacts and manifest.json under `out`.
void write_artifacts(const Artifacts& artifacts, const ExperimentConfig& config, const std::string& subcommand,
                     const std::filesystem::path& out);

/// run_subcommand followed by write_artifacts; returns the process exit status
/// (0 ok, 2 config error, 3 numerical failure).
int run_config(const std::string& subcommand, const std::filesystem::path& config_path,
               const std::filesystem::path& out, const RunContext& ctx = {});

/// Entry point of the command-line tool.
int cli_main(int argc, char** argv);

}  // namespace eulerstab
