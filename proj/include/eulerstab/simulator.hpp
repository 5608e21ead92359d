#pragma once

// Time integration of omega_t + v . grad omega = 0, v = grad-perp G omega,
// with conservation diagnostics and the perturbation stability experiment.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/steady_state.hpp"

namespace eulerstab {

enum class Scheme {
  /// Arakawa Jacobian, classical RK4. omega lives on the interior plus its
  /// halo ring; mass, energy and enstrophy are conserved by the spatial scheme.
  kArakawaRK4,
  /// Midpoint characteristics with bilinear pullback clamped to the interior.
  kSemiLagrangian,
};

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& name);

struct SimState {
  double t = 0.0;
  ScalarField omega;
  ScalarField psi;        // G omega
  Eigen::VectorXd halo;   // omega on grid.halo(), same order
  long step_count = 0;

  /// omega on interior nodes followed by the halo values.
  Eigen::VectorXd extended() const;
};

/// State at t = 0; the halo is filled with `halo_value`.
SimState make_state(const ScalarField& omega, double halo_value = 0.0);

/// Largest |grad-perp psi| with centered differences, psi extended by zero,
/// over interior and halo nodes.
double advection_speed(const SimState& state);

/// One step of size dt. Throws CFLViolation when max|v| dt > 0.5 h.
SimState step(const SimState& state, double dt, Scheme scheme = Scheme::kArakawaRK4);

struct RunOptions {
  double T = 1.0;              // final time
  double cfl = 0.5;
  double sample_every = 0.0;   // 0: 50 samples over [0, T]
  std::vector<double> p_norms{1.0, 2.0, 4.0};
  double deviation_p = 2.0;
  Scheme scheme = Scheme::kArakawaRK4;
  int thresholds = 33;         // levels for the distribution-curve gap
  bool casimir = true;         // track int G_hat(omega) when the reference has a monotone profile
};

struct TrajectoryDiagnostics {
  std::vector<double> times;
  std::vector<double> energy;
  std::vector<double> mass;
  std::vector<std::vector<double>> lp_norms;  // one series per RunOptions::p_norms entry
  std::vector<double> p_values;
  std::vector<double> dist_curve_gap;
  std::vector<double> deviation;  // empty without a reference
  std::vector<double> casimir;    // empty unless tracked
  std::vector<long> steps;
  double turnover_time = 0.0;

  double max_relative_drift(const std::vector<double>& series) const;
  double energy_drift() const { return max_relative_drift(energy); }
  double mass_drift() const { return max_relative_drift(mass); }
  double lp_drift(double p) const;
  double max_deviation() const;
  /// One JSON object per sample time.
  std::vector<nlohmann::json> rows() const;
};

struct RunResult {
  TrajectoryDiagnostics diagnostics;
  SimState final_state;
};

/// Turnover time of omega: length_scale / max|v|.
double turnover_time(const ScalarField& omega);

RunResult run(const ScalarField& omega0, const RunOptions& options, const SteadyState* reference = nullptr);
RunResult run(const SimState& initial, const RunOptions& options, const SteadyState* reference = nullptr);

struct ExperimentOptions {
  std::vector<BumpSpec> xi;           // stream function of the perturbing flow, summed; empty: default_dipole
  std::vector<double> amplitudes{1e-3, 1e-2, 1e-1};  // fractions of ||omega_bar||_p
  double turnovers = 10.0;
  double p = 2.0;
  double cfl = 0.5;
  Scheme scheme = Scheme::kArakawaRK4;
  int jobs = 1;
  double sample_every_turnovers = 0.1;
};

struct AmplitudeReport {
  double amplitude = 0.0;
  double t_flow = 0.0;     // perturbation flow time giving the amplitude
  double epsilon = 0.0;    // ||omega0 - omega_bar||_p
  double sup_deviation = 0.0;
  double ratio = 0.0;
  double mass_drift = 0.0;
  double energy_drift = 0.0;
  std::vector<double> lp_drifts;
  TrajectoryDiagnostics diagnostics;

  nlohmann::json to_json() const;
};

struct ExperimentReport {
  double turnover_time = 0.0;
  double T = 0.0;
  double p = 2.0;
  std::vector<AmplitudeReport> ladder;
  std::string classification;  // filled by the caller when a certificate exists

  double ratio_spread() const;  // max ratio / min ratio over the ladder
  nlohmann::json to_json() const;
};

ExperimentReport stability_experiment(const SteadyState& steady, const ExperimentOptions& options);

/// omega_bar o Phi_{-t} with t chosen so that ||. - omega_bar||_p = target.
ScalarField perturb_to_amplitude(const ScalarField& omega_bar, const ScalarField& xi, double target, double p,
                                 double* t_out = nullptr);

}  // namespace eulerstab
