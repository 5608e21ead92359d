#pragma once

// Kinetic energy, energy-Casimir functionals and the supporting functional
// D_lambda with its minimizing multiplier.

#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"
#include "eulerstab/steady_state.hpp"

namespace eulerstab {

struct FunctionalReport {
  double E = 0.0;
  double casimir = 0.0;  // int G_hat(omega)
  double EC = 0.0;
  std::optional<double> lambda_bar;
  std::optional<double> D_hat;
  double M0 = 0.0;

  nlohmann::json to_json() const;
};

/// 1/2 int omega G omega.
double kinetic_energy(const ScalarField& omega);

/// int G_hat(omega).
double casimir(const ScalarField& omega, const MonotoneProfile& profile);

/// E, Casimir and EC = E - Casimir; M0 is int omega.
FunctionalReport ec_functional(const ScalarField& omega, const MonotoneProfile& profile);

struct DLambdaResult {
  double lambda_bar = 0.0;
  double D_hat = 0.0;
  /// M0 - int g(G omega - lambda_bar), the lambda-derivative of D_lambda.
  double stationarity = 0.0;
  int iterations = 0;
};

/// Infimum root of int g(G omega - lambda) = M0 by bisection (tolerance 1e-12),
/// and D_hat = -1/2 int omega G omega + int G(G omega - lambda_bar) + lambda_bar M0.
DLambdaResult minimize_d_lambda(const ScalarField& omega, const MonotoneProfile& profile, double M0);

/// D_lambda(omega) for a given lambda.
double d_lambda(const ScalarField& omega, const MonotoneProfile& profile, double M0, double lambda);

struct SupportingSample {
  std::size_t sample_id = 0;
  double distance = 0.0;        // ||omega - omega_bar||_2
  double class_distance = 0.0;  // rearrangement distance to omega_bar
  double E = 0.0;
  double e_drop = 0.0;  // E(omega_bar) - E(omega)
  std::optional<double> EC;
  std::optional<double> D_hat;
  std::optional<double> lambda_bar;
  std::optional<double> gap;      // D_hat - EC
  std::optional<double> ec_drop;  // EC(omega_bar) - EC(omega)

  nlohmann::json to_json() const;
};

struct SupportingReport {
  std::vector<SupportingSample> samples;
  FunctionalReport reference;  // at omega_bar
  std::optional<double> min_gap;
  std::optional<double> max_gap;
  double min_e_drop = 0.0;
  double max_e_drop = 0.0;
  /// Largest sampled distance below which every nonzero sample has E(omega) < E(omega_bar).
  double max_clean_radius = 0.0;

  nlohmann::json summary() const;
};

/// Per-sample D_hat - EC, EC and E drops. Samples must lie in the rearrangement
/// class of omega_bar within class_tol (ClassViolation otherwise); a negative
/// class_tol selects 1e-12 * (1 + int |omega_bar|).
SupportingReport supporting_gap(const SteadyState& steady, const std::vector<ScalarField>& samples,
                                double class_tol = -1.0);

}  // namespace eulerstab
