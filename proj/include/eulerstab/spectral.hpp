#pragma once

// Lowest eigenvalues of -Delta_h + diag(c), possibly with a rank-one term,
// and the stability certificate built from them.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/steady_state.hpp"

namespace eulerstab {

struct Eigenpair {
  double value = 0.0;
  ScalarField vector;     // unit discrete L2 norm, integral > 0
  double residual = 0.0;  // ||A u - value u||_2 in discrete L2
  int iterations = 0;
};

/// Smallest eigenpair of -Delta_h + diag(c).
Eigenpair principal_eigenpair(const ScalarField& c);
/// Smallest eigenpair of -Delta_h.
Eigenpair principal_eigenpair(const GridPtr& grid);

/// Smallest eigenvalue of -Delta_h - diag(w) + w w^T / sum(w), the quadratic form
/// int |grad u|^2 - int w u^2 + (int w u)^2 / int w on unit-norm u.
/// Throws MassViolation when int w <= 0.
double coercivity_delta(const ScalarField& gprime_field);
/// Same, also returning the minimizing vector.
Eigenpair coercivity_eigenpair(const ScalarField& gprime_field);

enum class Classification { kArnoldFirst, kArnoldSecond, kWolanskyGhil, kThm1Semistable, kNone };

std::string to_string(Classification c);
Classification classification_from_string(const std::string& name);

struct StabilityCertificate {
  double lambda1 = 0.0;
  double mu1 = 0.0;
  std::optional<double> delta;
  double mass_gprime = 0.0;
  double min_gprime = 0.0;
  double max_gprime = 0.0;
  std::vector<Classification> labels;
  Classification classification = Classification::kNone;
  /// Smallest Rayleigh quotient of the corrected form over sampled rearrangement differences.
  std::optional<double> sampled_form_min;
  nlohmann::json evidence = nlohmann::json::object();
  nlohmann::json grid = nlohmann::json::object();
  std::string profile_id;

  bool has_label(Classification c) const;
  nlohmann::json to_json() const;
};

struct ClassifyOptions {
  double tol = 1e-6;
  ProbeOptions probe;
};

StabilityCertificate classify_stability(const SteadyState& steady, const ClassifyOptions& options = {});

/// Minimum over samples omega of the corrected form evaluated at phi = omega - omega_bar,
/// divided by int (G phi)^2. Samples equal to omega_bar are skipped; nullopt if none remain.
std::optional<double> sampled_form_minimum(const SteadyState& steady, const std::vector<ScalarField>& samples);

}  // namespace eulerstab
