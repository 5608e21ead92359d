#pragma once

// Steady states omega = g(G omega): semilinear solves, the affine family,
// Lane-Emden solutions and the weak steadiness residual.

#include <filesystem>
#include <vector>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"
#include "eulerstab/steady_state.hpp"

namespace eulerstab {

enum class SemilinearMethod { kDampedFixedPoint, kNewton };

struct SemilinearOptions {
  SemilinearMethod method = SemilinearMethod::kDampedFixedPoint;
  double tol = 1e-8;
  int max_iterations = 5000;
  double theta_floor = 1.0 / 64.0;
};

/// Solves -Delta_h psi = g(psi). g must be evaluable on the whole line.
SteadyState solve_semilinear(const ScalarFn& g, const GridPtr& grid, const ScalarField& init,
                             const SemilinearOptions& options = {});

/// (-Delta_h - alpha) psi = beta; throws ResonanceError within 1e-6 of lambda1.
SteadyState linear_steady(double alpha, double beta, const GridPtr& grid);

struct LaneEmdenOptions {
  double tol = 1e-11;
  int max_iterations = 2000;
};

/// Positive solution of -Delta_h psi = psi^p, 1 < p < 5.
SteadyState lane_emden_solve(double p, const GridPtr& grid, const LaneEmdenOptions& options = {});

/// max over xi of |int omega grad-perp(G omega) . grad xi| / ||xi||_{H1}.
double steady_residual(const ScalarField& omega, const std::vector<ScalarField>& tests);
double steady_residual(const ScalarField& omega);

/// g(s) = alpha s + beta.
ScalarFn affine_profile(double alpha, double beta);
/// g(s) = max(s, 0)^p.
ScalarFn lane_emden_profile(double p);

/// Packages (g, psi) as a steady state: omega_bar = g(psi), psi_bar = G omega_bar,
/// range, monotone profile and residuals.
SteadyState make_steady(const ScalarFn& g, const ScalarField& psi, std::string construction,
                        nlohmann::json parameters);

/// int |grad_h psi|^2 as a sum over lattice edges.
double dirichlet_energy(const ScalarField& psi);

nlohmann::json steady_metadata(const SteadyState& steady);
/// Writes <dir>/omega_bar.{bin,json}, <dir>/psi_bar.{bin,json} and <dir>/steady.json.
void write_steady(const SteadyState& steady, const std::filesystem::path& dir, const nlohmann::json& extra = {});

}  // namespace eulerstab
