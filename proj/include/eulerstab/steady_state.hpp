#pragma once

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"

namespace eulerstab {

/// A steady vorticity omega_bar = g(psi_bar) with psi_bar = G omega_bar.
struct SteadyState {
  ScalarField omega_bar;
  ScalarField psi_bar;
  /// The nonlinearity used by the solver, evaluable on the whole line.
  ScalarFn g;
  /// Range of psi_bar over the closed domain (the wall value 0 included).
  double m = 0.0;
  double M = 0.0;
  /// Set when g is nondecreasing on [m, M].
  std::optional<MonotoneProfile> increasing;
  /// Set when g is strictly decreasing on [m, M].
  std::optional<DecreasingProfile> decreasing;

  double residual_fixed_point = 0.0;  // ||psi_bar - G g(psi_bar)||_2
  double residual_profile = 0.0;      // ||omega_bar - g(psi_bar)||_2
  double residual_weak = 0.0;         // steady_residual over the default bump family
  int iterations = 0;

  std::string construction;
  std::string profile_id;
  nlohmann::json parameters = nlohmann::json::object();

  const GridPtr& grid() const { return omega_bar.grid(); }
  /// g' where available: the profile derivative on [m, M], the raw g elsewhere.
  double gprime(double s) const;
};

}  // namespace eulerstab
