#pragma once

// Distribution functions, distance between rearrangement classes and
// area-preserving perturbations along the flow of grad-perp xi.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "eulerstab/grid_domain.hpp"

namespace eulerstab {

struct DistributionCurve {
  std::vector<double> thresholds;
  std::vector<double> measures;  // |{omega > a}| per threshold, in area units
};

DistributionCurve distribution_function(const ScalarField& omega, const std::vector<double>& thresholds);

/// Cell-area weighted L1 distance between the sorted value sequences.
double rearrangement_distance(const ScalarField& a, const ScalarField& b);

/// Largest gap between the two distribution curves on shared thresholds.
double distribution_gap(const ScalarField& a, const ScalarField& b, const std::vector<double>& thresholds);

/// Tensor-product smooth bump amplitude * e^2 * b(x') b(y'), b(t) = exp(-1/(1-t^2)),
/// x' = (x - cx) / width. Peak value is `amplitude`.
struct BumpSpec {
  double cx = 0.5;
  double cy = 0.5;
  double width = 0.2;
  double amplitude = 1.0;

  nlohmann::json to_json() const;
  static BumpSpec from_json(const nlohmann::json& doc);
};

ScalarField smooth_bump(const GridPtr& grid, const BumpSpec& spec);

/// Sum of bumps, used as one stream function.
ScalarField bump_sum(const GridPtr& grid, const std::vector<BumpSpec>& bumps);

/// Counter-rotating pair straddling the domain center. Its flow pushes the
/// core sideways, which reaches larger deviations than a single swirl.
std::vector<BumpSpec> default_dipole(const Grid& grid);

/// `count` bumps on a deterministic lattice, each vanishing on the collar.
std::vector<ScalarField> default_bump_family(const GridPtr& grid, int count = 20);

inline constexpr int kCollarWidth = 2;

/// Largest bump width at (cx, cy) that keeps the bump off the collar.
double max_bump_width(const Grid& grid, double cx, double cy);

/// omega o Phi_{-t} with Phi the flow of grad-perp xi: RK4 characteristics
/// with |v| dtau <= 0.5 h, bilinear pullback. Throws SupportViolation if xi
/// is nonzero on the collar.
ScalarField perturb_area_preserving(const ScalarField& omega, const ScalarField& xi, double t);

/// The field whose values are exactly those of `target`, arranged in the
/// rank order of `field` (ties broken by node index).
ScalarField project_to_class(const ScalarField& field, const ScalarField& target);

struct PerturbationSpec {
  BumpSpec xi;
  double t = 0.0;

  nlohmann::json to_json() const;
  static PerturbationSpec from_json(const nlohmann::json& doc);
};

/// Random bump specs for sampling near omega_bar; deterministic in `seed`.
std::vector<PerturbationSpec> random_perturbations(const GridPtr& grid, std::size_t count, std::uint64_t seed,
                                                   double t_min, double t_max);

/// Perturbations of omega_bar along each spec; with `snap` the results are
/// projected onto the exact discrete class of omega_bar.
std::vector<ScalarField> class_samples(const ScalarField& omega_bar, const std::vector<PerturbationSpec>& specs,
                                       bool snap);

}  // namespace eulerstab
