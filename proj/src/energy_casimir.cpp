#include "eulerstab/energy_casimir.hpp"

#include <algorithm>
#include <cmath>

#include "eulerstab/errors.hpp"
#include "eulerstab/rearrangement.hpp"

namespace eulerstab {

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

double sum_of(const ScalarField& f, const ScalarFn& fn) {
  double acc = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) acc += fn(f[k]);
  return acc * f.grid()->cell_area();
}

double shifted_mass(const ScalarField& psi, const ScalarFn& g, double lambda) {
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) acc += g(psi[k] - lambda);
  return acc * psi.grid()->cell_area();
}

}  // namespace

nlohmann::json FunctionalReport::to_json() const {
  return {{"E", E}, {"casimir", casimir}, {"EC", EC}, {"lambda_bar", opt(lambda_bar)}, {"D_hat", opt(D_hat)},
          {"M0", M0}};
}

double kinetic_energy(const ScalarField& omega) { return 0.5 * energy_inner(omega, omega); }

double casimir(const ScalarField& omega, const MonotoneProfile& profile) { return sum_of(omega, profile.G_hat); }

FunctionalReport ec_functional(const ScalarField& omega, const MonotoneProfile& profile) {
  FunctionalReport r;
  r.E = kinetic_energy(omega);
  r.casimir = casimir(omega, profile);
  r.EC = r.E - r.casimir;
  r.M0 = integral(omega);
  return r;
}

double d_lambda(const ScalarField& omega, const MonotoneProfile& profile, double M0, double lambda) {
  const ScalarField psi = green_apply(omega);
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) acc += profile.G(psi[k] - lambda);
  return -0.5 * inner(omega, psi) + acc * psi.grid()->cell_area() + lambda * M0;
}

DLambdaResult minimize_d_lambda(const ScalarField& omega, const MonotoneProfile& profile, double M0) {
  const ScalarField psi = green_apply(omega);
  const ScalarFn& g = profile.g_ext;
  // F(lambda) = int g(psi - lambda) - M0 is nonincreasing; find inf{lambda : F(lambda) <= 0}.
  auto below = [&](double lambda) { return shifted_mass(psi, g, lambda) - M0 <= 0.0; };
  const double span0 = std::max(1.0, psi.max() - psi.min());
  double span = span0;
  double lo = psi.min() - span, hi = psi.max() + span;
  int grow = 0;
  while (below(lo)) {
    span *= 2.0;
    lo = psi.min() - span;
    if (++grow > 200) throw RootBracketFailure("int g(G omega - lambda) stays below M0");
  }
  span = span0;
  while (!below(hi)) {
    span *= 2.0;
    hi = psi.max() + span;
    if (++grow > 400) throw RootBracketFailure("int g(G omega - lambda) stays above M0");
  }
  int it = 0;
  while (hi - lo > 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi))) && it < 200) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (below(mid)) hi = mid; else lo = mid;
    ++it;
  }
  DLambdaResult out;
  out.lambda_bar = hi;
  out.iterations = it;
  out.stationarity = M0 - shifted_mass(psi, g, hi);
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) acc += profile.G(psi[k] - hi);
  out.D_hat = -0.5 * inner(omega, psi) + acc * psi.grid()->cell_area() + hi * M0;
  return out;
}

nlohmann::json SupportingSample::to_json() const {
  return {{"sample_id", sample_id}, {"distance", distance}, {"class_distance", class_distance},
          {"E", E},                 {"e_drop", e_drop},     {"EC", opt(EC)},
          {"D_hat", opt(D_hat)},    {"lambda_bar", opt(lambda_bar)}, {"gap", opt(gap)},
          {"ec_drop", opt(ec_drop)}};
}

nlohmann::json SupportingReport::summary() const {
  return {{"count", samples.size()},       {"reference", reference.to_json()}, {"min_gap", opt(min_gap)},
          {"max_gap", opt(max_gap)},       {"min_e_drop", min_e_drop},         {"max_e_drop", max_e_drop},
          {"max_clean_radius", max_clean_radius}};
}

SupportingReport supporting_gap(const SteadyState& steady, const std::vector<ScalarField>& samples, double class_tol) {
  const ScalarField& bar = steady.omega_bar;
  if (class_tol < 0.0) class_tol = 1e-12 * (1.0 + lp_norm(bar, 1.0));
  SupportingReport rep;
  const double M0 = integral(bar);
  rep.reference.E = kinetic_energy(bar);
  rep.reference.M0 = M0;
  if (steady.increasing) {
    rep.reference = ec_functional(bar, *steady.increasing);
    const auto d = minimize_d_lambda(bar, *steady.increasing, M0);
    rep.reference.lambda_bar = d.lambda_bar;
    rep.reference.D_hat = d.D_hat;
  }

  rep.min_e_drop = kInf;
  rep.max_e_drop = -kInf;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ScalarField& w = samples[i];
    require_same_grid(w, bar);
    SupportingSample s;
    s.sample_id = i;
    s.class_distance = rearrangement_distance(w, bar);
    if (s.class_distance > class_tol) {
      throw ClassViolation("sample " + std::to_string(i) + " is " + format_exact(s.class_distance) +
                           " away from the rearrangement class");
    }
    s.distance = lp_norm(w - bar, 2.0);
    s.E = kinetic_energy(w);
    s.e_drop = rep.reference.E - s.E;
    if (steady.increasing) {
      const auto f = ec_functional(w, *steady.increasing);
      const auto d = minimize_d_lambda(w, *steady.increasing, M0);
      s.EC = f.EC;
      s.D_hat = d.D_hat;
      s.lambda_bar = d.lambda_bar;
      s.gap = d.D_hat - f.EC;
      s.ec_drop = rep.reference.EC - f.EC;
      rep.min_gap = rep.min_gap ? std::min(*rep.min_gap, *s.gap) : *s.gap;
      rep.max_gap = rep.max_gap ? std::max(*rep.max_gap, *s.gap) : *s.gap;
    }
    rep.min_e_drop = std::min(rep.min_e_drop, s.e_drop);
    rep.max_e_drop = std::max(rep.max_e_drop, s.e_drop);
    rep.samples.push_back(s);
  }

  // Empirical radius: sort nonzero samples by distance, stop at the first with E >= E(omega_bar).
  std::vector<const SupportingSample*> order;
  for (const auto& s : rep.samples) {
    if (s.distance > 0.0) order.push_back(&s);
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) {
    return a->distance != b->distance ? a->distance < b->distance : a->sample_id < b->sample_id;
  });
  for (const auto* s : order) {
    if (!(s->e_drop > 0.0)) break;
    rep.max_clean_radius = s->distance;
  }
  if (samples.empty()) rep.min_e_drop = rep.max_e_drop = 0.0;
  return rep;
}

}  // namespace eulerstab
