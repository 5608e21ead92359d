#include <doctest.h>

#include <cmath>
#include <random>

#include "eulerstab/energy_casimir.hpp"
#include "eulerstab/errors.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/spectral.hpp"
#include "eulerstab/steady_flows.hpp"
#include "support.hpp"

using namespace eulerstab;
namespace ts = testsupport;

namespace {

GridPtr square(int n) {
  GridSpec s;
  s.n = n;
  return Grid::build(s);
}

// Random permutation of the node values.
ScalarField shuffled(const ScalarField& f, std::mt19937_64& rng) {
  ScalarField out = f;
  for (std::size_t k = out.size() - 1; k > 0; --k) {
    const std::size_t j = rng() % (k + 1);
    std::swap(out[k], out[j]);
  }
  return out;
}

}  // namespace

TEST_SUITE("energy_casimir") {

TEST_CASE("kinetic energy") {
  const auto g = square(32);
  CHECK(kinetic_energy(ScalarField::zeros(g)) == 0.0);
  const auto e = principal_eigenpair(g);
  CHECK(kinetic_energy(e.vector) == doctest::Approx(0.5 / e.value).epsilon(1e-8));
  const auto big = square(128);
  const double half = 0.5 * ts::torsion_integral();
  CHECK(half == doctest::Approx(0.01757).epsilon(1e-3));
  CHECK(std::abs(kinetic_energy(ScalarField::constant(big, 1.0)) - half) / half < 0.01);
}

TEST_CASE("energy-Casimir for the identity profile") {
  const auto g = square(32);
  const auto prof = extend_monotone(ScalarFn::affine(1.0, 0.0), -1.0, 1.0);
  const auto w = ScalarField::from_function(g, [](double x, double y) { return std::sin(5 * x) + y; });
  const auto rep = ec_functional(w, prof);
  CHECK(rep.EC == doctest::Approx(kinetic_energy(w) - 0.5 * inner(w, w)).epsilon(1e-12));
  const auto zero = ec_functional(ScalarField::zeros(g), prof);
  CHECK(std::abs(zero.EC + g->area() * prof.G_hat(0.0)) < 1e-14);
}

TEST_CASE("Casimir is constant on a rearrangement class") {
  const auto g = square(32);
  const auto prof = extend_monotone(ScalarFn::polynomial({0.5, 2.0, 1.0}), 0.0, 1.0);
  const auto w = ScalarField::from_function(g, [](double x, double y) { return std::sin(3 * x) * y; });
  const auto base = ec_functional(w, prof);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto r = ec_functional(shuffled(w, rng), prof);
    CHECK(std::abs((r.EC - base.EC) - (r.E - base.E)) < 1e-9);
  }
}

TEST_CASE("multiplier at the steady state is zero") {
  const auto g = square(64);
  const double lam = principal_eigenpair(g).value;
  const auto st = linear_steady(0.5 * lam, 1.0, g);
  const auto res = minimize_d_lambda(st.omega_bar, *st.increasing, integral(st.omega_bar));
  CHECK(std::abs(res.lambda_bar) < 1e-9);
  const auto ec = ec_functional(st.omega_bar, *st.increasing);
  CHECK(std::abs(res.D_hat - ec.EC) < 1e-9);
}

TEST_CASE("identity profile closed form for the multiplier") {
  const auto g = square(32);
  const auto prof = extend_monotone(ScalarFn::affine(1.0, 0.0), -1.0, 1.0);
  const auto w = ScalarField::from_function(g, [](double x, double y) { return 1.0 + x - 2 * y * y; });
  for (double M0 : {0.0, 0.3, -1.2}) {
    const auto res = minimize_d_lambda(w, prof, M0);
    const double expect = (integral(green_apply(w)) - M0) / g->area();
    CHECK(std::abs(res.lambda_bar - expect) < 1e-10);
    // D_lambda is minimized at lambda_bar
    const double d0 = d_lambda(w, prof, M0, res.lambda_bar);
    CHECK(d0 == doctest::Approx(res.D_hat).epsilon(1e-12));
    CHECK(d_lambda(w, prof, M0, res.lambda_bar + 0.1) >= d0);
    CHECK(d_lambda(w, prof, M0, res.lambda_bar - 0.1) >= d0);
  }
}

TEST_CASE("supporting functional dominates EC on the class") {
  const auto g = square(32);
  const double lam = principal_eigenpair(g).value;
  const auto st = linear_steady(0.5 * lam, 1.0, g);
  const auto samples = class_samples(st.omega_bar, random_perturbations(g, 30, 2, 1e-4, 3e-2), true);
  const auto rep = supporting_gap(st, samples);
  CHECK(*rep.min_gap >= -1e-10);
  CHECK(std::abs(*rep.reference.D_hat - rep.reference.EC) < 1e-9);
  for (const auto& s : rep.samples) {
    if (s.distance > 0.0) CHECK(s.e_drop > 0.0);
  }
  const auto j = rep.summary();
  CHECK(j.contains("min_gap"));

  // a field off the class is refused
  CHECK_THROWS_AS(supporting_gap(st, {st.omega_bar * 1.01}), ClassViolation);
}

TEST_CASE("arnold first flows are energy minimizers on the class") {
  const auto g = square(32);
  const auto st = linear_steady(-1.0, 1.0, g);
  const auto samples = class_samples(st.omega_bar, random_perturbations(g, 30, 8, 1e-4, 3e-2), true);
  const auto rep = supporting_gap(st, samples);
  for (const auto& s : rep.samples) {
    if (s.distance > 0.0) CHECK(s.e_drop < 0.0);
  }
  CHECK_FALSE(rep.min_gap.has_value());
}

}  // TEST_SUITE
