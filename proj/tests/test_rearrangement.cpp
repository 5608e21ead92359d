#include <doctest.h>

#include <cmath>
#include <random>

#include "eulerstab/errors.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/spectral.hpp"
#include "support.hpp"

using namespace eulerstab;
namespace ts = testsupport;

namespace {

GridPtr square(int n) {
  GridSpec s;
  s.n = n;
  return Grid::build(s);
}

ScalarField smooth(const GridPtr& g) {
  return ScalarField::from_function(g, [](double x, double y) {
    return std::sin(M_PI * x) * std::sin(M_PI * y) * (1.0 + 0.5 * x);
  });
}

}  // namespace

TEST_SUITE("rearrangement") {

TEST_CASE("distribution function") {
  const auto g = square(64);
  const auto phi = principal_eigenpair(g).vector;
  const auto c = distribution_function(phi, {0.0, 1e9});
  CHECK(c.measures[0] == doctest::Approx(g->area()));
  CHECK(c.measures[1] == 0.0);

  const auto plateau = ScalarField::from_function(g, [](double x, double y) {
    return (std::abs(x - 0.5) < 0.25 && std::abs(y - 0.5) < 0.25) ? 1.0 : 0.0;
  });
  CHECK(std::abs(distribution_function(plateau, {0.5}).measures[0] - 0.25) < 2.0 * g->h());
  CHECK_THROWS(distribution_function(plateau, {1.0, 0.0}));
}

TEST_CASE("rearrangement distance") {
  const auto g = square(32);
  const auto f = smooth(g);
  std::mt19937_64 rng(2);
  ScalarField p = f;
  for (std::size_t k = p.size() - 1; k > 0; --k) std::swap(p[k], p[rng() % (k + 1)]);
  CHECK(rearrangement_distance(f, p) == 0.0);
  CHECK(rearrangement_distance(f, f + ScalarField::constant(g, 0.3)) == doctest::Approx(0.3 * g->area()).epsilon(1e-12));
}

TEST_CASE("area-preserving perturbation") {
  const auto g = square(64);
  const auto w = smooth(g);
  const auto xi = smooth_bump(g, {0.45, 0.5, 0.25, 1.0});
  CHECK(lp_norm(perturb_area_preserving(w, xi, 0.0) - w, 2.0) == 0.0);

  // linear in t for small t
  const double d1 = lp_norm(perturb_area_preserving(w, xi, 1e-3) - w, 2.0);
  const double d2 = lp_norm(perturb_area_preserving(w, xi, 2e-3) - w, 2.0);
  CHECK(d2 / d1 == doctest::Approx(2.0).epsilon(0.02));
  // slope against ||grad-perp xi . grad w||
  const auto v = perp_gradient(xi);
  const auto wv = perp_gradient(w);  // (w_y, -w_x)
  ScalarField adv = ScalarField::zeros(g);
  for (std::size_t k = 0; k < g->size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    // v . grad w with grad w = (-wv.v, wv.u)
    adv[k] = v.u[i] * -wv.v[i] + v.v[i] * wv.u[i];
  }
  CHECK(d1 / 1e-3 == doctest::Approx(lp_norm(adv, 2.0)).epsilon(0.05));

  const auto edge = smooth_bump(g, {0.05, 0.5, 0.2, 1.0});
  CHECK_THROWS_AS(perturb_area_preserving(w, edge, 0.01), SupportViolation);
}

TEST_CASE("class distance of the pullback shrinks under refinement") {
  std::vector<double> dist;
  for (int n : {32, 64, 128}) {
    const auto g = square(n);
    const auto w = smooth(g);
    const auto p = perturb_area_preserving(w, smooth_bump(g, {0.45, 0.5, 0.25, 1.0}), 0.02);
    dist.push_back(rearrangement_distance(w, p));
  }
  MESSAGE("class distances " << dist[0] << " " << dist[1] << " " << dist[2]);
  CHECK(dist[1] < dist[0]);
  CHECK(dist[2] < dist[1]);
}

TEST_CASE("snapping lands exactly in the class") {
  const auto g = square(32);
  const auto w = smooth(g);
  const auto p = perturb_area_preserving(w, smooth_bump(g, {0.45, 0.5, 0.25, 1.0}), 0.02);
  const auto s = project_to_class(p, w);
  CHECK(rearrangement_distance(s, w) == 0.0);
  CHECK(lp_norm(s - p, 2.0) < lp_norm(p - w, 2.0));
}

TEST_CASE("random perturbations are deterministic and admissible") {
  const auto g = square(32);
  const auto a = random_perturbations(g, 25, 42, 1e-4, 3e-2);
  const auto b = random_perturbations(g, 25, 42, 1e-4, 3e-2);
  REQUIRE(a.size() == 25u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].to_json() == b[i].to_json());
    CHECK(a[i].t >= 1e-4);
    CHECK(a[i].t <= 3e-2);
    CHECK(PerturbationSpec::from_json(a[i].to_json()).to_json() == a[i].to_json());
  }
  const auto w = smooth(g);
  CHECK_NOTHROW(class_samples(w, a, true));
  CHECK_THROWS(BumpSpec::from_json({{"centre", {0.5, 0.5}}}));
}

TEST_CASE("default bump family") {
  const auto g = square(32);
  const auto fam = default_bump_family(g);
  CHECK(fam.size() == 20u);
  const auto collar = g->collar(kCollarWidth);
  for (const auto& f : fam) {
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (collar[k]) CHECK(f[k] == 0.0);
    }
  }
}

}  // TEST_SUITE
