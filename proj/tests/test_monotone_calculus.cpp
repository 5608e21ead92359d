#include <doctest.h>

#include <cmath>
#include <random>

#include "eulerstab/errors.hpp"
#include "eulerstab/monotone_calculus.hpp"
#include "support.hpp"

using namespace eulerstab;
namespace ts = testsupport;

namespace {

ScalarFn plateau() {
  // s for s < 0, 0 on [0, 1], s - 1 beyond
  return ScalarFn::piecewise({{-kInf, 0.0, 0.0, {0.0, 1.0}}, {0.0, 1.0, 0.0, {0.0}}, {1.0, kInf, 1.0, {0.0, 1.0}}});
}

}  // namespace

TEST_SUITE("monotone_calculus") {

TEST_CASE("inverse of a linear involution") {
  const auto q = ScalarFn::affine(-1.0, 0.0);
  const auto p = generalized_inverse(q, InverseMode::kDecreasing);
  CHECK(p(3.0) == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(p(q(2.0)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("plateau inverse is left-continuous") {
  const auto p = generalized_inverse(plateau(), InverseMode::kNondecreasing);
  CHECK(std::abs(p(0.0)) < 1e-12);
  CHECK(p(0.5) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(std::abs(p(-1e-9) - p(0.0)) < 1e-8);
  // right of the plateau value the inverse jumps to the far end
  CHECK(p(1e-9) > 1.0);
}

TEST_CASE("random piecewise inverses agree with a bisection oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = ScalarFn::piecewise(ts::random_monotone_pieces(rng, false));
    const auto p = generalized_inverse(q, InverseMode::kNondecreasing);
    for (int i = 0; i < 200; ++i) {
      const double s = ts::uniform(rng, -6.0, 6.0);
      CHECK(std::abs(q(p(s)) - s) < 1e-10);
      CHECK(std::abs(p(s) - ts::bisect_inverse(q, s)) < 1e-9);
    }
  }
}

TEST_CASE("antiderivatives") {
  const auto P = antiderivative(ScalarFn::affine(-1.0, 0.0));
  CHECK(P(2.0) == doctest::Approx(-2.0).epsilon(1e-14));
  const auto p = generalized_inverse(plateau(), InverseMode::kNondecreasing);
  CHECK(antiderivative(p)(1.0) == doctest::Approx(1.5).epsilon(1e-10));
}

TEST_CASE("antiderivative of sampled data matches a refined trapezoid") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 10000; ++i) {
    const double x = -1.0 + 3.0 * i / 9999.0;
    xs.push_back(x);
    ys.push_back(x + 0.1 * std::sin(3.0 * x));
  }
  const auto P = antiderivative(ScalarFn::sampled(xs, ys));
  // the samples come from a smooth function; Richardson-extrapolated trapezoid on it
  auto f = [](double x) { return x + 0.1 * std::sin(3.0 * x); };
  auto trap = [&](int n) {
    double acc = 0.5 * (f(0.0) + f(1.7));
    for (int i = 1; i < n; ++i) acc += f(1.7 * i / n);
    return acc * 1.7 / n;
  };
  const double oracle = (4.0 * trap(4096) - trap(2048)) / 3.0;
  CHECK(std::abs(P(1.7) - oracle) < 1e-9);
}

TEST_CASE("legendre transforms") {
  const auto id = ScalarFn::affine(1.0, 0.0);
  CHECK(legendre_transform(antiderivative(id), id)(3.0) == doctest::Approx(4.5).epsilon(1e-12));
  const auto q = ScalarFn::affine(2.0, 1.0);
  const auto Qh = legendre_transform(antiderivative(q), q);
  CHECK(Qh(0.0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(Qh(5.0) == doctest::Approx(4.0).epsilon(1e-12));

  // plateau: compare with a direct sup over a tau grid
  const auto pq = plateau();
  const auto PQ = antiderivative(pq);
  for (auto route : {LegendreRoute::kLevelSet, LegendreRoute::kAntiderivative}) {
    const auto Ph = legendre_transform(PQ, pq, route);
    CHECK(std::abs(Ph(0.0)) < 1e-10);
    for (double s : {0.1, 0.7, 2.0}) {
      double sup = -kInf;
      for (int i = 0; i <= 200000; ++i) {
        const double tau = -5.0 + 10.0 * i / 200000.0;
        sup = std::max(sup, s * tau - PQ(tau));
      }
      CHECK(Ph(s) == doctest::Approx(s * s / 2.0 + s).epsilon(1e-9));
      CHECK(std::abs(Ph(s) - sup) < 1e-6);
    }
  }
}

TEST_CASE("fenchel gap") {
  const auto prof = extend_monotone(ScalarFn::affine(1.0, 0.0), -1.0, 1.0);
  CHECK(std::abs(fenchel_gap(prof, 0.5, 0.5)) < 1e-10);
  CHECK(fenchel_gap(prof, 1.0, -1.0) == doctest::Approx(2.0).epsilon(1e-12));

  std::mt19937_64 rng(9);
  const auto pieces = ts::random_monotone_pieces(rng, false);
  const auto rp = extend_monotone(ScalarFn::piecewise(pieces), pieces.front().hi, pieces.back().lo);
  for (int i = 0; i < 500; ++i) {
    const double s = ts::uniform(rng, -6.0, 6.0), tau = ts::uniform(rng, -6.0, 6.0);
    const double gap = fenchel_gap(rp, s, tau);
    CHECK(gap >= -1e-10);
    if (std::abs(s - rp.g_ext(tau)) < 1e-6) CHECK(gap < 1e-8);
    CHECK(std::abs(fenchel_gap(rp, rp.g_ext(tau), tau)) < 1e-8);
  }
}

TEST_CASE("extension formulas") {
  const auto sq = ScalarFn::polynomial({0.0, 0.0, 1.0});
  const auto a = extend_monotone(sq, 1.0, 2.0);
  CHECK(a.g_ext(0.0) == doctest::Approx(-1.0).epsilon(1e-14));
  const auto b = extend_monotone(sq, 0.0, 1.0);
  CHECK(b.g_ext(-0.5) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(b.g_ext(-2.0) == doctest::Approx(-3.0).epsilon(1e-14));
  CHECK(b.c1 > 0.0);
  CHECK(b.c2 > 0.0);
  const double d = 1e-6;
  for (double s : {b.m, b.m - 1.0, b.M, b.M + 1.0}) {
    const double left = (b.g_ext(s) - b.g_ext(s - d)) / d;
    const double right = (b.g_ext(s + d) - b.g_ext(s)) / d;
    CHECK(std::abs(left - right) < 1e-5);
  }
}

TEST_CASE("decreasing extension and its inverse") {
  const auto g = ScalarFn::affine(-1.0, 2.0);
  const auto prof = extend_decreasing(g, -1.0, 1.0);
  for (double s : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
    CHECK(prof.f(prof.g_ext(s)) == doctest::Approx(s).epsilon(1e-10));
  }
  // F' = f
  const double d = 1e-5;
  CHECK((prof.F(1.0 + d) - prof.F(1.0 - d)) / (2 * d) == doctest::Approx(prof.f(1.0)).epsilon(1e-6));
}

TEST_CASE("monotonicity violations are reported") {
  const auto bump = ScalarFn::polynomial({0.0, 0.0, -1.0});
  CHECK(find_monotonicity_violation(bump, -1.0, 1.0, InverseMode::kNondecreasing, false).has_value());
  CHECK_FALSE(find_monotonicity_violation(bump, -1.0, 0.0, InverseMode::kNondecreasing, false).has_value());
  CHECK_THROWS_AS(extend_monotone(bump, -1.0, 1.0), RegularityViolation);
  CHECK_FALSE(find_monotonicity_violation(bump, 1.0, 0.0, InverseMode::kNondecreasing, false).has_value());
}

TEST_CASE("profile json round trip is exact") {
  std::mt19937_64 rng(3);
  const auto pieces = ts::random_monotone_pieces(rng, true);
  const auto prof = extend_monotone(ScalarFn::piecewise(pieces), pieces.front().hi, pieces.back().lo);
  const auto doc = profile_to_json(prof);
  const auto back = profile_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back.m == prof.m);
  CHECK(back.M == prof.M);
  for (int i = 0; i < 50; ++i) {
    const double s = ts::uniform(rng, -8.0, 8.0);
    CHECK(back.g_ext(s) == prof.g_ext(s));
  }
  CHECK(parse_exact(format_exact(0.1)) == 0.1);
  CHECK_THROWS(pieces_from_json(nlohmann::json::parse("[{\"lo\": 1}]")));
}

}  // TEST_SUITE
