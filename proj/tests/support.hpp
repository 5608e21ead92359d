#pragma once

// Shared generators and independent oracles for the test binaries.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"

namespace testsupport {

using eulerstab::PolyPiece;
using eulerstab::ScalarFn;
using eulerstab::kInf;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Continuous nondecreasing piecewise linear/quadratic function growing
// linearly at both ends. With `strict` every piece has positive slope.
inline std::vector<PolyPiece> random_monotone_pieces(std::mt19937_64& rng, bool strict) {
  const int k = 1 + static_cast<int>(rng() % 5);
  std::vector<double> bp{uniform(rng, -3.0, -1.0)};
  for (int i = 0; i < k; ++i) bp.push_back(bp.back() + uniform(rng, 0.2, 1.5));
  std::vector<PolyPiece> pieces;
  double value = uniform(rng, -2.0, 2.0);
  pieces.push_back({-kInf, bp[0], bp[0], {value, uniform(rng, 0.2, 3.0)}});
  for (int i = 0; i < k; ++i) {
    const double a = bp[i], b = bp[i + 1], w = b - a;
    PolyPiece p{a, b, a, {}};
    const double kind = uniform(rng, 0.0, 1.0);
    if (!strict && kind < 0.25) {
      p.coeffs = {value};  // plateau
    } else if (kind < 0.6) {
      p.coeffs = {value, uniform(rng, 0.1, 3.0)};
    } else {
      // derivative d0 at a and d1 at b, both positive
      const double d0 = uniform(rng, strict ? 0.1 : 0.0, 3.0), d1 = uniform(rng, 0.1, 3.0);
      p.coeffs = {value, d0, (d1 - d0) / (2.0 * w)};
    }
    value = p.eval(b);
    pieces.push_back(p);
  }
  pieces.push_back({bp.back(), kInf, bp.back(), {value, uniform(rng, 0.2, 3.0)}});
  return pieces;
}

// Inverse of a continuous nondecreasing q by plain bisection, returning the
// left end of the level set.
inline double bisect_inverse(const ScalarFn& q, double s) {
  double lo = -1.0, hi = 1.0;
  while (q(lo) >= s) lo *= 2.0;
  while (q(hi) < s) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (q(mid) < s ? lo : hi) = mid;
  }
  return hi;
}

// Torsion function of the unit square at the center, by its Fourier series.
inline double torsion_center() {
  const double pi = M_PI;
  double acc = 0.0;
  for (int m = 1; m < 2001; m += 2) {
    for (int n = 1; n < 2001; n += 2) {
      const double sign = ((m / 2 + n / 2) % 2 == 0) ? 1.0 : -1.0;
      acc += sign * 16.0 / (std::pow(pi, 4) * m * n * (m * m + n * n));
    }
  }
  return acc;
}

// Integral of the torsion function over the unit square.
inline double torsion_integral() {
  const double pi = M_PI;
  double acc = 0.0;
  for (int m = 1; m < 2001; m += 2) {
    for (int n = 1; n < 2001; n += 2) acc += 64.0 / (std::pow(pi, 6) * m * m * n * n * (m * m + n * n));
  }
  return acc;
}

// Dense copy of the grid Laplacian.
inline Eigen::MatrixXd dense_laplacian(const eulerstab::Grid& g) { return Eigen::MatrixXd(g.laplacian()); }

// Smallest eigenvalue of L - diag(w) + w w^T / sum(w) by a full dense solve.
inline double dense_delta(const eulerstab::ScalarField& w) {
  Eigen::MatrixXd a = dense_laplacian(*w.grid());
  const Eigen::VectorXd& v = w.values();
  a.diagonal() -= v;
  a += v * v.transpose() / v.sum();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense_spectrum(const eulerstab::Grid& g) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense_laplacian(g));
}

}  // namespace testsupport
