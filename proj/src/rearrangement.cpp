#include "eulerstab/rearrangement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "eulerstab/errors.hpp"
#include "eulerstab/monotone_calculus.hpp"

namespace eulerstab {

DistributionCurve distribution_function(const ScalarField& omega, const std::vector<double>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw Error("rearrangement", "thresholds must be sorted");
  }
  std::vector<double> v(omega.values().data(), omega.values().data() + omega.size());
  std::sort(v.begin(), v.end());
  DistributionCurve c;
  c.thresholds = thresholds;
  c.measures.reserve(thresholds.size());
  for (double a : thresholds) {
    const auto above = v.end() - std::upper_bound(v.begin(), v.end(), a);
    c.measures.push_back(static_cast<double>(above) * omega.grid()->cell_area());
  }
  return c;
}

double rearrangement_distance(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a, b);
  std::vector<double> va(a.values().data(), a.values().data() + a.size());
  std::vector<double> vb(b.values().data(), b.values().data() + b.size());
  std::sort(va.begin(), va.end());
  std::sort(vb.begin(), vb.end());
  double acc = 0.0;
  for (std::size_t k = 0; k < va.size(); ++k) acc += std::abs(va[k] - vb[k]);
  return acc * a.grid()->cell_area();
}

double distribution_gap(const ScalarField& a, const ScalarField& b, const std::vector<double>& thresholds) {
  const auto ca = distribution_function(a, thresholds);
  const auto cb = distribution_function(b, thresholds);
  double worst = 0.0;
  for (std::size_t i = 0; i < thresholds.size(); ++i) worst = std::max(worst, std::abs(ca.measures[i] - cb.measures[i]));
  return worst;
}

nlohmann::json BumpSpec::to_json() const {
  return {{"center", {cx, cy}}, {"width", width}, {"amplitude", amplitude}};
}

BumpSpec BumpSpec::from_json(const nlohmann::json& doc) {
  BumpSpec b;
  for (const auto& [key, value] : doc.items()) {
    if (key != "center" && key != "width" && key != "amplitude") {
      throw Error("rearrangement", "unknown bump key '" + key + "'");
    }
  }
  if (doc.contains("center")) {
    const auto& c = doc.at("center");
    if (!c.is_array() || c.size() != 2) throw Error("rearrangement", "bump center must be [x, y]");
    b.cx = c[0].get<double>();
    b.cy = c[1].get<double>();
  }
  b.width = doc.value("width", b.width);
  b.amplitude = doc.value("amplitude", b.amplitude);
  if (!(b.width > 0.0)) throw Error("rearrangement", "bump width must be positive");
  return b;
}

namespace {

double bump1(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

// Chebyshev distance from (x, y) to the nearest non-interior box node.
double wall_distance(const Grid& g, double x, double y) {
  double best = kInf;
  for (int j = 0; j < g.box_height(); ++j) {
    for (int i = 0; i < g.box_width(); ++i) {
      if (g.interior(i, j)) continue;
      best = std::min(best, std::max(std::abs(g.x_of(i) - x), std::abs(g.y_of(j) - y)));
    }
  }
  return best;
}

bool vanishes_on_collar(const ScalarField& xi) {
  const auto collar = xi.grid()->collar(kCollarWidth);
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (collar[k] && xi[k] != 0.0) return false;
  }
  return true;
}

// Uniform double in [0, 1) from the raw 64-bit engine output, identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

double max_bump_width(const Grid& grid, double cx, double cy) {
  return wall_distance(grid, cx, cy) - (kCollarWidth + 1) * grid.h();
}

ScalarField smooth_bump(const GridPtr& grid, const BumpSpec& spec) {
  const double peak = spec.amplitude * std::exp(2.0);
  return ScalarField::from_function(grid, [&](double x, double y) {
    return peak * bump1((x - spec.cx) / spec.width) * bump1((y - spec.cy) / spec.width);
  });
}

ScalarField bump_sum(const GridPtr& grid, const std::vector<BumpSpec>& bumps) {
  ScalarField out = ScalarField::zeros(grid);
  for (const auto& b : bumps) out += smooth_bump(grid, b);
  return out;
}

std::vector<BumpSpec> default_dipole(const Grid& g) {
  const double ex = (g.box_width() - 1) * g.h(), ey = (g.box_height() - 1) * g.h();
  const double cx = g.x0() + 0.5 * ex, cy = g.y0() + 0.5 * ey;
  const double sep = 0.2 * ey;
  double w = 0.2 * std::min(ex, ey);
  w = std::min({w, max_bump_width(g, cx, cy - sep), max_bump_width(g, cx, cy + sep)});
  return {{cx, cy - sep, w, 1.0}, {cx, cy + sep, w, -1.0}};
}

std::vector<ScalarField> default_bump_family(const GridPtr& grid, int count) {
  const Grid& g = *grid;
  const double ex = (g.box_width() - 1) * g.h(), ey = (g.box_height() - 1) * g.h();
  const double w0 = 0.15 * std::min(ex, ey);
  std::vector<ScalarField> out;
  for (int k = 5; static_cast<int>(out.size()) < count && k <= 40; k += 2) {
    out.clear();
    for (int a = 0; a < k && static_cast<int>(out.size()) < count; ++a) {
      for (int b = 0; b < k && static_cast<int>(out.size()) < count; ++b) {
        const double cx = g.x0() + ex * (b + 1) / (k + 1);
        const double cy = g.y0() + ey * (a + 1) / (k + 1);
        const double w = std::min(w0, max_bump_width(g, cx, cy));
        if (w < 2.0 * g.h()) continue;
        auto f = smooth_bump(grid, {cx, cy, w, 1.0});
        if (f.values().cwiseAbs().maxCoeff() > 0.0 && vanishes_on_collar(f)) out.push_back(std::move(f));
      }
    }
  }
  return out;
}

namespace {

struct Velocity {
  const ScalarField& u;
  const ScalarField& v;
  void at(double x, double y, double& vx, double& vy) const {
    vx = sample_bilinear(u, x, y, Outside::kZero);
    vy = sample_bilinear(v, x, y, Outside::kZero);
  }
};

}  // namespace

ScalarField perturb_area_preserving(const ScalarField& omega, const ScalarField& xi, double t) {
  require_same_grid(omega, xi);
  if (!vanishes_on_collar(xi)) throw SupportViolation("xi must vanish on the boundary collar");
  if (t == 0.0) return omega;
  const GridPtr& grid = omega.grid();
  const VelocityField vf = perp_gradient(xi);
  const ScalarField u(grid, vf.u), v(grid, vf.v);
  const Velocity vel{u, v};
  const double vmax = vf.max_speed();
  if (vmax == 0.0) return omega;
  const int substeps = std::max(1, static_cast<int>(std::ceil(std::abs(t) * vmax / (0.5 * grid->h()))));
  const double dtau = -t / substeps;  // backward in time: foot of the characteristic

  ScalarField out = omega;
  for (std::size_t k = 0; k < omega.size(); ++k) {
    double x = grid->x(k), y = grid->y(k);
    if (u[k] == 0.0 && v[k] == 0.0 && xi[k] == 0.0) {
      // Outside supp(xi) and not adjacent to it: the node does not move.
      bool still = true;
      for (int dj = -1; dj <= 1 && still; ++dj) {
        for (int di = -1; di <= 1 && still; ++di) {
          const int c = grid->index(grid->node_i(k) + di, grid->node_j(k) + dj);
          if (c >= 0 && (u[static_cast<std::size_t>(c)] != 0.0 || v[static_cast<std::size_t>(c)] != 0.0)) still = false;
        }
      }
      if (still) continue;
    }
    for (int s = 0; s < substeps; ++s) {
      double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y;
      vel.at(x, y, k1x, k1y);
      vel.at(x + 0.5 * dtau * k1x, y + 0.5 * dtau * k1y, k2x, k2y);
      vel.at(x + 0.5 * dtau * k2x, y + 0.5 * dtau * k2y, k3x, k3y);
      vel.at(x + dtau * k3x, y + dtau * k3y, k4x, k4y);
      x += dtau / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      y += dtau / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    }
    out[k] = sample_bilinear(omega, x, y, Outside::kRenormalize);
  }
  return out;
}

ScalarField project_to_class(const ScalarField& field, const ScalarField& target) {
  require_same_grid(field, target);
  const std::size_t n = field.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return field[a] != field[b] ? field[a] < field[b] : a < b;
  });
  std::vector<double> values(target.values().data(), target.values().data() + n);
  std::sort(values.begin(), values.end());
  ScalarField out = field;
  for (std::size_t r = 0; r < n; ++r) out[order[r]] = values[r];
  return out;
}

nlohmann::json PerturbationSpec::to_json() const { return {{"xi", xi.to_json()}, {"t", t}}; }

PerturbationSpec PerturbationSpec::from_json(const nlohmann::json& doc) {
  for (const auto& [key, value] : doc.items()) {
    if (key != "xi" && key != "t") throw Error("rearrangement", "unknown perturbation key '" + key + "'");
  }
  PerturbationSpec p;
  if (doc.contains("xi")) p.xi = BumpSpec::from_json(doc.at("xi"));
  p.t = doc.value("t", 0.0);
  return p;
}

std::vector<PerturbationSpec> random_perturbations(const GridPtr& grid, std::size_t count, std::uint64_t seed,
                                                   double t_min, double t_max) {
  const Grid& g = *grid;
  std::mt19937_64 rng(seed);
  const double ex = (g.box_width() - 1) * g.h(), ey = (g.box_height() - 1) * g.h();
  const double ext = std::min(ex, ey);
  std::vector<PerturbationSpec> out;
  int attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000 * static_cast<int>(count + 1)) throw Error("rearrangement", "no admissible bump centers");
    PerturbationSpec p;
    p.xi.cx = g.x0() + ex * (0.2 + 0.6 * unit(rng));
    p.xi.cy = g.y0() + ey * (0.2 + 0.6 * unit(rng));
    const double want = ext * (0.15 + 0.2 * unit(rng));
    p.xi.width = std::min(want, max_bump_width(g, p.xi.cx, p.xi.cy));
    p.xi.amplitude = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double r = unit(rng);
    p.t = t_min > 0.0 ? t_min * std::pow(t_max / t_min, r) : t_min + (t_max - t_min) * r;
    if (p.xi.width < 3.0 * g.h()) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<ScalarField> class_samples(const ScalarField& omega_bar, const std::vector<PerturbationSpec>& specs,
                                       bool snap) {
  std::vector<ScalarField> out;
  out.reserve(specs.size());
  for (const auto& spec : specs) {
    auto w = perturb_area_preserving(omega_bar, smooth_bump(omega_bar.grid(), spec.xi), spec.t);
    out.push_back(snap ? project_to_class(w, omega_bar) : std::move(w));
  }
  return out;
}

}  // namespace eulerstab
