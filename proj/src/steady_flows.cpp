#include "eulerstab/steady_flows.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "eulerstab/errors.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/spectral.hpp"

namespace eulerstab {

double SteadyState::gprime(double s) const {
  if (increasing) return increasing->g_ext.deriv(s);
  if (decreasing) return decreasing->g_ext.deriv(s);
  return g.deriv(s);
}

ScalarFn affine_profile(double alpha, double beta) { return ScalarFn::polynomial({beta, alpha}); }

ScalarFn lane_emden_profile(double p) {
  if (p == 3.0) return ScalarFn::piecewise({PolyPiece{-kInf, 0.0, 0.0, {0.0}}, PolyPiece{0.0, kInf, 0.0, {0, 0, 0, 1}}});
  return ScalarFn::callable([p](double s) { return s > 0.0 ? std::pow(s, p) : 0.0; },
                            [p](double s) { return s > 0.0 ? p * std::pow(s, p - 1.0) : 0.0; }, Interval{}, {0.0});
}

namespace {

double l2(const ScalarField& f) { return lp_norm(f, 2.0); }

void attach_profile(SteadyState& st) {
  const ProbeOptions probe;
  try {
    if (!find_monotonicity_violation(st.g, st.m, st.M, InverseMode::kNondecreasing, false, probe) &&
        (st.M > st.m || st.g.deriv(st.m) >= 0.0)) {
      st.increasing = extend_monotone(st.g, st.m, st.M, probe);
    } else if (!find_monotonicity_violation(st.g, st.m, st.M, InverseMode::kDecreasing, true, probe)) {
      st.decreasing = extend_decreasing(st.g, st.m, st.M, probe);
    }
  } catch (const RegularityViolation& e) {
    st.parameters["profile_note"] = e.what();
  }
}

}  // namespace

SteadyState make_steady(const ScalarFn& g, const ScalarField& psi, std::string construction,
                        nlohmann::json parameters) {
  SteadyState st;
  st.g = g;
  st.construction = std::move(construction);
  st.parameters = std::move(parameters);
  st.omega_bar = psi.map([&](double s) { return g(s); });
  st.psi_bar = green_apply(st.omega_bar);
  st.m = std::min(0.0, st.psi_bar.min());
  st.M = std::max(0.0, st.psi_bar.max());
  attach_profile(st);
  const ScalarField g_psi = st.psi_bar.map([&](double s) { return g(s); });
  st.residual_profile = l2(st.omega_bar - g_psi);
  st.residual_fixed_point = l2(st.psi_bar - green_apply(g_psi));
  st.residual_weak = steady_residual(st.omega_bar);
  return st;
}

SteadyState solve_semilinear(const ScalarFn& g, const GridPtr& grid, const ScalarField& init,
                             const SemilinearOptions& options) {
  if (!init.grid()->same_as(*grid)) throw GridMismatch("initial guess lives on another grid");
  ScalarField psi = init;
  double residual = kInf;
  int it = 0;
  const char* method = options.method == SemilinearMethod::kNewton ? "newton" : "damped-fixed-point";
  if (options.method == SemilinearMethod::kDampedFixedPoint) {
    double theta = 1.0;
    double prev = kInf;
    for (; it < options.max_iterations; ++it) {
      const ScalarField target = green_apply(psi.map([&](double s) { return g(s); }));
      residual = l2(target - psi);
      if (residual < options.tol) break;
      if (residual > prev) theta = std::max(0.5 * theta, options.theta_floor);
      prev = residual;
      psi = (1.0 - theta) * psi + theta * target;
    }
  } else {
    if (!g.has_deriv()) throw RegularityViolation("Newton needs g'");
    for (; it < options.max_iterations; ++it) {
      const ScalarField gpsi = psi.map([&](double s) { return g(s); });
      residual = l2(green_apply(gpsi) - psi);
      if (residual < options.tol) break;
      SparseMatrix J = grid->laplacian();
      for (std::size_t k = 0; k < psi.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        J.coeffRef(kk, kk) -= g.deriv(psi[k]);
      }
      Eigen::SparseLU<SparseMatrix> lu;
      lu.compute(J);
      if (lu.info() != Eigen::Success) throw NoConvergence("singular Newton Jacobian");
      const Eigen::VectorXd F = grid->laplacian() * psi.values() - gpsi.values();
      psi.values() -= lu.solve(F);
    }
  }
  if (!(residual < options.tol)) {
    throw NoConvergence(std::string(method) + " stopped after " + std::to_string(it) + " iterations at residual " +
                        std::to_string(residual));
  }
  auto st = make_steady(g, psi, "semilinear", {{"method", method}});
  st.iterations = it;
  st.profile_id = "semilinear";
  return st;
}

SteadyState linear_steady(double alpha, double beta, const GridPtr& grid) {
  const double lambda1 = principal_eigenpair(grid).value;
  if (std::abs(lambda1 - alpha) < 1e-6) {
    throw ResonanceError("alpha " + format_exact(alpha) + " resonates with lambda1 " + format_exact(lambda1));
  }
  SparseMatrix K = grid->laplacian();
  for (Eigen::Index k = 0; k < K.rows(); ++k) K.coeffRef(k, k) -= alpha;
  const Eigen::VectorXd rhs = Eigen::VectorXd::Constant(K.rows(), beta);
  Eigen::VectorXd psi;
  if (alpha < lambda1) {
    Eigen::SimplicialLLT<SparseMatrix> llt(K);
    if (llt.info() != Eigen::Success) throw NoConvergence("factorization of -Delta - alpha failed");
    psi = llt.solve(rhs);
  } else {
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(K);
    if (lu.info() != Eigen::Success) throw NoConvergence("factorization of -Delta - alpha failed");
    psi = lu.solve(rhs);
  }
  auto st = make_steady(affine_profile(alpha, beta), ScalarField(grid, std::move(psi)), "linear",
                        {{"alpha", alpha}, {"beta", beta}, {"lambda1", lambda1}});
  st.profile_id = "affine(alpha=" + format_exact(alpha) + ",beta=" + format_exact(beta) + ")";
  return st;
}

SteadyState lane_emden_solve(double p, const GridPtr& grid, const LaneEmdenOptions& options) {
  if (!(p > 1.0 && p < 5.0)) throw InvalidSpec("Lane-Emden exponent must lie in (1, 5)");
  auto pow_p = [p](double s) { return s > 0.0 ? std::pow(s, p) : 0.0; };
  auto normalize = [&](ScalarField u) {
    const double c = integral(u.map([&](double s) { return s > 0.0 ? std::pow(s, p + 1.0) : 0.0; }));
    if (!(c > 0.0)) throw NoConvergence("Lane-Emden iterate collapsed to zero");
    return u * std::pow(c, -1.0 / (p + 1.0));
  };

  // Projected gradient in the H1 metric: step towards the normalized G(u^p),
  // clamp to u >= 0, renormalize int u^{p+1} = 1.
  ScalarField u = normalize(principal_eigenpair(grid).vector);
  double tau = 1.0;
  double residual = kInf, prev = kInf;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const ScalarField w = normalize(green_apply(u.map(pow_p)));
    residual = l2(w - u) / l2(u);
    if (residual < options.tol) break;
    if (residual > prev) tau = std::max(0.5 * tau, 1.0 / 64.0);
    prev = residual;
    u = normalize(((1.0 - tau) * u + tau * w).map([](double s) { return std::max(s, 0.0); }));
  }
  if (!(residual < options.tol)) {
    throw NoConvergence("Lane-Emden iteration stopped at residual " + std::to_string(residual));
  }
  const double mu = dirichlet_energy(u);  // int u^{p+1} = 1
  const ScalarField psi = u * std::pow(mu, 1.0 / (p - 1.0));
  auto st = make_steady(lane_emden_profile(p), psi, "lane-emden", {{"p", p}, {"multiplier", mu}});
  st.iterations = it;
  st.profile_id = "lane-emden(p=" + format_exact(p) + ")";
  return st;
}

double dirichlet_energy(const ScalarField& psi) {
  const Grid& g = *psi.grid();
  double acc = 0.0;
  for (int j = 0; j < g.box_height(); ++j) {
    for (int i = 0; i < g.box_width(); ++i) {
      const double a = psi.at_box(i, j);
      if (i + 1 < g.box_width() && (g.interior(i, j) || g.interior(i + 1, j))) {
        const double d = psi.at_box(i + 1, j) - a;
        acc += d * d;
      }
      if (j + 1 < g.box_height() && (g.interior(i, j) || g.interior(i, j + 1))) {
        const double d = psi.at_box(i, j + 1) - a;
        acc += d * d;
      }
    }
  }
  return acc;
}

double steady_residual(const ScalarField& omega, const std::vector<ScalarField>& tests) {
  const VelocityField vel = perp_gradient(green_apply(omega));
  double worst = 0.0;
  for (const auto& xi : tests) {
    require_same_grid(omega, xi);
    const VelocityField gx = perp_gradient(xi);  // (xi_y, -xi_x)
    double flux = 0.0;
    for (std::size_t k = 0; k < omega.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      flux += omega[k] * (vel.u[kk] * -gx.v[kk] + vel.v[kk] * gx.u[kk]);
    }
    flux *= omega.grid()->cell_area();
    const double h1 = std::sqrt(inner(xi, xi) + (gx.u.squaredNorm() + gx.v.squaredNorm()) * xi.grid()->cell_area());
    if (h1 > 0.0) worst = std::max(worst, std::abs(flux) / h1);
  }
  return worst;
}

double steady_residual(const ScalarField& omega) {
  return steady_residual(omega, default_bump_family(omega.grid()));
}

nlohmann::json steady_metadata(const SteadyState& st) {
  nlohmann::json doc = st.parameters;
  doc["construction"] = st.construction;
  doc["profile_id"] = st.profile_id;
  doc["m"] = st.m;
  doc["M"] = st.M;
  doc["residuals"] = {{"fixed_point", st.residual_fixed_point},
                      {"profile", st.residual_profile},
                      {"weak", st.residual_weak}};
  doc["iterations"] = st.iterations;
  doc["monotonicity"] = st.increasing ? "nondecreasing" : st.decreasing ? "decreasing" : "none";
  if (st.increasing && st.increasing->g.pieces()) doc["profile"] = profile_to_json(*st.increasing);
  doc["grid"] = st.grid()->to_json();
  return doc;
}

void write_steady(const SteadyState& st, const std::filesystem::path& dir, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  write_snapshot(st.omega_bar, dir / "omega_bar", extra);
  write_snapshot(st.psi_bar, dir / "psi_bar", extra);
  nlohmann::json doc = steady_metadata(st);
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  std::ofstream out(dir / "steady.json");
  if (!out) throw SnapshotError("cannot write " + (dir / "steady.json").string());
  out << doc.dump(2) << '\n';
}

}  // namespace eulerstab
