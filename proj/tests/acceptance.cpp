// Acceptance suite: one [PASS]/[FAIL] line per criterion, details on stderr.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "eulerstab/cli_harness.hpp"
#include "eulerstab/energy_casimir.hpp"
#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/simulator.hpp"
#include "eulerstab/spectral.hpp"
#include "eulerstab/steady_flows.hpp"
#include "support.hpp"

using namespace eulerstab;
namespace ts = testsupport;

namespace {

struct Check {
  std::string what;
  bool ok;
};

struct Outcome {
  std::vector<Check> checks;
  void expect(bool ok, const std::string& what) {
    checks.push_back({what, ok});
    if (!ok) std::fprintf(stderr, "    failed: %s\n", what.c_str());
  }
  bool ok() const {
    for (const auto& c : checks) {
      if (!c.ok) return false;
    }
    return true;
  }
};

std::string fmt(const char* f, double a) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

GridPtr square(int n) {
  GridSpec s;
  s.n = n;
  return Grid::build(s);
}

// ---------------------------------------------------------------- 1
void monotone_suite(Outcome& out) {
  std::mt19937_64 rng(20240601);
  double inv_err = 0.0, dec_err = 0.0, min_gap = kInf, eq_gap = 0.0, drift = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const bool strict = trial % 2 == 1;
    const auto pieces = ts::random_monotone_pieces(rng, strict);
    const ScalarFn q = ScalarFn::piecewise(pieces);
    const ScalarFn p = generalized_inverse(q, InverseMode::kNondecreasing);
    const double lo = q(pieces.front().hi) - 2.0, hi = q(pieces.back().lo) + 2.0;
    for (int i = 0; i < 20; ++i) {
      const double s = ts::uniform(rng, lo, hi);
      inv_err = std::max(inv_err, std::abs(q(p(s)) - s) / std::max(1.0, std::abs(s)));
    }
    if (strict) {
      const ScalarFn qd = ScalarFn::callable([q](double s) { return q(-s); }, [q](double s) { return -q.deriv(-s); });
      const ScalarFn pd = generalized_inverse(qd, InverseMode::kDecreasing);
      for (int i = 0; i < 20; ++i) {
        const double s = ts::uniform(rng, -4.0, 4.0);
        dec_err = std::max(dec_err, std::abs(pd(qd(s)) - s) / std::max(1.0, std::abs(s)));
      }
    }

    // Fenchel-Young and the antiderivative route on the extension of q|[m, M].
    const double m = pieces.front().hi - 0.5, M = pieces.back().lo + 0.5;
    const auto prof = extend_monotone(q, m, M);
    for (int i = 0; i < 10; ++i) {
      const double tau = ts::uniform(rng, m - 2.0, M + 2.0);
      const double s = ts::uniform(rng, prof.g_ext(m - 2.0), prof.g_ext(M + 2.0));
      min_gap = std::min(min_gap, fenchel_gap(prof, s, tau));
      eq_gap = std::max(eq_gap, std::abs(fenchel_gap(prof, prof.g_ext(tau), tau)));
    }
    const ScalarFn P = antiderivative(prof.g_inv);
    const double c0 = prof.G_hat(0.0) - P(0.0);
    for (int i = 0; i < 10; ++i) {
      const double s = ts::uniform(rng, prof.g_ext(m - 2.0), prof.g_ext(M + 2.0));
      drift = std::max(drift, std::abs(prof.G_hat(s) - P(s) - c0));
    }
  }
  std::fprintf(stderr, "    q(p(s))-s %.3g, p(q(s))-s %.3g, min gap %.3g, gap at s=g(tau) %.3g, Qhat-P drift %.3g\n",
               inv_err, dec_err, min_gap, eq_gap, drift);
  out.expect(inv_err < 1e-10, fmt("q(p(s)) = s within 1e-10 (%.3g)", inv_err));
  out.expect(dec_err < 1e-10, fmt("p(q(s)) = s within 1e-10 (%.3g)", dec_err));
  out.expect(min_gap >= -1e-10, fmt("Fenchel-Young gap >= -1e-10 (%.3g)", min_gap));
  out.expect(eq_gap < 1e-8, fmt("gap vanishes at s = g(tau) (%.3g)", eq_gap));
  out.expect(drift < 1e-9, fmt("Qhat - P constant within 1e-9 (%.3g)", drift));
}

// ---------------------------------------------------------------- 2
void extension_suite(Outcome& out) {
  std::mt19937_64 rng(77);
  double junction = 0.0, value_jump = 0.0, min_slope = kInf;
  bool exact = true;
  auto one_sided = [](const ScalarFn& f, double s, double dir) { return f.deriv(std::nextafter(s, s + dir)); };
  auto check = [&](const ScalarFn& g, double m, double M) {
    const auto prof = extend_monotone(g, m, M);
    junction = std::max(junction, std::abs(one_sided(prof.g_ext, m, -1.0) - g.deriv(m)));
    junction = std::max(junction, std::abs(one_sided(prof.g_ext, M, 1.0) - g.deriv(M)));
    for (double s : {m - 1.0, M + 1.0}) {
      junction = std::max(junction, std::abs(one_sided(prof.g_ext, s, -1.0) - one_sided(prof.g_ext, s, 1.0)));
      value_jump = std::max(value_jump, std::abs(prof.g_ext(std::nextafter(s, -kInf)) - prof.g_ext(std::nextafter(s, kInf))));
    }
    value_jump = std::max(value_jump, std::abs(prof.g_ext(std::nextafter(m, -kInf)) - g(m)));
    value_jump = std::max(value_jump, std::abs(prof.g_ext(std::nextafter(M, kInf)) - g(M)));
    min_slope = std::min({min_slope, prof.c1, prof.c2});
    for (int i = 0; i <= 64; ++i) {
      const double s = i == 64 ? M : m + (M - m) * i / 64.0;
      if (prof.g_ext(s) != g(s)) { exact = false; std::fprintf(stderr, "    mismatch s=%.17g m=%.17g M=%.17g ext=%.17g g=%.17g\n", s, m, M, prof.g_ext(s), g(s)); }
    }
  };
  check(ScalarFn::polynomial({0.0, 0.0, 1.0}), 1.0, 2.0);
  check(ScalarFn::polynomial({0.0, 0.0, 1.0}), 0.0, 1.0);
  check(ScalarFn::polynomial({0.0, 0.0, 0.0, 1.0}), 0.0, 1.0);
  check(ScalarFn::polynomial({1.0, 0.0}), -1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pieces = ts::random_monotone_pieces(rng, false);
    // endpoints inside pieces, so g is differentiable there
    const auto& a = pieces[1 + rng() % (pieces.size() - 2)];
    const auto& b = pieces[1 + rng() % (pieces.size() - 2)];
    double m = ts::uniform(rng, a.lo, a.hi), M = ts::uniform(rng, b.lo, b.hi);
    if (m > M) std::swap(m, M);
    check(ScalarFn::piecewise(pieces), m, M);
  }
  std::fprintf(stderr, "    junction derivative mismatch %.3g, value jump %.3g, min slope %.3g\n", junction, value_jump,
               min_slope);
  out.expect(junction < 1e-10, fmt("junctions C1 within 1e-10 (%.3g)", junction));
  out.expect(value_jump < 1e-10, fmt("junctions continuous (%.3g)", value_jump));
  out.expect(min_slope > 0.0, fmt("asymptotic slopes positive (min %.3g)", min_slope));
  out.expect(exact, "extension equals g on [m, M] at nodes");
}

// ---------------------------------------------------------------- 3
void eigen_suite(Outcome& out) {
  const double exact = 2.0 * M_PI * M_PI;
  std::vector<double> errs;
  for (int n : {32, 64, 128}) {
    const auto e = principal_eigenpair(square(n));
    errs.push_back(std::abs(e.value - exact));
    std::fprintf(stderr, "    n=%d lambda1=%.10f rel err %.3g residual %.3g\n", n, e.value, errs.back() / exact,
                 e.residual);
  }
  out.expect(errs[2] / exact < 0.01, fmt("lambda1 within 1%% of 2 pi^2 at 129^2 (%.3g)", errs[2] / exact));
  const double r1 = std::log2(errs[0] / errs[1]), r2 = std::log2(errs[1] / errs[2]);
  out.expect(r1 > 1.8 && r2 > 1.8, fmt2("O(h^2) convergence (orders %.3f, %.3f)", r1, r2));

  const auto g = square(64);
  const auto c = ScalarField::from_function(g, [](double x, double y) { return std::sin(3 * x) * std::cos(2 * y) * 4.0; });
  const double mu = principal_eigenpair(c).value;
  double shift_err = 0.0;
  for (double k : {-5.0, 3.0, 11.0}) {
    shift_err = std::max(shift_err, std::abs(principal_eigenpair(c + ScalarField::constant(g, k)).value - (mu + k)));
  }
  out.expect(shift_err < 1e-8, fmt("mu1(c + k) = mu1(c) + k within 1e-8 (%.3g)", shift_err));

  const auto small = square(16);
  const double lam = principal_eigenpair(small).value;
  double dense_err = 0.0;
  std::vector<ScalarField> ws{ScalarField::constant(small, 0.5 * lam), ScalarField::constant(small, 1.5 * lam),
                              ScalarField::from_function(small, [](double x, double y) { return 10.0 + 30.0 * x * y; }),
                              ScalarField::from_function(small, [&](double x, double y) {
                                const double r2 = (x - 0.4) * (x - 0.4) + (y - 0.55) * (y - 0.55);
                                return lam * std::exp(-r2 / 0.01);
                              })};
  for (const auto& w : ws) dense_err = std::max(dense_err, std::abs(coercivity_delta(w) - ts::dense_delta(w)));
  out.expect(dense_err < 1e-8, fmt("coercivity delta matches dense solve on 17^2 (%.3g)", dense_err));
}

// ---------------------------------------------------------------- 4
void certificate_suite(Outcome& out) {
  const auto g = square(64);
  const double lam = principal_eigenpair(g).value;
  for (double ratio : {0.5, 0.9}) {
    const auto cert = classify_stability(linear_steady(ratio * lam, 1.0, g));
    const bool ok = cert.classification == Classification::kThm1Semistable &&
                    cert.has_label(Classification::kArnoldSecond) && cert.has_label(Classification::kWolanskyGhil);
    out.expect(ok, fmt("alpha = %.1f lambda1 -> Thm1Semistable with ArnoldSecond and WolanskyGhil labels", ratio));
  }
  {
    const auto cert = classify_stability(linear_steady(1.5 * lam, 1.0, g));
    out.expect(cert.classification == Classification::kNone && cert.mu1 < 0.0,
               fmt("alpha = 1.5 lambda1 -> None with mu1 < 0 (mu1 %.4g)", cert.mu1));
  }
  {
    const auto cert = classify_stability(linear_steady(-1.0, 1.0, g));
    out.expect(cert.classification == Classification::kArnoldFirst,
               "decreasing g -> ArnoldFirst (" + to_string(cert.classification) + ")");
  }
  {
    const double p = 3.0;
    const auto st = lane_emden_solve(p, g);
    const auto cert = classify_stability(st);
    out.expect(cert.classification == Classification::kNone,
               "Lane-Emden p=3 -> None (" + to_string(cert.classification) + ")");
    const double grad = dirichlet_energy(st.psi_bar);
    const double ip = integral(st.psi_bar.map([&](double s) { return std::pow(std::max(s, 0.0), p + 1.0); }));
    const double lhs = grad - p * ip, rhs = (1.0 - p) * ip;
    const double rel = std::abs(lhs - rhs) / std::abs(rhs);
    std::fprintf(stderr, "    Lane-Emden mu1 %.4g, identity rel err %.3g\n", cert.mu1, rel);
    out.expect(rel < 1e-6, fmt("Lane-Emden identity within 1e-6 relative (%.3g)", rel));
  }
}

// ---------------------------------------------------------------- 5
void supporting_suite(Outcome& out) {
  const auto g = square(64);
  const double lam = principal_eigenpair(g).value;
  const auto st = linear_steady(0.5 * lam, 1.0, g);
  const auto specs = random_perturbations(g, 100, 11, 1e-4, 3e-2);
  const auto samples = class_samples(st.omega_bar, specs, true);
  const auto rep = supporting_gap(st, samples);
  const double ref_lambda = std::abs(*rep.reference.lambda_bar);
  const double ref_gap = std::abs(*rep.reference.D_hat - rep.reference.EC);
  out.expect(ref_lambda < 1e-9, fmt("lambda_bar(omega_bar) = 0 within 1e-9 (%.3g)", ref_lambda));
  out.expect(ref_gap < 1e-9, fmt("D_hat(omega_bar) = EC(omega_bar) within 1e-9 (%.3g)", ref_gap));
  out.expect(*rep.min_gap >= -1e-10, fmt("D_hat >= EC - 1e-10 over 100 samples (min gap %.3g)", *rep.min_gap));

  const double norm = lp_norm(st.omega_bar, 2.0);
  int in_range = 0, violations = 0;
  for (const auto& s : rep.samples) {
    if (s.distance > 1e-4 * norm && s.distance < 0.1 * norm) {
      ++in_range;
      if (!(s.e_drop > 0.0)) ++violations;
    }
  }
  std::fprintf(stderr, "    %d of 100 samples in range, E drops %.3g..%.3g\n", in_range, rep.min_e_drop, rep.max_e_drop);
  out.expect(in_range >= 50 && violations == 0,
             fmt2("E(omega_bar) > E(omega) in range (%g samples, %g violations)", double(in_range), double(violations)));

  const auto first = linear_steady(-1.0, 1.0, g);
  const auto mirrored = supporting_gap(first, class_samples(first.omega_bar, specs, true));
  int bad = 0, nonzero = 0;
  for (const auto& s : mirrored.samples) {
    if (s.distance > 0.0) {
      ++nonzero;
      if (!(s.e_drop < 0.0)) ++bad;
    }
  }
  out.expect(nonzero > 0 && bad == 0, fmt2("ArnoldFirst flow: E(omega_bar) < E(omega) (%g samples, %g violations)", double(nonzero), double(bad)));
}

// ---------------------------------------------------------------- 6
ScalarField generic_vorticity(const GridPtr& g) {
  BumpSpec a{0.38, 0.42, 0.3, 1.0}, b{0.64, 0.6, 0.25, -0.7};
  auto w = smooth_bump(g, a) + smooth_bump(g, b);
  return w + ScalarField::from_function(g, [](double x, double y) { return 0.3 * std::sin(M_PI * x) * std::sin(M_PI * y); });
}

void simulator_suite(Outcome& out) {
  std::vector<double> e_drift, z_drift;
  for (int n : {32, 64, 128}) {
    const auto g = square(n);
    const auto w0 = generic_vorticity(g);
    const double tt = turnover_time(w0);
    RunOptions ro;
    ro.T = 5.0 * tt;
    ro.casimir = false;
    const auto res = run(w0, ro);
    const auto& d = res.diagnostics;
    e_drift.push_back(d.energy_drift());
    z_drift.push_back(d.lp_drift(2.0));
    std::fprintf(stderr, "    n=%d steps %ld mass %.3g E %.3g L2 %.3g\n", n, res.final_state.step_count, d.mass_drift(),
                 e_drift.back(), z_drift.back());
    if (n == 128) {
      out.expect(d.mass_drift() / 5.0 < 1e-6, fmt("mass drift per turnover < 1e-6 (%.3g)", d.mass_drift() / 5.0));
      out.expect(e_drift.back() < 1e-2 && z_drift.back() < 1e-2,
                 fmt2("E and L2 drifts < 1e-2 (%.3g, %.3g)", e_drift.back(), z_drift.back()));
    }
  }
  // Refinement order of the drifts; quadratic or better counts.
  for (int k = 0; k < 2; ++k) {
    const double oe = std::log2(e_drift[k] / e_drift[k + 1]), oz = std::log2(z_drift[k] / z_drift[k + 1]);
    out.expect(oe > 1.5 && oz > 1.5, fmt2("drifts decrease at about O(h^2) or faster (orders %.2f, %.2f)", oe, oz));
  }

  const auto g = square(128);
  const auto phi = principal_eigenpair(g).vector * 10.0;
  RunOptions ro;
  ro.T = 0.0;
  auto state = make_state(phi);
  const double dt = 0.5 * g->h() / advection_speed(state);
  for (int i = 0; i < 100; ++i) state = step(state, dt);
  const double rel = lp_norm(state.omega - phi, 2.0) / lp_norm(phi, 2.0);
  out.expect(rel < 1e-3, fmt("phi1 flow holds its shape over 100 steps (%.3g)", rel));
}

// ---------------------------------------------------------------- 7
void experiment_suite(Outcome& out) {
  const auto g = square(128);
  const double lam = principal_eigenpair(g).value;
  const auto st = linear_steady(0.5 * lam, 1.0, g);
  ExperimentOptions eo;
  eo.turnovers = 10.0;
  const auto rep = stability_experiment(st, eo);
  double worst = 0.0;
  for (const auto& l : rep.ladder) {
    std::fprintf(stderr, "    amplitude %.0e epsilon %.4g ratio %.6f mass %.2g energy %.2g\n", l.amplitude, l.epsilon,
                 l.ratio, l.mass_drift, l.energy_drift);
    worst = std::max(worst, l.ratio);
  }
  out.expect(worst <= 5.0, fmt("sup ratio <= 5 for every amplitude (max %.4g)", worst));
  out.expect(rep.ratio_spread() < 2.0, fmt("ratio varies by less than 2x (%.4g)", rep.ratio_spread()));
}

// ---------------------------------------------------------------- 8
std::map<std::string, std::string> slurp_tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    files[std::filesystem::relative(e.path(), root).string()] = buf.str();
  }
  return files;
}

void reproducibility_suite(Outcome& out) {
  const auto base = std::filesystem::temp_directory_path() / "eulerstab_acceptance";
  std::filesystem::remove_all(base);
  std::filesystem::create_directories(base);
  const nlohmann::json cfg = {
      {"grid", {{"shape", "rectangle"}, {"n", 32}}},
      {"profile", {{"kind", "affine"}, {"alpha_over_lambda1", 0.5}, {"beta", 1.0}}},
      {"perturbations", {{"count", 20}}},
      {"simulation", {{"turnovers", 2.0}}},
      {"output", {{"snapshots", true}}},
      {"seed", 3}};
  nlohmann::json sweep = cfg;
  sweep["sweep"] = {{{"profile", {{"alpha_over_lambda1", 0.9}}}},
                    {{"grid", {{"shape", "disk"}, {"radius", 0.5}}}},
                    {{"profile", {{"kind", "lane-emden"}, {"alpha_over_lambda1", nullptr}, {"beta", nullptr}}}}};
  std::ofstream(base / "cfg.json") << cfg.dump(2);
  std::ofstream(base / "sweep.json") << sweep.dump(2);

  bool all_same = true;
  for (const auto& sub : subcommands()) {
    const auto cfg_path = base / (sub == "sweep" ? "sweep.json" : "cfg.json");
    const int rc1 = run_config(sub, cfg_path, base / (sub + "_a"), RunContext{1});
    const int rc2 = run_config(sub, cfg_path, base / (sub + "_b"), RunContext{sub == "sweep" ? 3 : 1});
    const auto a = slurp_tree(base / (sub + "_a")), b = slurp_tree(base / (sub + "_b"));
    const bool same = rc1 == 0 && rc2 == 0 && !a.empty() && a == b;
    std::fprintf(stderr, "    %s: %zu files, %s\n", sub.c_str(), a.size(), same ? "identical" : "DIFFERENT");
    all_same = all_same && same;
  }
  out.expect(all_same, "reruns produce byte-identical outputs for every subcommand");
  std::filesystem::remove_all(base);
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Outcome&)> body;
  };
  const std::vector<Criterion> criteria{
      {1, "monotone calculus", 10.0, monotone_suite},
      {2, "extensions", 1.0, extension_suite},
      {3, "eigenvalue oracles", 60.0, eigen_suite},
      {4, "certificate truth table", 120.0, certificate_suite},
      {5, "supporting functional", 300.0, supporting_suite},
      {6, "simulator conservation", 600.0, simulator_suite},
      {7, "stability experiment", 1800.0, experiment_suite},
      {8, "reproducibility", kInf, reproducibility_suite},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    std::fprintf(stderr, "criterion %d: %s\n", c.id, c.name);
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.expect(secs < c.budget_s, fmt2("runtime %.2f s within %.0f s", secs, c.budget_s));
    std::printf("[%s] %d %s (%.2f s)\n", o.ok() ? "PASS" : "FAIL", c.id, c.name, secs);
    std::fflush(stdout);
    if (!o.ok()) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
