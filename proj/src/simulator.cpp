#include "eulerstab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "eulerstab/errors.hpp"

namespace eulerstab {

std::string to_string(Scheme s) { return s == Scheme::kArakawaRK4 ? "arakawa-rk4" : "semi-lagrangian"; }

Scheme scheme_from_string(const std::string& name) {
  if (name == "arakawa-rk4") return Scheme::kArakawaRK4;
  if (name == "semi-lagrangian") return Scheme::kSemiLagrangian;
  throw Error("simulator", "unknown scheme '" + name + "'");
}

Eigen::VectorXd SimState::extended() const {
  Eigen::VectorXd out(omega.values().size() + halo.size());
  out << omega.values(), halo;
  return out;
}

SimState make_state(const ScalarField& omega, double halo_value) {
  SimState s;
  s.omega = omega;
  s.psi = green_apply(omega);
  s.halo = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(omega.grid()->halo().size()), halo_value);
  return s;
}

namespace {

// Box arrays padded by one node on every side, so every 8-neighbour of a halo
// node is addressable.
class Padded {
 public:
  explicit Padded(const Grid& g) : pw_(g.box_width() + 2), ph_(g.box_height() + 2) {
    interior_.resize(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) interior_[k] = at(g.node_i(k), g.node_j(k));
    halo_.reserve(g.halo().size());
    for (int b : g.halo()) halo_.push_back(at(b % g.box_width(), b / g.box_width()));
  }

  int at(int i, int j) const { return (j + 1) * pw_ + (i + 1); }
  int stride() const { return pw_; }
  std::size_t cells() const { return static_cast<std::size_t>(pw_) * static_cast<std::size_t>(ph_); }
  const std::vector<int>& interior() const { return interior_; }
  const std::vector<int>& halo() const { return halo_; }

  void scatter(const Eigen::VectorXd& interior_values, const Eigen::VectorXd* halo_values,
               std::vector<double>& out) const {
    out.assign(cells(), 0.0);
    for (std::size_t k = 0; k < interior_.size(); ++k) {
      out[static_cast<std::size_t>(interior_[k])] = interior_values[static_cast<Eigen::Index>(k)];
    }
    if (halo_values) {
      for (std::size_t k = 0; k < halo_.size(); ++k) {
        out[static_cast<std::size_t>(halo_[k])] = (*halo_values)[static_cast<Eigen::Index>(k)];
      }
    }
  }

 private:
  int pw_, ph_;
  std::vector<int> interior_, halo_;
};

// Arakawa's Jacobian J(psi, w) ~ psi_x w_y - psi_y w_x at padded cell c.
inline double arakawa(const double* p, const double* w, int c, int s, double inv12h2) {
  const int e = c + 1, wv = c - 1, n = c + s, so = c - s;
  const int ne = n + 1, nw = n - 1, se = so + 1, sw = so - 1;
  const double jpp = (p[e] - p[wv]) * (w[n] - w[so]) - (p[n] - p[so]) * (w[e] - w[wv]);
  const double jpx = p[e] * (w[ne] - w[se]) - p[wv] * (w[nw] - w[sw]) - p[n] * (w[ne] - w[nw]) + p[so] * (w[se] - w[sw]);
  const double jxp = w[n] * (p[ne] - p[nw]) - w[so] * (p[se] - p[sw]) - w[e] * (p[ne] - p[se]) + w[wv] * (p[nw] - p[sw]);
  return (jpp + jpx + jxp) * inv12h2;
}

struct Tendency {
  Eigen::VectorXd interior;
  Eigen::VectorXd halo;
};

Tendency arakawa_rhs(const Padded& pad, const Grid& g, const Eigen::VectorXd& psi, const Eigen::VectorXd& omega,
                     const Eigen::VectorXd& halo) {
  std::vector<double> P, W;
  pad.scatter(psi, nullptr, P);
  pad.scatter(omega, &halo, W);
  const double inv12h2 = 1.0 / (12.0 * g.h() * g.h());
  Tendency t{Eigen::VectorXd(omega.size()), Eigen::VectorXd(halo.size())};
  for (std::size_t k = 0; k < pad.interior().size(); ++k) {
    t.interior[static_cast<Eigen::Index>(k)] = arakawa(P.data(), W.data(), pad.interior()[k], pad.stride(), inv12h2);
  }
  for (std::size_t k = 0; k < pad.halo().size(); ++k) {
    t.halo[static_cast<Eigen::Index>(k)] = arakawa(P.data(), W.data(), pad.halo()[k], pad.stride(), inv12h2);
  }
  return t;
}

SimState arakawa_step(const SimState& s, double dt) {
  const Grid& g = *s.omega.grid();
  const Padded pad(g);
  const GreenOperator& green = g.green();
  const Eigen::VectorXd& w0 = s.omega.values();
  const Eigen::VectorXd& h0 = s.halo;

  const Tendency k1 = arakawa_rhs(pad, g, s.psi.values(), w0, h0);
  Eigen::VectorXd w = w0 + 0.5 * dt * k1.interior, h = h0 + 0.5 * dt * k1.halo;
  const Tendency k2 = arakawa_rhs(pad, g, green.solve(w), w, h);
  w = w0 + 0.5 * dt * k2.interior;
  h = h0 + 0.5 * dt * k2.halo;
  const Tendency k3 = arakawa_rhs(pad, g, green.solve(w), w, h);
  w = w0 + dt * k3.interior;
  h = h0 + dt * k3.halo;
  const Tendency k4 = arakawa_rhs(pad, g, green.solve(w), w, h);

  SimState out;
  out.t = s.t + dt;
  out.step_count = s.step_count + 1;
  Eigen::VectorXd wn = w0 + (dt / 6.0) * (k1.interior + 2.0 * k2.interior + 2.0 * k3.interior + k4.interior);
  out.halo = h0 + (dt / 6.0) * (k1.halo + 2.0 * k2.halo + 2.0 * k3.halo + k4.halo);
  out.omega = ScalarField(s.omega.grid(), std::move(wn));
  out.psi = green_apply(out.omega);
  return out;
}

SimState semi_lagrangian_step(const SimState& s, double dt) {
  const GridPtr& grid = s.omega.grid();
  const VelocityField vf = perp_gradient(s.psi);
  const ScalarField u(grid, vf.u), v(grid, vf.v);
  SimState out;
  out.t = s.t + dt;
  out.step_count = s.step_count + 1;
  out.halo = s.halo;
  Eigen::VectorXd wn(s.omega.values().size());
  for (std::size_t k = 0; k < s.omega.size(); ++k) {
    const double x = grid->x(k), y = grid->y(k);
    const double xm = x - 0.5 * dt * u[k], ym = y - 0.5 * dt * v[k];
    const double um = sample_bilinear(u, xm, ym, Outside::kZero);
    const double vm = sample_bilinear(v, xm, ym, Outside::kZero);
    wn[static_cast<Eigen::Index>(k)] = sample_bilinear(s.omega, x - dt * um, y - dt * vm, Outside::kRenormalize);
  }
  out.omega = ScalarField(grid, std::move(wn));
  out.psi = green_apply(out.omega);
  return out;
}

double lp_of(const Eigen::VectorXd& v, double p, double area) {
  if (std::isinf(p)) return v.cwiseAbs().maxCoeff();
  if (p == 2.0) return std::sqrt(v.squaredNorm() * area);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) acc += std::pow(std::abs(v[k]), p);
  return std::pow(acc * area, 1.0 / p);
}

}  // namespace

double advection_speed(const SimState& state) {
  const Grid& g = *state.omega.grid();
  double best = perp_gradient(state.psi).max_speed();
  for (int b : g.halo()) {
    const int i = b % g.box_width(), j = b / g.box_width();
    const double u = (state.psi.at_box(i, j + 1) - state.psi.at_box(i, j - 1)) / (2.0 * g.h());
    const double v = (state.psi.at_box(i + 1, j) - state.psi.at_box(i - 1, j)) / (2.0 * g.h());
    best = std::max(best, std::hypot(u, v));
  }
  return best;
}

SimState step(const SimState& state, double dt, Scheme scheme) {
  const double h = state.omega.grid()->h();
  const double speed = advection_speed(state);
  if (!(dt >= 0.0) || speed * dt > 0.5 * h * (1.0 + 1e-12)) {
    throw CFLViolation("max|v| dt = " + format_exact(speed * dt) + " exceeds 0.5 h = " + format_exact(0.5 * h));
  }
  return scheme == Scheme::kArakawaRK4 ? arakawa_step(state, dt) : semi_lagrangian_step(state, dt);
}

double turnover_time(const ScalarField& omega) {
  const double speed = advection_speed(make_state(omega));
  return speed > 0.0 ? omega.grid()->length_scale() / speed : kInf;
}

double TrajectoryDiagnostics::max_relative_drift(const std::vector<double>& series) const {
  if (series.empty()) return 0.0;
  const double base = series.front();
  double worst = 0.0;
  for (double x : series) worst = std::max(worst, std::abs(x - base));
  return base != 0.0 ? worst / std::abs(base) : worst;
}

double TrajectoryDiagnostics::lp_drift(double p) const {
  for (std::size_t i = 0; i < p_values.size(); ++i) {
    if (p_values[i] == p) return max_relative_drift(lp_norms[i]);
  }
  throw Error("simulator", "p = " + format_exact(p) + " was not tracked");
}

double TrajectoryDiagnostics::max_deviation() const {
  double worst = 0.0;
  for (double d : deviation) worst = std::max(worst, d);
  return worst;
}

std::vector<nlohmann::json> TrajectoryDiagnostics::rows() const {
  std::vector<nlohmann::json> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    nlohmann::json row;
    row["t"] = times[i];
    row["step"] = steps[i];
    row["E"] = energy[i];
    row["mass"] = mass[i];
    nlohmann::json lp;
    for (std::size_t q = 0; q < p_values.size(); ++q) lp[format_exact(p_values[q])] = lp_norms[q][i];
    row["lp"] = lp;
    row["dist_gap"] = dist_curve_gap[i];
    if (!deviation.empty()) row["deviation"] = deviation[i];
    if (!casimir.empty()) {
      row["casimir"] = casimir[i];
      row["EC"] = energy[i] - casimir[i];
    }
    out.push_back(std::move(row));
  }
  return out;
}

RunResult run(const ScalarField& omega0, const RunOptions& options, const SteadyState* reference) {
  const double halo = reference && reference->g.valid() ? reference->g(0.0) : 0.0;
  return run(make_state(omega0, halo), options, reference);
}

RunResult run(const SimState& initial, const RunOptions& options, const SteadyState* reference) {
  if (!(options.T >= 0.0) || !(options.cfl > 0.0)) throw Error("simulator", "T must be >= 0 and cfl > 0");
  const Grid& g = *initial.omega.grid();
  const double area = g.cell_area();
  RunResult res;
  auto& d = res.diagnostics;
  d.p_values = options.p_norms;
  d.lp_norms.assign(options.p_norms.size(), {});
  const double speed0 = advection_speed(initial);
  d.turnover_time = speed0 > 0.0 ? g.length_scale() / speed0 : kInf;

  const Eigen::VectorXd ext0 = initial.extended();
  std::vector<double> levels;
  {
    const double lo = ext0.minCoeff(), hi = ext0.maxCoeff();
    const int n = std::max(options.thresholds, 2);
    for (int i = 0; i < n; ++i) levels.push_back(lo + (hi - lo) * (i + 0.5) / n);
  }
  auto measures = [&](const Eigen::VectorXd& v) {
    std::vector<double> sorted(v.data(), v.data() + v.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    for (double a : levels) {
      out.push_back(static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), a)) * area);
    }
    return out;
  };
  const auto mu0 = measures(ext0);

  Eigen::VectorXd ref_ext;
  if (reference) {
    require_same_grid(reference->omega_bar, initial.omega);
    ref_ext = make_state(reference->omega_bar, reference->g.valid() ? reference->g(0.0) : 0.0).extended();
  }
  const MonotoneProfile* profile =
      options.casimir && reference && reference->increasing ? &*reference->increasing : nullptr;

  auto record = [&](const SimState& s) {
    const Eigen::VectorXd ext = s.extended();
    d.times.push_back(s.t);
    d.steps.push_back(s.step_count);
    d.energy.push_back(0.5 * s.omega.values().dot(s.psi.values()) * area);
    d.mass.push_back(ext.sum() * area);
    for (std::size_t q = 0; q < options.p_norms.size(); ++q) d.lp_norms[q].push_back(lp_of(ext, options.p_norms[q], area));
    const auto mu = measures(ext);
    double gap = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) gap = std::max(gap, std::abs(mu[i] - mu0[i]));
    d.dist_curve_gap.push_back(gap);
    if (reference) d.deviation.push_back(lp_of(ext - ref_ext, options.deviation_p, area));
    if (profile) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < ext.size(); ++k) acc += profile->G_hat(ext[k]);
      d.casimir.push_back(acc * area);
    }
  };

  SimState s = initial;
  record(s);
  const double every = options.sample_every > 0.0 ? options.sample_every : options.T / 50.0;
  const double eps = 1e-12 * std::max(1.0, options.T);
  long k = 1;
  while (s.t < options.T - eps) {
    const double target = std::min(static_cast<double>(k) * every, options.T);
    const double speed = advection_speed(s);
    double dt = speed > 0.0 ? options.cfl * g.h() / speed : target - s.t;
    bool hit = false;
    if (s.t + dt >= target - eps) {
      dt = target - s.t;
      hit = true;
    }
    s = step(s, dt, options.scheme);
    if (hit) {
      s.t = target;
      record(s);
      ++k;
    }
  }
  res.final_state = std::move(s);
  return res;
}

ScalarField perturb_to_amplitude(const ScalarField& omega_bar, const ScalarField& xi, double target, double p,
                                 double* t_out) {
  if (!(target > 0.0)) {
    if (t_out) *t_out = 0.0;
    return omega_bar;
  }
  // Initial guess from the linearization ||grad-perp xi . grad omega_bar||_p.
  const VelocityField v = perp_gradient(xi);
  const VelocityField gw = perp_gradient(omega_bar);  // (w_y, -w_x)
  Eigen::VectorXd adv(v.u.size());
  for (Eigen::Index k = 0; k < adv.size(); ++k) adv[k] = v.u[k] * -gw.v[k] + v.v[k] * gw.u[k];
  const double slope = lp_of(adv, p, omega_bar.grid()->cell_area());
  if (!(slope > 0.0)) throw Error("simulator", "perturbation does not move omega_bar");
  auto dist = [&](double t) { return lp_norm(perturb_area_preserving(omega_bar, xi, t) - omega_bar, p); };
  auto close = [&](double d) { return std::abs(d - target) <= 1e-3 * target; };
  double t = target / slope;
  double d = dist(t);
  for (int it = 0; it < 8 && !close(d) && d > 0.0; ++it) {
    t *= target / d;
    d = dist(t);
  }
  if (!close(d)) {
    // Rescaling stalls once d(t) bends over; bracket the first crossing
    // from small t and bisect.
    double lo = 0.0, hi = 0.25 * target / slope;
    while (dist(hi) < target) {
      lo = hi;
      hi *= 1.25;
      if (hi > 400.0 * target / slope) throw Error("simulator", "perturbation cannot reach amplitude " + format_exact(target));
    }
    for (int it = 0; it < 60; ++it) {
      t = 0.5 * (lo + hi);
      d = dist(t);
      if (close(d)) break;
      (d < target ? lo : hi) = t;
    }
  }
  if (t_out) *t_out = t;
  return perturb_area_preserving(omega_bar, xi, t);
}

nlohmann::json AmplitudeReport::to_json() const {
  return {{"amplitude", amplitude},  {"t_flow", t_flow},           {"epsilon", epsilon},
          {"sup_deviation", sup_deviation}, {"ratio", ratio},        {"mass_drift", mass_drift},
          {"energy_drift", energy_drift},   {"lp_drifts", lp_drifts}};
}

double ExperimentReport::ratio_spread() const {
  if (ladder.empty()) return 1.0;
  double lo = kInf, hi = 0.0;
  for (const auto& a : ladder) {
    lo = std::min(lo, a.ratio);
    hi = std::max(hi, a.ratio);
  }
  return lo > 0.0 ? hi / lo : kInf;
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json doc;
  doc["turnover_time"] = turnover_time;
  doc["T"] = T;
  doc["p"] = p;
  doc["ratio_spread"] = ratio_spread();
  auto arr = nlohmann::json::array();
  for (const auto& a : ladder) arr.push_back(a.to_json());
  doc["ladder"] = arr;
  if (!classification.empty()) doc["classification"] = classification;
  return doc;
}

ExperimentReport stability_experiment(const SteadyState& steady, const ExperimentOptions& options) {
  const GridPtr& grid = steady.grid();
  const double halo = steady.g.valid() ? steady.g(0.0) : 0.0;
  ExperimentReport rep;
  rep.p = options.p;
  const double speed = advection_speed(make_state(steady.omega_bar, halo));
  rep.turnover_time = speed > 0.0 ? grid->length_scale() / speed : 1.0;
  rep.T = options.turnovers * rep.turnover_time;
  const double norm_bar = lp_norm(steady.omega_bar, options.p);
  const ScalarField xi = bump_sum(grid, options.xi.empty() ? default_dipole(*grid) : options.xi);

  rep.ladder.resize(options.amplitudes.size());
  auto work = [&](std::size_t i) {
    AmplitudeReport& a = rep.ladder[i];
    a.amplitude = options.amplitudes[i];
    const ScalarField omega0 = perturb_to_amplitude(steady.omega_bar, xi, a.amplitude * norm_bar, options.p, &a.t_flow);
    a.epsilon = lp_norm(omega0 - steady.omega_bar, options.p);
    RunOptions ro;
    ro.T = rep.T;
    ro.cfl = options.cfl;
    ro.scheme = options.scheme;
    ro.deviation_p = options.p;
    ro.sample_every = options.sample_every_turnovers * rep.turnover_time;
    ro.casimir = false;
    auto r = run(make_state(omega0, halo), ro, &steady);
    a.sup_deviation = r.diagnostics.max_deviation();
    a.ratio = a.epsilon > 0.0 ? a.sup_deviation / a.epsilon : 0.0;
    a.mass_drift = r.diagnostics.mass_drift();
    a.energy_drift = r.diagnostics.energy_drift();
    for (double p : r.diagnostics.p_values) a.lp_drifts.push_back(r.diagnostics.lp_drift(p));
    a.diagnostics = std::move(r.diagnostics);
  };

  const std::size_t jobs = static_cast<std::size_t>(std::max(1, options.jobs));
  std::vector<std::exception_ptr> errors(rep.ladder.size());
  for (std::size_t start = 0; start < rep.ladder.size(); start += jobs) {
    std::vector<std::thread> pool;
    const std::size_t stop = std::min(rep.ladder.size(), start + jobs);
    for (std::size_t i = start; i < stop; ++i) {
      if (jobs == 1) {
        work(i);
        continue;
      }
      pool.emplace_back([&, i] {
        try {
          work(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rep;
}

}  // namespace eulerstab
