#include "eulerstab/cli_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "eulerstab/energy_casimir.hpp"
#include "eulerstab/errors.hpp"
#include "eulerstab/spectral.hpp"

namespace eulerstab {

using nlohmann::json;

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("cli_harness", "SHA-256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported.
class Reader {
 public:
  Reader(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) fail("must be an object");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(where_ + ": " + what); }

  bool has(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key);
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return doc_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_number()) fail("'" + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail("'" + key + "' must be finite");
    return x;
  }

  long integer(const std::string& key, long fallback) {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_number_integer()) fail("'" + key + "' must be an integer");
    return v.get<long>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_boolean()) fail("'" + key + "' must be a boolean");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_string()) fail("'" + key + "' must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const auto& v = doc_.at(key);
    if (!v.is_array() || v.empty()) fail("'" + key + "' must be a non-empty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail("'" + key + "' must be a non-empty array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) fail("unknown key '" + key + "'");
    }
  }

 private:
  const json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, Reader& r, const std::string& what) {
  if (!ok) r.fail(what);
}

BumpSpec parse_bump(const json& doc, const std::string& where, const GridPtr& grid) {
  Reader r(doc, where);
  BumpSpec b;
  if (r.has("center")) {
    const auto& c = r.at("center");
    if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) r.fail("'center' must be [x, y]");
    b.cx = c[0].get<double>();
    b.cy = c[1].get<double>();
  }
  b.width = r.number("width", b.width);
  b.amplitude = r.number("amplitude", b.amplitude);
  r.finish();
  require(b.width > 0.0, r, "'width' must be positive");
  // The bump has to vanish on the boundary collar of the grid.
  const auto field = smooth_bump(grid, b);
  const auto collar = grid->collar(kCollarWidth);
  for (std::size_t k = 0; k < field.size(); ++k) {
    if (collar[k] && field[k] != 0.0) r.fail("bump reaches the boundary collar");
  }
  if (!(field.values().cwiseAbs().maxCoeff() > 0.0)) r.fail("bump misses every interior node");
  return b;
}

ExperimentConfig parse_single(const json& doc) {
  ExperimentConfig cfg;
  Reader top(doc, "config");

  // grid
  {
    if (!top.has("grid")) top.fail("missing 'grid'");
    Reader r(top.at("grid"), "grid");
    GridSpec& g = cfg.grid_spec;
    const auto shape = r.string("shape", "rectangle");
    if (shape == "rectangle") {
      g.shape = Shape::kRectangle;
      g.lx = r.number("lx", 1.0);
      g.ly = r.number("ly", 1.0);
      require(g.lx > 0.0 && g.ly > 0.0, r, "rectangle sides must be positive");
    } else if (shape == "disk") {
      g.shape = Shape::kDisk;
      g.radius = r.number("radius", 0.5);
      require(g.radius > 0.0, r, "'radius' must be positive");
    } else {
      r.fail("'shape' must be 'rectangle' or 'disk'");
    }
    const long n = r.integer("n", 64);
    require(n >= 8 && n <= 4096, r, "'n' must lie in [8, 4096]");
    g.n = static_cast<int>(n);
    const auto backend = r.string("backend", "direct");
    if (backend == "direct") {
      g.backend = SolverBackend::kDirect;
    } else if (backend == "cg") {
      g.backend = SolverBackend::kConjugateGradient;
    } else {
      r.fail("'backend' must be 'direct' or 'cg'");
    }
    r.finish();
    try {
      cfg.grid = Grid::build(g);
    } catch (const InvalidSpec& e) {
      r.fail(e.what());
    }
  }

  // profile
  {
    if (!top.has("profile")) top.fail("missing 'profile'");
    Reader r(top.at("profile"), "profile");
    ProfileConfig& p = cfg.profile;
    p.kind = r.string("kind", "affine");
    if (p.kind == "affine") {
      const bool abs = r.has("alpha"), rel = r.has("alpha_over_lambda1");
      require(!(abs && rel), r, "give either 'alpha' or 'alpha_over_lambda1'");
      if (abs) p.alpha = r.number("alpha", 0.0);
      else p.alpha_over_lambda1 = r.number("alpha_over_lambda1", 0.5);
      p.beta = r.number("beta", 1.0);
    } else if (p.kind == "lane-emden") {
      p.p = r.number("p", 3.0);
      require(p.p > 1.0 && p.p < 5.0, r, "'p' must lie in (1, 5)");
    } else if (p.kind == "piecewise") {
      if (!r.has("pieces")) r.fail("missing 'pieces'");
      try {
        p.pieces = pieces_from_json(r.at("pieces"));
      } catch (const Error& e) {
        r.fail(e.what());
      }
      if (p.pieces.empty()) r.fail("'pieces' must not be empty");
    } else {
      r.fail("'kind' must be 'affine', 'lane-emden' or 'piecewise'");
    }
    r.finish();
  }

  // construction
  {
    ConstructionConfig& c = cfg.construction;
    const std::string fallback = cfg.profile.kind == "affine" ? "linear"
                                 : cfg.profile.kind == "lane-emden" ? "lane-emden"
                                                                    : "semilinear";
    json empty = json::object();
    Reader r(top.has("construction") ? top.at("construction") : empty, "construction");
    c.method = r.string("method", fallback);
    if (c.method == "linear") {
      require(cfg.profile.kind == "affine", r, "'linear' needs an affine profile");
    } else if (c.method == "lane-emden") {
      require(cfg.profile.kind == "lane-emden", r, "'lane-emden' needs a lane-emden profile");
    } else if (c.method == "semilinear") {
      require(cfg.profile.kind != "lane-emden", r, "use method 'lane-emden' for the Lane-Emden profile");
    } else {
      r.fail("'method' must be 'linear', 'semilinear' or 'lane-emden'");
    }
    const auto solver = r.string("solver", "damped-fixed-point");
    if (solver == "damped-fixed-point") c.solver = SemilinearMethod::kDampedFixedPoint;
    else if (solver == "newton") c.solver = SemilinearMethod::kNewton;
    else r.fail("'solver' must be 'damped-fixed-point' or 'newton'");
    c.tol = r.number("tol", 1e-8);
    require(c.tol > 0.0, r, "'tol' must be positive");
    const long it = r.integer("max_iterations", 5000);
    require(it >= 1 && it <= 1000000, r, "'max_iterations' must lie in [1, 1e6]");
    c.max_iterations = static_cast<int>(it);
    r.finish();
  }

  // perturbations
  {
    PerturbationConfig& p = cfg.perturbations;
    json empty = json::object();
    Reader r(top.has("perturbations") ? top.at("perturbations") : empty, "perturbations");
    const long count = r.integer("count", 20);
    require(count >= 0 && count <= 100000, r, "'count' must lie in [0, 1e5]");
    p.count = static_cast<std::size_t>(count);
    p.t_min = r.number("t_min", p.t_min);
    p.t_max = r.number("t_max", p.t_max);
    require(p.t_min > 0.0 && p.t_max >= p.t_min, r, "need 0 < t_min <= t_max");
    p.snap = r.boolean("snap", true);
    if (r.has("specs")) {
      const auto& arr = r.at("specs");
      if (!arr.is_array()) r.fail("'specs' must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader s(arr[i], "perturbations.specs[" + std::to_string(i) + "]");
        PerturbationSpec spec;
        if (!s.has("xi")) s.fail("missing 'xi'");
        spec.xi = parse_bump(s.at("xi"), "perturbations.specs[" + std::to_string(i) + "].xi", cfg.grid);
        spec.t = s.number("t", 0.0);
        s.finish();
        p.specs.push_back(spec);
      }
    }
    r.finish();
  }

  // simulation
  {
    SimulationConfig& s = cfg.simulation;
    json empty = json::object();
    Reader r(top.has("simulation") ? top.at("simulation") : empty, "simulation");
    s.enabled = r.boolean("enabled", true);
    s.turnovers = r.number("turnovers", s.turnovers);
    require(s.turnovers > 0.0, r, "'turnovers' must be positive");
    s.cfl = r.number("cfl", s.cfl);
    require(s.cfl > 0.0 && s.cfl <= 0.5, r, "'cfl' must lie in (0, 0.5]");
    s.p_norms = r.numbers("p_norms", s.p_norms);
    for (double q : s.p_norms) require(q >= 1.0, r, "'p_norms' entries must be >= 1");
    const auto scheme = r.string("scheme", "arakawa-rk4");
    if (scheme != "arakawa-rk4" && scheme != "semi-lagrangian") {
      r.fail("'scheme' must be 'arakawa-rk4' or 'semi-lagrangian'");
    }
    s.scheme = scheme_from_string(scheme);
    s.sample_every_turnovers = r.number("sample_every_turnovers", s.sample_every_turnovers);
    require(s.sample_every_turnovers > 0.0, r, "'sample_every_turnovers' must be positive");
    s.amplitudes = r.numbers("amplitudes", s.amplitudes);
    for (double a : s.amplitudes) require(a > 0.0, r, "'amplitudes' entries must be positive");
    s.p = r.number("p", 2.0);
    require(s.p >= 1.0, r, "'p' must be >= 1");
    if (r.has("xi")) {
      const auto& x = r.at("xi");
      if (x.is_array()) {
        if (x.empty()) r.fail("'xi' must not be empty");
        for (std::size_t i = 0; i < x.size(); ++i) {
          s.xi.push_back(parse_bump(x[i], "simulation.xi[" + std::to_string(i) + "]", cfg.grid));
        }
      } else {
        s.xi.push_back(parse_bump(x, "simulation.xi", cfg.grid));
      }
    }
    r.finish();
  }

  // output
  {
    json empty = json::object();
    Reader r(top.has("output") ? top.at("output") : empty, "output");
    cfg.output.snapshots = r.boolean("snapshots", false);
    r.finish();
  }

  const long seed = top.integer("seed", 0);
  require(seed >= 0, top, "'seed' must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  if (top.has("sweep")) top.fail("'sweep' entries may not nest");
  top.finish();

  // Normalized document: every field explicit.
  json n;
  n["grid"] = grid_spec_to_json(cfg.grid_spec);
  json prof = {{"kind", cfg.profile.kind}};
  if (cfg.profile.kind == "affine") {
    if (cfg.profile.alpha) prof["alpha"] = *cfg.profile.alpha;
    if (cfg.profile.alpha_over_lambda1) prof["alpha_over_lambda1"] = *cfg.profile.alpha_over_lambda1;
    prof["beta"] = cfg.profile.beta;
  } else if (cfg.profile.kind == "lane-emden") {
    prof["p"] = cfg.profile.p;
  } else {
    prof["pieces"] = pieces_to_json(cfg.profile.pieces);
  }
  n["profile"] = prof;
  n["construction"] = {{"method", cfg.construction.method},
                       {"solver", cfg.construction.solver == SemilinearMethod::kNewton ? "newton" : "damped-fixed-point"},
                       {"tol", cfg.construction.tol},
                       {"max_iterations", cfg.construction.max_iterations}};
  json specs = json::array();
  for (const auto& s : cfg.perturbations.specs) specs.push_back(s.to_json());
  n["perturbations"] = {{"count", cfg.perturbations.count}, {"t_min", cfg.perturbations.t_min},
                        {"t_max", cfg.perturbations.t_max}, {"snap", cfg.perturbations.snap},
                        {"specs", specs}};
  const auto& s = cfg.simulation;
  n["simulation"] = {{"enabled", s.enabled},
                     {"turnovers", s.turnovers},
                     {"cfl", s.cfl},
                     {"p_norms", s.p_norms},
                     {"scheme", to_string(s.scheme)},
                     {"sample_every_turnovers", s.sample_every_turnovers},
                     {"amplitudes", s.amplitudes},
                     {"p", s.p}};
  if (!s.xi.empty()) {
    json xs = json::array();
    for (const auto& b : s.xi) xs.push_back(b.to_json());
    n["simulation"]["xi"] = xs;
  }
  n["output"] = {{"snapshots", cfg.output.snapshots}};
  n["seed"] = cfg.seed;
  cfg.normalized = n;
  cfg.hash = sha256_hex(n.dump());
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: must be an object");
  if (!doc.contains("sweep")) return parse_single(doc);

  const auto& entries = doc.at("sweep");
  if (!entries.is_array() || entries.empty()) throw ConfigError("config: 'sweep' must be a non-empty array");
  json base = doc;
  base.erase("sweep");
  ExperimentConfig cfg = parse_single(base);
  json merged = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].is_object()) throw ConfigError("config: sweep[" + std::to_string(i) + "] must be an object");
    json entry = base;
    entry.merge_patch(entries[i]);
    ExperimentConfig sub;
    try {
      sub = parse_single(entry);
    } catch (const ConfigError& e) {
      throw ConfigError("sweep[" + std::to_string(i) + "]: " + e.what());
    }
    cfg.sweep.push_back(sub.normalized);
    merged.push_back(sub.normalized);
  }
  cfg.normalized["sweep"] = merged;
  cfg.hash = sha256_hex(cfg.normalized.dump());
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return parse_config(doc);
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"grid",    "steady",   "certify",    "energy",
                                              "perturb", "simulate", "experiment", "sweep"};
  return names;
}

namespace {

std::string num(double x) { return format_exact(x); }

std::string ndjson(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

std::string pretty(const json& doc) { return doc.dump(2) + "\n"; }

SteadyState build_steady(const ExperimentConfig& cfg) {
  const auto& p = cfg.profile;
  const auto& c = cfg.construction;
  SemilinearOptions opts;
  opts.method = c.solver;
  opts.tol = c.tol;
  opts.max_iterations = c.max_iterations;
  if (p.kind == "affine") {
    const double alpha = p.alpha ? *p.alpha : *p.alpha_over_lambda1 * principal_eigenpair(cfg.grid).value;
    if (c.method == "linear") return linear_steady(alpha, p.beta, cfg.grid);
    auto st = solve_semilinear(affine_profile(alpha, p.beta), cfg.grid, ScalarField::zeros(cfg.grid), opts);
    st.profile_id = "affine(alpha=" + num(alpha) + ",beta=" + num(p.beta) + ")";
    st.parameters["alpha"] = alpha;
    st.parameters["beta"] = p.beta;
    return st;
  }
  if (p.kind == "lane-emden") return lane_emden_solve(p.p, cfg.grid);
  auto st = solve_semilinear(ScalarFn::piecewise(p.pieces), cfg.grid, ScalarField::zeros(cfg.grid), opts);
  st.profile_id = "piecewise:" + sha256_hex(pieces_to_json(p.pieces).dump()).substr(0, 16);
  return st;
}

std::vector<PerturbationSpec> sample_specs(const ExperimentConfig& cfg) {
  auto specs = cfg.perturbations.specs;
  const auto rnd = random_perturbations(cfg.grid, cfg.perturbations.count, cfg.seed, cfg.perturbations.t_min,
                                        cfg.perturbations.t_max);
  specs.insert(specs.end(), rnd.begin(), rnd.end());
  return specs;
}

std::vector<BumpSpec> experiment_bumps(const ExperimentConfig& cfg) {
  return cfg.simulation.xi.empty() ? default_dipole(*cfg.grid) : cfg.simulation.xi;
}

json with_hash(json doc, const ExperimentConfig& cfg) {
  doc["config_hash"] = cfg.hash;
  return doc;
}

void add_steady(Artifacts& a, const SteadyState& st, const ExperimentConfig& cfg) {
  a.files["steady.json"] = pretty(with_hash(steady_metadata(st), cfg));
}

StabilityCertificate certify(const SteadyState& st, const std::vector<ScalarField>& samples) {
  auto cert = classify_stability(st);
  if (!samples.empty()) cert.sampled_form_min = sampled_form_minimum(st, samples);
  return cert;
}

std::vector<json> energy_rows(const SupportingReport& rep, const std::vector<PerturbationSpec>& specs,
                              const ExperimentConfig& cfg) {
  std::vector<json> rows;
  for (const auto& s : rep.samples) {
    json r = s.to_json();
    r["spec"] = specs[s.sample_id].to_json();
    r["config_hash"] = cfg.hash;
    rows.push_back(std::move(r));
  }
  return rows;
}

ExperimentOptions experiment_options(const ExperimentConfig& cfg, int jobs) {
  ExperimentOptions o;
  o.xi = experiment_bumps(cfg);
  o.amplitudes = cfg.simulation.amplitudes;
  o.turnovers = cfg.simulation.turnovers;
  o.p = cfg.simulation.p;
  o.cfl = cfg.simulation.cfl;
  o.scheme = cfg.simulation.scheme;
  o.jobs = jobs;
  o.sample_every_turnovers = cfg.simulation.sample_every_turnovers;
  return o;
}

Artifacts run_experiment(const ExperimentConfig& cfg, const RunContext& ctx) {
  Artifacts a;
  spdlog::info("constructing steady state ({})", cfg.construction.method);
  const SteadyState st = build_steady(cfg);
  add_steady(a, st, cfg);

  const auto specs = sample_specs(cfg);
  spdlog::info("sampling {} perturbations", specs.size());
  const auto samples = class_samples(st.omega_bar, specs, cfg.perturbations.snap);

  spdlog::info("certifying");
  const auto cert = certify(st, samples);
  a.files["certificate.json"] = pretty(with_hash(cert.to_json(), cfg));

  spdlog::info("energy-Casimir checks");
  const auto rep = supporting_gap(st, samples, cfg.perturbations.snap ? -1.0 : kInf);
  a.files["energy.ndjson"] = ndjson(energy_rows(rep, specs, cfg));

  json summary = {{"classification", to_string(cert.classification)},
                  {"lambda1", cert.lambda1},
                  {"mu1", cert.mu1},
                  {"delta", cert.delta ? json(*cert.delta) : json(nullptr)},
                  {"energy", rep.summary()}};

  std::string csv = "config_hash,amplitude,epsilon,sup_deviation,ratio,mass_drift,energy_drift,classification\n";
  if (cfg.simulation.enabled) {
    spdlog::info("stability experiment over {} amplitudes", cfg.simulation.amplitudes.size());
    auto exp = stability_experiment(st, experiment_options(cfg, ctx.jobs));
    exp.classification = to_string(cert.classification);
    std::vector<json> rows;
    for (std::size_t i = 0; i < exp.ladder.size(); ++i) {
      const auto& l = exp.ladder[i];
      for (auto row : l.diagnostics.rows()) {
        row["amplitude_index"] = i;
        row["amplitude"] = l.amplitude;
        row["config_hash"] = cfg.hash;
        rows.push_back(std::move(row));
      }
      csv += cfg.hash + "," + num(l.amplitude) + "," + num(l.epsilon) + "," + num(l.sup_deviation) + "," +
             num(l.ratio) + "," + num(l.mass_drift) + "," + num(l.energy_drift) + "," + exp.classification + "\n";
    }
    a.files["diagnostics.ndjson"] = ndjson(rows);
    a.files["experiment.json"] = pretty(with_hash(exp.to_json(), cfg));
    summary["experiment"] = exp.to_json();
  }
  a.files["summary.csv"] = csv;
  a.summary = summary;
  if (cfg.output.snapshots) {
    a.snapshots.emplace_back("omega_bar", st.omega_bar);
    a.snapshots.emplace_back("psi_bar", st.psi_bar);
  }
  return a;
}

Artifacts run_sweep(const ExperimentConfig& cfg, const RunContext& ctx) {
  const std::size_t n = cfg.sweep.size();
  std::vector<Artifacts> parts(n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::string> hashes(n);
  auto work = [&](std::size_t i) {
    try {
      const auto sub = parse_single(cfg.sweep[i]);
      hashes[i] = sub.hash;
      parts[i] = run_experiment(sub, RunContext{1});
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, ctx.jobs));
  for (std::size_t start = 0; start < n; start += jobs) {
    std::vector<std::thread> pool;
    for (std::size_t i = start; i < std::min(n, start + jobs); ++i) {
      if (jobs == 1) work(i);
      else pool.emplace_back(work, i);
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Artifacts a;
  std::string csv = "entry,config_hash,sweep_hash,classification,lambda1,mu1,delta,min_gap,min_e_drop,max_ratio,ratio_spread\n";
  json entries = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    char dir[32];
    std::snprintf(dir, sizeof dir, "entries/%03zu/", i);
    for (const auto& [name, body] : parts[i].files) a.files[dir + name] = body;
    for (const auto& [name, field] : parts[i].snapshots) a.snapshots.emplace_back(dir + name, field);
    const json& s = parts[i].summary;
    auto field = [&](const json& v) { return v.is_number() ? num(v.get<double>()) : std::string(); };
    std::string max_ratio, spread;
    if (s.contains("experiment")) {
      double worst = 0.0;
      for (const auto& l : s["experiment"]["ladder"]) worst = std::max(worst, l["ratio"].get<double>());
      max_ratio = num(worst);
      spread = field(s["experiment"]["ratio_spread"]);
    }
    csv += std::to_string(i) + "," + hashes[i] + "," + cfg.hash + "," + s["classification"].get<std::string>() + "," +
           field(s["lambda1"]) + "," + field(s["mu1"]) + "," + field(s["delta"]) + "," +
           field(s["energy"]["min_gap"]) + "," + field(s["energy"]["min_e_drop"]) + "," + max_ratio + "," + spread +
           "\n";
    json e = s;
    e["entry"] = i;
    e["config_hash"] = hashes[i];
    entries.push_back(e);
  }
  a.files["summary.csv"] = csv;
  a.files["sweep.json"] = pretty(with_hash({{"entries", entries}}, cfg));
  return a;
}

}  // namespace

Artifacts run_subcommand(const std::string& name, const ExperimentConfig& cfg, const RunContext& ctx) {
  Artifacts a;
  if (name == "sweep") {
    if (cfg.sweep.empty()) throw ConfigError("config: 'sweep' needs a 'sweep' array");
    return run_sweep(cfg, ctx);
  }
  if (!cfg.sweep.empty()) throw ConfigError("config: 'sweep' entries are only valid for the sweep subcommand");

  if (name == "grid") {
    const auto eig = principal_eigenpair(cfg.grid);
    json doc = cfg.grid->to_json();
    doc["area"] = cfg.grid->area();
    doc["lambda1"] = eig.value;
    doc["halo_nodes"] = cfg.grid->halo().size();
    doc["mask_rle"] = mask_rle(*cfg.grid);
    a.files["grid.json"] = pretty(with_hash(doc, cfg));
    return a;
  }
  if (name == "experiment") return run_experiment(cfg, ctx);

  const SteadyState st = build_steady(cfg);
  if (name == "steady") {
    add_steady(a, st, cfg);
    a.snapshots.emplace_back("omega_bar", st.omega_bar);
    a.snapshots.emplace_back("psi_bar", st.psi_bar);
    return a;
  }
  if (name == "certify") {
    std::vector<ScalarField> samples;
    if (cfg.perturbations.count > 0 || !cfg.perturbations.specs.empty()) {
      samples = class_samples(st.omega_bar, sample_specs(cfg), cfg.perturbations.snap);
    }
    a.files["certificate.json"] = pretty(with_hash(certify(st, samples).to_json(), cfg));
    return a;
  }
  if (name == "energy") {
    const auto specs = sample_specs(cfg);
    const auto samples = class_samples(st.omega_bar, specs, cfg.perturbations.snap);
    const auto rep = supporting_gap(st, samples, cfg.perturbations.snap ? -1.0 : kInf);
    a.files["energy.ndjson"] = ndjson(energy_rows(rep, specs, cfg));
    a.files["energy_summary.json"] = pretty(with_hash(rep.summary(), cfg));
    return a;
  }
  if (name == "perturb") {
    const auto specs = sample_specs(cfg);
    const auto samples = class_samples(st.omega_bar, specs, cfg.perturbations.snap);
    std::vector<json> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      rows.push_back({{"sample_id", i},
                      {"spec", specs[i].to_json()},
                      {"distance", lp_norm(samples[i] - st.omega_bar, 2.0)},
                      {"class_distance", rearrangement_distance(samples[i], st.omega_bar)},
                      {"config_hash", cfg.hash}});
      if (cfg.output.snapshots) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "samples/%05zu", i);
        a.snapshots.emplace_back(stem, samples[i]);
      }
    }
    a.files["perturbations.ndjson"] = ndjson(rows);
    return a;
  }
  if (name == "simulate") {
    const auto opts = experiment_options(cfg, 1);
    double t_flow = 0.0;
    const ScalarField xi = bump_sum(cfg.grid, opts.xi);
    const ScalarField omega0 = perturb_to_amplitude(st.omega_bar, xi, opts.amplitudes.front() * lp_norm(st.omega_bar, opts.p),
                                                    opts.p, &t_flow);
    const double halo = st.g(0.0);
    const double speed = advection_speed(make_state(st.omega_bar, halo));
    const double turnover = speed > 0.0 ? cfg.grid->length_scale() / speed : 1.0;
    RunOptions ro;
    ro.T = cfg.simulation.turnovers * turnover;
    ro.cfl = cfg.simulation.cfl;
    ro.p_norms = cfg.simulation.p_norms;
    ro.deviation_p = cfg.simulation.p;
    ro.scheme = cfg.simulation.scheme;
    ro.sample_every = cfg.simulation.sample_every_turnovers * turnover;
    const auto res = run(make_state(omega0, halo), ro, &st);
    std::vector<json> rows;
    for (auto row : res.diagnostics.rows()) {
      row["config_hash"] = cfg.hash;
      rows.push_back(std::move(row));
    }
    a.files["diagnostics.ndjson"] = ndjson(rows);
    json drifts;
    for (double q : res.diagnostics.p_values) drifts["lp_" + num(q)] = res.diagnostics.lp_drift(q);
    drifts["mass"] = res.diagnostics.mass_drift();
    drifts["energy"] = res.diagnostics.energy_drift();
    json summary = {{"turnover_time", turnover},
                    {"T", ro.T},
                    {"t_flow", t_flow},
                    {"epsilon", lp_norm(omega0 - st.omega_bar, opts.p)},
                    {"sup_deviation", res.diagnostics.max_deviation()},
                    {"drifts", drifts},
                    {"steps", res.final_state.step_count},
                    {"scheme", to_string(ro.scheme)}};
    a.files["simulate_summary.json"] = pretty(with_hash(summary, cfg));
    if (cfg.output.snapshots) a.snapshots.emplace_back("omega_final", res.final_state.omega);
    return a;
  }
  throw ConfigError("unknown subcommand '" + name + "'");
}

void write_artifacts(const Artifacts& artifacts, const ExperimentConfig& cfg, const std::string& subcommand,
                     const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  json files = json::object();
  for (const auto& [name, body] : artifacts.files) {
    const auto path = out / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cli_harness", "cannot write " + path.string());
    f << body;
    files[name] = sha256_hex(body);
  }
  for (const auto& [stem, field] : artifacts.snapshots) {
    const auto path = out / stem;
    std::filesystem::create_directories(path.parent_path());
    write_snapshot(field, path, {{"config_hash", cfg.hash}});
    for (const char* ext : {".bin", ".json"}) {
      std::ifstream in(out / (stem + ext), std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      files[stem + ext] = sha256_hex(buf.str());
    }
  }
  json manifest = {{"config_hash", cfg.hash},
                   {"subcommand", subcommand},
                   {"config", cfg.normalized},
                   {"files", files},
                   {"versions",
                    {{"eulerstab", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"boost", BOOST_LIB_VERSION},
                     {"compiler", __VERSION__}}}};
  std::ofstream m(out / "manifest.json");
  if (!m) throw Error("cli_harness", "cannot write manifest");
  m << manifest.dump(2) << '\n';
}

int run_config(const std::string& subcommand, const std::filesystem::path& config_path,
               const std::filesystem::path& out, const RunContext& ctx) {
  try {
    const auto cfg = load_config(config_path);
    if (std::find(subcommands().begin(), subcommands().end(), subcommand) == subcommands().end()) {
      throw ConfigError("unknown subcommand '" + subcommand + "'");
    }
    spdlog::info("config {} hash {}", config_path.string(), cfg.hash);
    const auto artifacts = run_subcommand(subcommand, cfg, ctx);
    write_artifacts(artifacts, cfg, subcommand, out);
    spdlog::info("wrote {} artifacts to {}", artifacts.files.size() + artifacts.snapshots.size() + 1, out.string());
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const Error& e) {
    spdlog::error("[{}] {}", e.module(), e.what());
    return 3;
  }
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Stability certificates and experiments for steady 2D Euler flows"};
  std::string config, out = "out", level = "info";
  int jobs = 1;
  app.add_option("--config", config, "Experiment config (JSON)")->required();
  app.add_option("--out", out, "Output directory");
  app.add_option("--jobs", jobs, "Concurrent sweep entries or trajectories")->check(CLI::PositiveNumber);
  app.add_option("--log-level", level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  app.require_subcommand(1);
  for (const auto& name : subcommands()) app.add_subcommand(name, "Run the " + name + " pipeline")->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto logger = spdlog::stderr_color_mt("eulerstab");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    return run_config(sub, config, out, RunContext{jobs});
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace eulerstab
