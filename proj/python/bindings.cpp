#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <spdlog/spdlog.h>

#include "eulerstab/cli_harness.hpp"
#include "eulerstab/energy_casimir.hpp"
#include "eulerstab/errors.hpp"
#include "eulerstab/grid_domain.hpp"
#include "eulerstab/monotone_calculus.hpp"
#include "eulerstab/rearrangement.hpp"
#include "eulerstab/simulator.hpp"
#include "eulerstab/spectral.hpp"
#include "eulerstab/steady_flows.hpp"

namespace py = pybind11;
using namespace eulerstab;
using nlohmann::json;

namespace {

// pybind11 holders can't point at const, so grids travel in a handle
struct GridHandle {
  GridPtr ptr;
};

// json crosses the boundary as text; python's json module rebuilds it
py::object to_py(const json& doc) { return py::module_::import("json").attr("loads")(doc.dump()); }
json from_py(const py::object& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

GridHandle make_grid(const std::string& shape, int n, double lx, double ly, double radius, const std::string& backend) {
  GridSpec s;
  s.n = n;
  s.lx = lx;
  s.ly = ly;
  s.radius = radius;
  if (shape == "disk") {
    s.shape = Shape::kDisk;
  } else if (shape != "rectangle") {
    throw InvalidSpec("shape must be rectangle or disk, got " + shape);
  }
  if (backend == "cg") {
    s.backend = SolverBackend::kConjugateGradient;
  } else if (backend != "direct") {
    throw InvalidSpec("backend must be direct or cg, got " + backend);
  }
  return {Grid::build(s)};
}

ScalarField field_from(const GridHandle& h, const Eigen::VectorXd& v) {
  const auto& g = h.ptr;
  if (static_cast<std::size_t>(v.size()) != g->size()) {
    throw GridMismatch("expected " + std::to_string(g->size()) + " values, got " + std::to_string(v.size()));
  }
  return ScalarField(g, v);
}

BumpSpec bump_from(const py::dict& d) { return BumpSpec::from_json(from_py(d)); }

}  // namespace

PYBIND11_MODULE(_eulerstab, m) {
  m.doc() = "Nonlinear stability toolkit for steady 2D Euler flows";
  m.attr("__version__") = kVersion;
  spdlog::set_level(spdlog::level::warn);

  static py::exception<Error> base(m, "EulerstabError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("set_log_level", [](const std::string& level) { spdlog::set_level(spdlog::level::from_str(level)); });

  // grid_domain
  py::class_<GridHandle>(m, "Grid")
      .def(py::init(&make_grid), py::arg("shape") = "rectangle", py::arg("n") = 64, py::arg("lx") = 1.0,
           py::arg("ly") = 1.0, py::arg("radius") = 0.5, py::arg("backend") = "direct")
      .def_property_readonly("h", [](const GridHandle& g) { return g.ptr->h(); })
      .def_property_readonly("size", [](const GridHandle& g) { return g.ptr->size(); })
      .def_property_readonly("area", [](const GridHandle& g) { return g.ptr->area(); })
      .def_property_readonly("nx", [](const GridHandle& g) { return g.ptr->nx(); })
      .def_property_readonly("ny", [](const GridHandle& g) { return g.ptr->ny(); })
      .def_property_readonly("halo_size", [](const GridHandle& g) { return g.ptr->halo().size(); })
      .def("coordinates",
           [](const GridHandle& h) {
             const Grid& g = *h.ptr;
             Eigen::MatrixXd xy(static_cast<Eigen::Index>(g.size()), 2);
             for (std::size_t k = 0; k < g.size(); ++k) {
               xy(static_cast<Eigen::Index>(k), 0) = g.x(k);
               xy(static_cast<Eigen::Index>(k), 1) = g.y(k);
             }
             return xy;
           })
      .def("to_json", [](const GridHandle& g) { return to_py(g.ptr->to_json()); });

  py::class_<ScalarField>(m, "Field")
      .def(py::init(&field_from), py::arg("grid"), py::arg("values"))
      .def_property_readonly("grid", [](const ScalarField& f) { return GridHandle{f.grid()}; })
      .def_property_readonly("values", [](const ScalarField& f) { return f.values(); })
      .def("__add__", [](const ScalarField& a, const ScalarField& b) { return a + b; })
      .def("__sub__", [](const ScalarField& a, const ScalarField& b) { return a - b; })
      .def("__mul__", [](const ScalarField& a, double s) { return a * s; })
      .def("__rmul__", [](const ScalarField& a, double s) { return a * s; })
      .def("__len__", &ScalarField::size);

  m.def("green_apply", py::overload_cast<const ScalarField&>(&green_apply));
  m.def("apply_laplacian", &apply_laplacian);
  m.def("integral", &integral);
  m.def("lp_norm", &lp_norm);
  m.def("energy_inner", &energy_inner);

  // monotone_calculus
  py::class_<ScalarFn>(m, "ScalarFn")
      .def_static("affine", &ScalarFn::affine)
      .def_static("polynomial", &ScalarFn::polynomial)
      .def_static("sampled", &ScalarFn::sampled)
      .def_static("callable", [](std::function<double(double)> f, std::function<double(double)> df) {
        return ScalarFn::callable(std::move(f), std::move(df));
      }, py::arg("f"), py::arg("df") = nullptr)
      .def("__call__", &ScalarFn::operator())
      .def("deriv", &ScalarFn::deriv)
      .def("breakpoints", &ScalarFn::breakpoints);

  m.def("generalized_inverse", [](const ScalarFn& q, bool decreasing) {
    return generalized_inverse(q, decreasing ? InverseMode::kDecreasing : InverseMode::kNondecreasing);
  }, py::arg("q"), py::arg("decreasing") = false);
  m.def("antiderivative", &antiderivative);

  py::class_<MonotoneProfile>(m, "MonotoneProfile")
      .def_readonly("g_ext", &MonotoneProfile::g_ext)
      .def_readonly("G", &MonotoneProfile::G)
      .def_readonly("G_hat", &MonotoneProfile::G_hat)
      .def_readonly("g_inv", &MonotoneProfile::g_inv)
      .def_readonly("m", &MonotoneProfile::m)
      .def_readonly("M", &MonotoneProfile::M)
      .def_readonly("c1", &MonotoneProfile::c1)
      .def_readonly("c2", &MonotoneProfile::c2);
  m.def("extend_monotone", [](const ScalarFn& g, double lo, double hi) { return extend_monotone(g, lo, hi); });
  m.def("fenchel_gap", &fenchel_gap);

  // steady_flows
  py::class_<SteadyState>(m, "SteadyState")
      .def_readonly("omega_bar", &SteadyState::omega_bar)
      .def_readonly("psi_bar", &SteadyState::psi_bar)
      .def_readonly("g", &SteadyState::g)
      .def_readonly("m", &SteadyState::m)
      .def_readonly("M", &SteadyState::M)
      .def_readonly("profile", &SteadyState::increasing)
      .def_readonly("residual_fixed_point", &SteadyState::residual_fixed_point)
      .def_readonly("residual_profile", &SteadyState::residual_profile)
      .def_readonly("iterations", &SteadyState::iterations)
      .def_property_readonly("grid", [](const SteadyState& s) { return GridHandle{s.grid()}; })
      .def("metadata", [](const SteadyState& s) { return to_py(steady_metadata(s)); });

  m.def("linear_steady", [](double a, double b, const GridHandle& g) { return linear_steady(a, b, g.ptr); }, py::arg("alpha"), py::arg("beta"), py::arg("grid"));
  m.def("lane_emden_solve", [](double p, const GridHandle& g) { return lane_emden_solve(p, g.ptr); });
  m.def("solve_semilinear", [](const ScalarFn& g, const GridHandle& h, double tol, int max_iterations, bool newton) {
    const auto& grid = h.ptr;
    SemilinearOptions o;
    o.tol = tol;
    o.max_iterations = max_iterations;
    o.method = newton ? SemilinearMethod::kNewton : SemilinearMethod::kDampedFixedPoint;
    return solve_semilinear(g, grid, ScalarField::zeros(grid), o);
  }, py::arg("g"), py::arg("grid"), py::arg("tol") = 1e-8, py::arg("max_iterations") = 5000, py::arg("newton") = false);
  m.def("steady_residual", py::overload_cast<const ScalarField&>(&steady_residual));

  // spectral
  m.def("principal_eigenvalue", [](const GridHandle& g) {
    const auto e = principal_eigenpair(g.ptr);
    return py::make_tuple(e.value, e.vector);
  });
  m.def("principal_eigenvalue_with_potential", [](const ScalarField& c) {
    const auto e = principal_eigenpair(c);
    return py::make_tuple(e.value, e.vector);
  });
  m.def("coercivity_delta", &coercivity_delta);
  m.def("classify_stability", [](const SteadyState& s, double tol) {
    ClassifyOptions o;
    o.tol = tol;
    return to_py(classify_stability(s, o).to_json());
  }, py::arg("steady"), py::arg("tol") = 1e-6);

  // energy_casimir
  m.def("kinetic_energy", &kinetic_energy);
  m.def("ec_functional", [](const ScalarField& w, const MonotoneProfile& p) { return to_py(ec_functional(w, p).to_json()); });
  m.def("supporting_gap", [](const SteadyState& s, const std::vector<ScalarField>& samples) {
    return to_py(supporting_gap(s, samples).summary());
  });

  // rearrangement
  m.def("smooth_bump", [](const GridHandle& g, const py::dict& d) { return smooth_bump(g.ptr, bump_from(d)); });
  m.def("rearrangement_distance", &rearrangement_distance);
  m.def("perturb_area_preserving", &perturb_area_preserving, py::arg("omega"), py::arg("xi"), py::arg("t"));
  m.def("project_to_class", &project_to_class);
  m.def("distribution_function", [](const ScalarField& w, const std::vector<double>& levels) {
    return distribution_function(w, levels).measures;
  });
  m.def("class_samples", [](const ScalarField& omega_bar, std::size_t count, std::uint64_t seed, bool snap) {
    return class_samples(omega_bar, random_perturbations(omega_bar.grid(), count, seed, 1e-4, 3e-2), snap);
  }, py::arg("omega_bar"), py::arg("count") = 20, py::arg("seed") = 0, py::arg("snap") = true);

  // simulator
  m.def("turnover_time", &turnover_time);
  m.def("simulate", [](const ScalarField& w, double T, double cfl, const std::string& scheme, double halo) {
    RunOptions o;
    o.T = T;
    o.cfl = cfl;
    o.scheme = scheme_from_string(scheme);
    o.casimir = false;
    py::gil_scoped_release nogil;
    auto r = run(make_state(w, halo), o);
    py::gil_scoped_acquire gil;
    py::list rows;
    for (const auto& row : r.diagnostics.rows()) rows.append(to_py(row));
    return py::make_tuple(r.final_state.omega, rows);
  }, py::arg("omega"), py::arg("T"), py::arg("cfl") = 0.5, py::arg("scheme") = "arakawa-rk4", py::arg("halo") = 0.0);
  m.def("stability_experiment", [](const SteadyState& s, std::vector<double> amplitudes, double turnovers, int jobs) {
    ExperimentOptions o;
    o.amplitudes = std::move(amplitudes);
    o.turnovers = turnovers;
    o.jobs = jobs;
    py::gil_scoped_release nogil;
    const auto rep = stability_experiment(s, o);
    py::gil_scoped_acquire gil;
    return to_py(rep.to_json());
  }, py::arg("steady"), py::arg("amplitudes") = std::vector<double>{1e-3, 1e-2, 1e-1}, py::arg("turnovers") = 10.0,
     py::arg("jobs") = 1);

  // cli_harness
  m.def("normalize_config", [](const py::object& doc) {
    const auto cfg = parse_config(from_py(doc));
    return py::make_tuple(to_py(cfg.normalized), cfg.hash);
  });
  m.def("run_subcommand", [](const std::string& name, const py::object& doc, int jobs) {
    const auto cfg = parse_config(from_py(doc));
    const auto art = run_subcommand(name, cfg, RunContext{jobs});
    py::dict files;
    for (const auto& [k, v] : art.files) files[py::str(k)] = py::bytes(v);
    return files;
  }, py::arg("name"), py::arg("config"), py::arg("jobs") = 1);
  m.def("run_config", [](const std::string& sub, const std::filesystem::path& cfg, const std::filesystem::path& out,
                         int jobs) { return run_config(sub, cfg, out, RunContext{jobs}); },
        py::arg("subcommand"), py::arg("config"), py::arg("out"), py::arg("jobs") = 1);
  m.def("subcommands", &subcommands);
}
