#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rmfgl/error.hpp"
#include "rmfgl/experiments.hpp"
#include "rmfgl/gl.hpp"
#include "rmfgl/limit.hpp"
#include "rmfgl/rmf.hpp"
#include "rmfgl/stats.hpp"

namespace py = pybind11;
using namespace rmfgl;
using nlohmann::json;

namespace {

// Configs cross the boundary as JSON text; the Python side calls json.dumps.
ExperimentConfig parse(const std::string& text) {
  auto cfg = config_from_json(json::parse(text));
  validate_config(cfg);
  return cfg;
}

py::dict summary_dict(const CountingSummary& s) {
  py::dict d;
  d["K"] = s.K;
  d["times"] = s.times;
  d["counts"] = s.counts;
  d["lambda"] = s.lambda;
  d["integral"] = s.integral;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "RMF Galves-Loecherbach simulation core";
  m.attr("__version__") = RMFGL_VERSION;

  // Kept alive for the lifetime of the interpreter.
  static py::handle error_type = py::exception<Error>(m, "RmfglError", PyExc_ValueError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("validate_config", [](const std::string& text) {
    return config_to_json(parse(text)).dump();
  }, "Parses and validates a config; returns its normalized JSON.");

  m.def("simulate_gl", [](const std::string& text, std::uint64_t path_id) {
    const auto cfg = parse(text);
    GlOptions go;
    go.grid_step = cfg.grid_step;
    const auto path =
        simulate_gl(validate_params(cfg.params), cfg.init, cfg.horizon, cfg.seed, path_id, go);
    return summary_dict(path.summary);
  }, py::arg("config"), py::arg("path_id") = 0);

  m.def("simulate_rmf", [](const std::string& text, int M, std::uint64_t path_id, bool embedded) {
    const auto cfg = parse(text);
    RmfOptions ro;
    ro.grid_step = cfg.grid_step;
    ro.engine = embedded ? Engine::Embedded : Engine::Direct;
    const auto path = simulate_rmf(validate_params(cfg.params), M, cfg.init, cfg.horizon, cfg.seed,
                                   path_id, ro);
    py::dict d;
    d["M"] = path.M;
    d["K"] = path.K;
    d["times"] = path.times;
    d["counts"] = path.counts;
    d["lambda"] = path.lambda;
    d["integral"] = path.integral;
    d["focal_channels"] = path.tallies.front().channel;
    return d;
  }, py::arg("config"), py::arg("M"), py::arg("path_id") = 0, py::arg("embedded") = false);

  m.def("picard_means", [](const std::string& text, std::int64_t paths, int threads) {
    const auto cfg = parse(text);
    PicardOptions po;
    po.grid_step = cfg.grid_step;
    po.threads = threads;
    PicardResult res;
    {
      py::gil_scoped_release release;
      res = picard_solve_means(validate_params(cfg.params), cfg.init, cfg.horizon, paths,
                               picard_seed(cfg.seed), po);
    }
    py::dict d;
    d["times"] = res.means.times;
    d["mean"] = res.means.mean;
    d["se"] = res.means.se;
    d["cumulative"] = res.means.cumulative;
    d["gaps"] = res.gaps;
    d["converged"] = res.converged;
    return d;
  }, py::arg("config"), py::arg("paths"), py::arg("threads") = 1);

  m.def("single_neuron_pmf", [](double lambda0, double r, double t) {
    return single_neuron_law(lambda0, r, t).pmf;
  });

  m.def("poisson_pmf", [](double mean) { return poisson_pmf(mean).p; });

  m.def("empirical_tv", [](const std::vector<std::int64_t>& samples, double mean) {
    EmpiricalPmf pmf;
    for (auto k : samples) pmf.add(k);
    const auto tv = empirical_tv(pmf, poisson_pmf(mean));
    return py::make_tuple(tv.value, tv.se);
  }, "TV distance between the sample law and Poisson(mean), with its standard error.");

  m.def("chen_stein_terms", [](int M, double mean_count, double mean_abs_centered) {
    const auto t = chen_stein_terms(M, mean_count, mean_abs_centered);
    return py::make_tuple(t.term1, t.term2, t.bound);
  });

  m.def("stein_solve", [](double lambda, const std::vector<int>& B, int k_max) {
    const auto s = stein_solve(lambda, B, k_max);
    py::dict d;
    d["g"] = s.g;
    d["sup_g"] = s.sup_g;
    d["sup_dg"] = s.sup_dg;
    d["max_residual"] = s.max_residual;
    return d;
  });

  m.def("run_experiment", [](const std::string& text, const std::string& sub,
                             const std::string& out, py::object seed, int threads, bool force) {
    RunOptions opts;
    opts.out = out;
    opts.threads = threads;
    opts.force = force;
    if (!seed.is_none()) opts.seed = seed.cast<std::uint64_t>();
    const auto cfg = config_from_json(json::parse(text));
    RunResult res;
    {
      py::gil_scoped_release release;
      res = run_experiment(cfg, sub, opts);
    }
    return py::make_tuple(res.checks_pass, res.summary.dump());
  }, py::arg("config"), py::arg("subcommand"), py::arg("out"), py::arg("seed") = py::none(),
     py::arg("threads") = 1, py::arg("force") = false);

  m.def("emit_summary", [](const std::string& dir) { return emit_summary(dir).dump(); });
}
