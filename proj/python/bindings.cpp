#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eigenclt/ensembles.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/harness.hpp"
#include "eigenclt/limit_measures.hpp"
#include "eigenclt/matrix_oracle.hpp"
#include "eigenclt/models.hpp"
#include "eigenclt/sde_engine.hpp"
#include "eigenclt/stats.hpp"

namespace py = pybind11;
using namespace eigenclt;

namespace {

py::array_t<double> as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  py::array_t<double> out({rows, cols});
  std::copy(v.begin(), v.begin() + rows * cols, out.mutable_data());
  return out;
}

py::dict report_dict(const TestReport& r) {
  py::dict d;
  d["name"] = r.name;
  d["statistic"] = r.statistic;
  d["p_value"] = r.p_value;
  d["level"] = r.level;
  d["pass"] = r.pass;
  d["n1"] = r.n1;
  d["n2"] = r.n2;
  return d;
}

ExperimentConfig config_from(const py::handle& cfg) {
  if (py::isinstance<py::str>(cfg)) return parse_config(cfg.cast<std::string>());
  const auto json_mod = py::module_::import("json");
  return parse_config(json_mod.attr("dumps")(cfg).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Eigenvalue particle systems and their fluctuation limits";

  static py::exception<Error> error_type(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_property_readonly("kind", [](const ModelSpec& s) { return std::string(to_string(s.kind)); })
      .def_readonly("n_particles", &ModelSpec::n_particles)
      .def_readonly("params", &ModelSpec::params)
      .def_readonly("nonnegative", &ModelSpec::nonnegative)
      .def("diffusion", &ModelSpec::diffusion_per_particle)
      .def("drift_b", &ModelSpec::drift_b)
      .def("interaction", &ModelSpec::interaction_kernel);

  m.def(
      "build_model",
      [](const std::string& kind, int n, const ParamMap& params) {
        return build_model(parse_model_kind(kind), n, params);
      },
      py::arg("kind"), py::arg("n_particles"), py::arg("params") = ParamMap{});
  m.def(
      "eval_drift",
      [](const ModelSpec& s, const std::vector<double>& x) { return eval_drift(s, x); },
      py::arg("spec"), py::arg("positions"));

  py::class_<StepControl>(m, "StepControl")
      .def(py::init<>())
      .def_readwrite("dt", &StepControl::dt)
      .def_readwrite("min_gap", &StepControl::min_gap)
      .def_readwrite("max_substeps", &StepControl::max_substeps)
      .def_readwrite("min_depth", &StepControl::min_depth)
      .def_readwrite("clamp_nonnegative", &StepControl::clamp_nonnegative)
      .def_readwrite("saturate", &StepControl::saturate)
      .def_readwrite("tame", &StepControl::tame);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("grid", &Trajectory::grid)
      .def_readonly("n_particles", &Trajectory::n_particles)
      .def_readonly("substeps", &Trajectory::substeps)
      .def_readonly("saturations", &Trajectory::saturations)
      .def_property_readonly("states",
                             [](const Trajectory& t) {
                               return as_matrix(t.states, t.size(), t.n_particles);
                             })
      .def_property_readonly("noise", [](const Trajectory& t) -> py::object {
        if (!t.has_noise) return py::none();
        return as_matrix(t.noise, t.size() - 1, t.n_particles);
      });

  m.def(
      "simulate",
      [](const ModelSpec& s, const std::vector<double>& init, double horizon,
         const StepControl& c, std::uint64_t seed, bool record_noise, std::uint32_t replica) {
        py::gil_scoped_release release;
        return simulate(s, init, horizon, c, seed, record_noise, replica);
      },
      py::arg("spec"), py::arg("init"), py::arg("horizon"), py::arg("control") = StepControl{},
      py::arg("seed") = 0, py::arg("record_noise") = false, py::arg("replica") = 0);
  m.def(
      "simulate_from_zero",
      [](const ModelSpec& s, double horizon, const StepControl& c, std::uint64_t seed,
         bool record_noise, std::uint32_t replica) {
        py::gil_scoped_release release;
        return simulate_from_zero(s, horizon, c, seed, record_noise, replica);
      },
      py::arg("spec"), py::arg("horizon"), py::arg("control") = StepControl{},
      py::arg("seed") = 0, py::arg("record_noise") = false, py::arg("replica") = 0);
  m.def(
      "simulate_matrix",
      [](const std::string& kind, int n, int p, double horizon, double dt, std::uint64_t seed,
         const std::vector<double>& init, std::uint32_t replica) {
        py::gil_scoped_release release;
        return simulate_matrix(parse_matrix_kind(kind), n, p, horizon, dt, seed, init, replica);
      },
      py::arg("kind"), py::arg("n"), py::arg("p") = 0, py::arg("horizon") = 1.0,
      py::arg("dt") = 1e-3, py::arg("seed") = 0, py::arg("init") = std::vector<double>{},
      py::arg("replica") = 0);

  m.def("jacobi_eigenvalues", [](py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1))
      throw py::value_error("expected a square matrix");
    const int n = static_cast<int>(a.shape(0));
    SymmetricMatrix x(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) x.at(i, j) = a.at(i, j);
    return jacobi_eigenvalues(x);
  });

  m.def(
      "sample_scaled_goe",
      [](int n, std::uint64_t seed, std::uint32_t replica) {
        return sample_scaled_goe(n, seed, replica).positions;
      },
      py::arg("n"), py::arg("seed") = 0, py::arg("replica") = 0);
  m.def(
      "sample_scaled_laguerre",
      [](int n, int p, std::uint64_t seed, std::uint32_t replica) {
        return sample_scaled_laguerre(n, p, seed, replica).positions;
      },
      py::arg("n"), py::arg("p"), py::arg("seed") = 0, py::arg("replica") = 0);

  m.def("semicircle_moments", &semicircle_moments, py::arg("K"), py::arg("t") = 1.0);
  m.def("mp_moments", &mp_moments, py::arg("K"), py::arg("c"), py::arg("t") = 1.0);
  m.def(
      "point_moments", [](const std::vector<double>& x, int K) { return point_moments(x, K); },
      py::arg("x"), py::arg("K"));
  m.def(
      "evolve_moments",
      [](const ModelSpec& s, const std::vector<double>& init, double horizon, double dt, int K) {
        const auto c = evolve_moments(limit_kernels(s), init, horizon, dt, K);
        return py::make_tuple(c.grid, as_matrix(c.values, c.grid.size(), K + 1));
      },
      py::arg("spec"), py::arg("init"), py::arg("horizon"), py::arg("dt") = 1e-3,
      py::arg("K") = 6);

  m.def(
      "ks_normal",
      [](const std::vector<double>& x, double mean, double sd, double level) {
        return report_dict(ks_normal(x, mean, sd, level));
      },
      py::arg("samples"), py::arg("mean") = 0.0, py::arg("sd") = 1.0, py::arg("level") = 0.01);
  m.def(
      "ks_two_sample",
      [](const std::vector<double>& a, const std::vector<double>& b, double level) {
        return report_dict(ks_two_sample(a, b, level));
      },
      py::arg("a"), py::arg("b"), py::arg("level") = 0.01);

  m.def(
      "run_experiment",
      [](const py::object& cfg, int threads, const std::string& out_dir, bool write_outputs) {
        const auto config = config_from(cfg);
        RunOptions o;
        o.threads = threads;
        o.out_dir = out_dir;
        o.write_outputs = write_outputs;
        std::string text;
        {
          py::gil_scoped_release release;
          text = report_to_json(run_experiment(config, o)).dump();
        }
        return text;
      },
      py::arg("config"), py::arg("threads") = 0, py::arg("out_dir") = std::string(),
      py::arg("write_outputs") = false,
      "Runs an experiment from a config (JSON text or dict); returns the report as JSON text.");
}
