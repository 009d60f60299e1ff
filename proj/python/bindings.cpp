#include "ldiff/dynamics.hpp"
#include "ldiff/metrics.hpp"
#include "ldiff/pipeline.hpp"
#include "ldiff/random.hpp"
#include "ldiff/sampler.hpp"
#include "ldiff/score.hpp"
#include "ldiff/trajectory.hpp"
#include "ldiff/zoo.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace ldiff;

namespace {

RowMat stack_rows(const std::vector<Vec>& xs, int dim) {
  RowMat out(static_cast<Eigen::Index>(xs.size()), dim);
  for (std::size_t i = 0; i < xs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  return out;
}

std::vector<Vec> unstack_rows(const RowMat& X) {
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.emplace_back(X.row(i).transpose());
  return out;
}

RowMat trajectory_states(const Trajectory& tr) {
  return Eigen::Map<const RowMat>(tr.states.data(), tr.N + 1, tr.dim);
}

PipelineConfig config_from(const py::object& cfg) {
  if (cfg.is_none()) return parse_config(nlohmann::json::object());
  const std::string text = py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
  return parse_config(nlohmann::json::parse(text));
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Landing-based constrained Langevin diffusion";

  py::register_exception<Error>(m, "LdiffError", PyExc_RuntimeError);
  py::register_exception<ProjectionFailure>(m, "ProjectionFailure", m.attr("LdiffError").ptr());
  py::register_exception<NonFiniteState>(m, "NonFiniteState", m.attr("LdiffError").ptr());
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::enum_<Mode>(m, "Mode")
      .value("OLLA", Mode::OLLA)
      .value("OLLA_P", Mode::OLLA_P)
      .value("ULLA", Mode::ULLA)
      .value("ULLA_P", Mode::ULLA_P);

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init<double, double, double, int>(), py::arg("sigma_min"), py::arg("sigma_max"), py::arg("T"),
           py::arg("N"))
      .def_property_readonly("N", &NoiseSchedule::N)
      .def_property_readonly("T", &NoiseSchedule::T)
      .def_property_readonly("dt", &NoiseSchedule::dt)
      .def("sigma_at", &NoiseSchedule::sigma_at)
      .def("cumulative_S", &NoiseSchedule::cumulative_S);

  py::class_<NewtonOptions>(m, "NewtonOptions")
      .def(py::init<>())
      .def_readwrite("max_iter", &NewtonOptions::max_iter)
      .def_readwrite("tol", &NewtonOptions::tol)
      .def_readwrite("check_inequalities", &NewtonOptions::check_inequalities);

  py::class_<SamplerConfig>(m, "SamplerConfig")
      .def(py::init<>())
      .def_readwrite("mode", &SamplerConfig::mode)
      .def_readwrite("alpha", &SamplerConfig::alpha)
      .def_readwrite("gamma", &SamplerConfig::gamma)
      .def_readwrite("use_curvature", &SamplerConfig::use_curvature)
      .def_readwrite("terminal_projection", &SamplerConfig::terminal_projection)
      .def_readwrite("newton", &SamplerConfig::newton)
      .def_readwrite("projection_retries", &SamplerConfig::projection_retries)
      .def_readwrite("noise_scale", &SamplerConfig::noise_scale)
      .def_readwrite("seed", &SamplerConfig::seed);

  py::class_<GeometryCache>(m, "Geometry")
      .def_readonly("x", &GeometryCache::x)
      .def_readonly("active", &GeometryCache::active)
      .def_readonly("J", &GeometryCache::J)
      .def_readonly("gradJ", &GeometryCache::gradJ)
      .def_readonly("gram_pinv", &GeometryCache::gram_pinv)
      .def_readonly("proj", &GeometryCache::proj)
      .def_readonly("rank", &GeometryCache::rank);

  py::class_<TaskSpec>(m, "Task")
      .def_readonly("name", &TaskSpec::name)
      .def_property_readonly("dim", [](const TaskSpec& t) { return t.cs.dim; })
      .def_property_readonly("num_eq", [](const TaskSpec& t) { return t.cs.num_eq; })
      .def_property_readonly("num_ineq", [](const TaskSpec& t) { return t.cs.num_ineq; })
      .def_property_readonly("epsilon", [](const TaskSpec& t) { return t.cs.epsilon; })
      .def("h", [](const TaskSpec& t, const Vec& x) { return t.cs.eval_h(x); })
      .def("g", [](const TaskSpec& t, const Vec& x) { return t.cs.eval_g(x); })
      .def("geometry", [](const TaskSpec& t, const Vec& x) { return geometry_at(t.cs, x); })
      .def("landing_direction", [](const TaskSpec& t, const Vec& x) { return landing_direction(geometry_at(t.cs, x)); })
      .def("mean_curvature", [](const TaskSpec& t, const Vec& x) { return mean_curvature(geometry_at(t.cs, x), t.cs); })
      .def(
          "project",
          [](const TaskSpec& t, const Vec& x, const NewtonOptions& o) { return newton_project(t.cs, x, x, o).x; },
          py::arg("x"), py::arg("options") = NewtonOptions{})
      .def(
          "sample_uniform",
          [](const TaskSpec& t, int n, std::uint64_t seed) {
            Rng rng(seed);
            return stack_rows(prior_uniform(t, rng, n), t.cs.dim);
          },
          py::arg("n"), py::arg("seed") = 0);

  m.def("make_sphere", &make_sphere, py::arg("d") = 3);
  m.def("make_son", &make_son, py::arg("n") = 3);
  m.def("make_disk", &make_disk, py::arg("d") = 2, py::arg("epsilon") = 0.05);
  m.def("make_sphere_cap", &make_sphere_cap, py::arg("zmax") = 0.5, py::arg("epsilon") = 0.05);

  m.def(
      "simulate_forward",
      [](const TaskSpec& t, const SamplerConfig& cfg, const NoiseSchedule& s, const Vec& x0, std::uint64_t seed) {
        Rng rng(seed);
        return trajectory_states(simulate_forward(t.cs, cfg, s, x0, rng));
      },
      py::arg("task"), py::arg("config"), py::arg("schedule"), py::arg("x0"), py::arg("seed") = 0,
      "Forward chain; returns the (N+1) x d array of states.");

  m.def(
      "decay_prediction",
      [](const TaskSpec& t, const NoiseSchedule& s, double alpha, const Vec& x0, double time) {
        const auto p = decay_oracle(t.cs, s, alpha, x0, time);
        return py::make_tuple(p.h_pred, p.g_pred, p.tau);
      },
      py::arg("task"), py::arg("schedule"), py::arg("alpha"), py::arg("x0"), py::arg("t"));

  py::class_<ScoreNet>(m, "ScoreNet")
      .def_static("load", &load_checkpoint)
      .def("save", [](const ScoreNet& n, const std::string& path) { save_checkpoint(path, n); })
      .def_property_readonly("dim", &ScoreNet::dim)
      .def_property_readonly("underdamped", &ScoreNet::underdamped)
      .def_property_readonly("num_params", &ScoreNet::num_params)
      .def(
          "eval",
          [](const ScoreNet& n, int k, const Vec& x, std::optional<Vec> p) {
            return n.eval(k, x, p ? &*p : nullptr);
          },
          py::arg("k"), py::arg("x"), py::arg("p") = py::none());

  m.def(
      "sample",
      [](const TaskSpec& t, const SamplerConfig& cfg, const NoiseSchedule& s, const ScoreNet* net, int n,
         std::uint64_t seed, int threads) {
        const ZeroScore zero(t.cs.dim, is_underdamped(cfg.mode));
        const ScoreModel& model = net ? static_cast<const ScoreModel&>(*net) : zero;
        const PriorSampler prior = [&t](Rng& rng) { return sample_uniform(t, rng); };
        SampleOptions opts;
        opts.threads = threads;
        opts.accept = t.accept;
        SampleResult r;
        {
          py::gil_scoped_release release;
          r = sample_backward(t.cs, cfg, s, model, prior, n, seed, opts);
        }
        py::dict out;
        out["samples"] = stack_rows(r.samples, t.cs.dim);
        out["projection_failures"] = r.projection_failures;
        out["nonfinite_failures"] = r.nonfinite_failures;
        out["rejected"] = r.rejected;
        return out;
      },
      py::arg("task"), py::arg("config"), py::arg("schedule"), py::arg("net") = nullptr, py::arg("n") = 1000,
      py::arg("seed") = 0, py::arg("threads") = 1,
      "Backward sampling from the uniform prior; with no network the score is zero.");

  m.def(
      "violation_stats",
      [](const TaskSpec& t, const RowMat& X) {
        const auto v = violation_stats(t.cs, unstack_rows(X));
        return py::make_tuple(v.avg_abs_h, v.avg_g_plus);
      },
      py::arg("task"), py::arg("samples"), "Returns (avg |h|, avg g+).");
  m.def("jsd", py::overload_cast<const std::vector<double>&, const std::vector<double>&>(&jsd), py::arg("p"),
        py::arg("q"), "Square root of the base-2 Jensen-Shannon divergence.");
  m.def(
      "spherical_jsd",
      [](const RowMat& a, const RowMat& b, int n_theta, int n_phi) {
        return jsd_histograms(spherical_histogram(unstack_rows(a), n_theta, n_phi),
                              spherical_histogram(unstack_rows(b), n_theta, n_phi));
      },
      py::arg("a"), py::arg("b"), py::arg("n_theta") = 20, py::arg("n_phi") = 40);
  m.def(
      "power_traces", [](const RowMat& X, int n, int k) { return power_traces(unstack_rows(X), n, k); },
      py::arg("samples"), py::arg("n"), py::arg("k"));

  m.def(
      "resolve_config", [](const py::object& cfg) { return to_py(to_json(config_from(cfg))); },
      py::arg("config") = py::none(), "Validate a config dict and return it with every default filled in.");
  m.def(
      "run_pipeline",
      [](const py::object& cfg, const std::string& out) {
        const auto c = config_from(cfg);
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(c, out);
        }
        return to_py(to_json(r));
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "decay_check",
      [](const py::object& cfg, const std::string& out) {
        const auto r = stage_decay_check(config_from(cfg), out);
        py::dict d;
        d["pass"] = r.pass;
        d["max_rel_error"] = r.max_rel_error;
        d["steps_compared"] = r.steps_compared;
        return d;
      },
      py::arg("config"), py::arg("out_dir"));
}
