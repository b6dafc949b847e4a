// Python bindings for the mdev core.
#include "mdev/bounds.hpp"
#include "mdev/config.hpp"
#include "mdev/harness.hpp"
#include "mdev/integrator.hpp"
#include "mdev/report.hpp"
#include "mdev/stats.hpp"
#include "mdev/stein.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mdev;

namespace {

Vector as_vector(const std::vector<double>& x) {
  return Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

py::array_t<double> as_array(const std::vector<double>& v, std::int64_t rows, int cols) {
  py::array_t<double> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict cert_dict(const CertReport& r) {
  py::dict d;
  d["residual_sup"] = r.residual_sup;
  d["fd_residual_sup"] = r.fd_residual_sup;
  d["worst_point"] = r.worst_point;
  d["derivative_bounds"] = r.derivative_bounds;
  d["tolerance"] = r.tolerance;
  d["passed"] = r.passed;
  return d;
}

py::dict stats_dict(const StatBundle& s) {
  py::dict d;
  d["pi_hat"] = s.pi_hat;
  d["Y"] = s.Y;
  d["V"] = s.V;
  d["W"] = s.W;
  d["S"] = s.S;
  d["psi_sum"] = s.psi_sum;
  d["drift_sum"] = s.drift_sum;
  d["y_sum"] = s.y_sum;
  if (s.decomposed) {
    d["H"] = s.H;
    d["R"] = s.R;
    d["decomposition_residual"] = s.decomposition_residual;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_mdev, m) {
  m.doc() = "Euler-Maruyama deviation experiments";
  m.attr("__version__") = MDEV_VERSION;

  // Translators are tried newest first, so subclasses follow the base.
  const py::object base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ModelError>(m, "ModelError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<CertificationError>(m, "CertificationError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<Model>(m, "Model")
      .def_property_readonly("id", &Model::id)
      .def_property_readonly("dim", &Model::dim)
      .def_property_readonly("K1", &Model::K1)
      .def_property_readonly("K2", &Model::K2)
      .def_property_readonly("lipschitz_L", &Model::lipschitz_L)
      .def_property_readonly("sigma", &Model::sigma)
      .def("drift", [](const Model& self, const std::vector<double>& x) {
        return Vector(self.drift(as_vector(x)));
      });

  m.def("model_from_json", [](const std::string& text) {
    return model_from_json(parse_json_strict(text));
  }, py::arg("text"), "Build a model from a JSON id string or object");

  py::class_<Observable>(m, "Observable")
      .def_readonly("id", &Observable::id)
      .def("__call__", [](const Observable& self, const std::vector<double>& x) {
        return self(x);
      });
  m.def("observable", &observable_by_id, py::arg("id"), py::arg("dim") = 1);

  py::class_<SteinSolution>(m, "SteinSolution")
      .def_readonly("method", &SteinSolution::method)
      .def_readonly("dim", &SteinSolution::dim)
      .def_readonly("pi_h", &SteinSolution::pi_h)
      .def_readonly("tolerance", &SteinSolution::tolerance)
      .def_readonly("residual_sup", &SteinSolution::residual_sup)
      .def_readonly("derivative_bounds", &SteinSolution::derivative_bounds)
      .def_readonly("trusted", &SteinSolution::trusted)
      .def("phi", [](const SteinSolution& self, const std::vector<double>& x) { return self.phi(x); })
      .def("grad", [](const SteinSolution& self, const std::vector<double>& x) {
        return Vector(self.gradient(as_vector(x)));
      })
      .def("generator", [](const SteinSolution& self, const Model& model,
                           const std::vector<double>& x) {
        return apply_generator(self, model, std::span<const double>(x));
      }, py::arg("model"), py::arg("x"));

  m.def("solve_stein", [](const Model& model, const Observable& obs) {
    return solve_stein(model, obs);
  }, py::arg("model"), py::arg("observable"));

  m.def("certify", [](SteinSolution& sol, const Model& model, const Observable& obs, int n,
                      double half_width) {
    return cert_dict(certify(sol, model, obs, certification_grid(sol, n, half_width), sol.tolerance));
  }, py::arg("solution"), py::arg("model"), py::arg("observable"), py::arg("n") = 2001,
     py::arg("half_width") = 10.0);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("eta", &Trajectory::eta)
      .def_readonly("m", &Trajectory::m)
      .def_readonly("dim", &Trajectory::dim)
      .def_readonly("seed", &Trajectory::seed)
      .def_readonly("rep_index", &Trajectory::rep_index)
      .def_readonly("burn_in", &Trajectory::burn_in)
      .def_property_readonly("states", [](const Trajectory& t) {
        return as_array(t.states, t.m + 1, t.dim);
      })
      .def_property_readonly("noises", [](const Trajectory& t) {
        return as_array(t.noises, t.m, t.dim);
      });

  m.def("default_steps", &default_steps, py::arg("eta"));
  m.def("default_burn_in", &default_burn_in, py::arg("model"), py::arg("eta"));
  m.def("simulate", [](const Model& model, double eta, std::int64_t m_steps, std::int64_t burn_in,
                       std::uint64_t seed, std::uint64_t rep) {
    if (m_steps < 0) m_steps = default_steps(eta);
    if (burn_in < 0) burn_in = default_burn_in(model, eta);
    py::gil_scoped_release release;
    return simulate(model, eta, m_steps, burn_in, seed, rep);
  }, py::arg("model"), py::arg("eta"), py::arg("m") = -1, py::arg("burn_in") = -1,
     py::arg("seed") = 0, py::arg("rep") = 0);

  m.def("compute_stats", [](const Trajectory& traj, const SteinSolution& sol, const Model& model,
                            const Observable& obs, bool decompose) {
    StatOptions opts;
    opts.decompose = decompose;
    return stats_dict(compute_stats(traj, sol, model, obs, opts));
  }, py::arg("trajectory"), py::arg("solution"), py::arg("model"), py::arg("observable"),
     py::arg("decompose") = false);

  m.def("normal_tail", &normal_tail, py::arg("x"));
  m.def("normal_cdf", &normal_cdf, py::arg("x"));
  m.def("normal_tail_sandwich", [](double l) {
    const Sandwich s = normal_tail_sandwich(l);
    return std::make_pair(s.lower, s.upper);
  }, py::arg("x"));
  m.def("cmd_envelope", &cmd_envelope, py::arg("x"), py::arg("eta"), py::arg("c"));
  m.def("cmd_range", &cmd_range, py::arg("eta"));
  m.def("lm21_piecewise", &lm21_piecewise, py::arg("x"), py::arg("u_n"), py::arg("alpha"),
        py::arg("c"));
  m.def("th0_envelope", &th0_envelope, py::arg("x"), py::arg("epsilon"), py::arg("delta"),
        py::arg("C"));

  m.def("run_experiment_json", [](const std::string& config, int threads) {
    const ExperimentSpec spec = parse_config_text(config);
    RunOptions opts;
    opts.threads = threads;
    opts.exclude_divergent = spec.exclude_divergent;
    ExperimentResult r;
    {
      py::gil_scoped_release release;
      r = run_experiment(spec, opts);
    }
    py::dict out;
    out["result"] = result_to_json(r).dump();
    out["tail_csv"] = tail_csv(r);
    out["ks_csv"] = ks_csv(r);
    out["mdp_csv"] = mdp_csv(r);
    out["conc_csv"] = conc_csv(r);
    return out;
  }, py::arg("config"), py::arg("threads") = 0);
}
