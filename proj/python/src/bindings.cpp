#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "scalefield/experiments.hpp"
#include "scalefield/gaussian_path.hpp"
#include "scalefield/singularity.hpp"
#include "scalefield/wick.hpp"

namespace py = pybind11;
using namespace scalefield;

namespace {

py::dict run(const std::string& experiment, const std::map<std::string, std::string>& overrides,
             std::optional<std::uint64_t> seed) {
  Config c = Config::defaults(experiment);
  for (const auto& [k, v] : overrides) c.set(k, v, "python");
  if (seed) c.set("mc.seed", std::to_string(*seed), "python");
  const RunConfig rc(c);
  ExperimentResult r;
  {
    py::gil_scoped_release release;
    r = run_experiment(rc);
  }
  py::dict tables;
  for (const Table& t : r.tables) tables[py::str(t.name)] = py::str(t.csv());
  py::list checks;
  for (const Check& k : r.checks) {
    py::dict d;
    d["name"] = k.name;
    d["passed"] = k.passed;
    d["diagnostic"] = k.diagnostic;
    d["detail"] = k.detail;
    checks.append(d);
  }
  py::dict out;
  out["tables"] = tables;
  out["checks"] = checks;
  out["replicas"] = r.replicas;
  out["aborted"] = r.aborted;
  out["passed"] = r.assertions_passed();
  return out;
}

// Coefficients on the cube [-n_max, n_max]^3, axis order (n1, n2, n3).
py::array_t<std::complex<double>> terminal_field(int n_max, double T, std::uint64_t seed, std::uint64_t replica) {
  const TorusGrid g = TorusGrid::with_modes(n_max);
  const SpectralField f = sample_terminal_field(g, Symbols{}, T, seed, replica);
  const py::ssize_t s = g.side();
  py::array_t<std::complex<double>> a({s, s, s});
  std::copy(f.coeffs().begin(), f.coeffs().end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "scale-regularized Gaussian fields and drift experiments";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("experiment_names", &experiment_names);
  m.def("run", &run, py::arg("experiment"), py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("seed") = py::none(),
        "Run one experiment; returns {tables: {name: csv}, checks, replicas, aborted, passed}.");
  m.def("emit_plot_data", &emit_plot_data, py::arg("csv"));
  m.def("format_double", &format_double, py::arg("x"));

  m.def("terminal_field", &terminal_field, py::arg("n_max"), py::arg("T"), py::arg("seed") = 1,
        py::arg("replica") = 0, "Exact sample of the Fourier coefficients of W_T.");
  m.def("wick_polynomial", &wick_polynomial, py::arg("m"), py::arg("x"), py::arg("c"));
  m.def(
      "free_quartic_second_moment",
      [](int n_max, double T) { return free_quartic_second_moment(TorusGrid::with_modes(n_max), Symbols{}, T); },
      py::arg("n_max"), py::arg("T"));
  m.def(
      "theta_horizon", [](double T) { return theta_horizon(T, Symbols{}); }, py::arg("T"));

  m.def(
      "fit_loglog",
      [](const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& se) {
        const SlopeFit f = fit_loglog(x, y, se);
        py::dict d;
        d["slope"] = f.slope;
        d["intercept"] = f.intercept;
        d["std_error"] = f.std_error;
        d["ci"] = py::make_tuple(f.ci_low, f.ci_high);
        d["points"] = f.points;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("se"));
  m.def(
      "jonckheere_decreasing",
      [](const std::vector<std::vector<double>>& groups) {
        const TrendTest t = jonckheere_decreasing(groups);
        return py::make_tuple(t.statistic, t.z, t.p_value);
      },
      py::arg("groups"), "(J, z, one-sided p) for a decreasing trend across the groups.");
}
