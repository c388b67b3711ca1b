#include "wildlab/cli.hpp"
#include "wildlab/errors.hpp"
#include "wildlab/experiments.hpp"
#include "wildlab/fields.hpp"
#include "wildlab/params.hpp"
#include "wildlab/trees.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace wildlab;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
std::string study_json(const std::string& kind_name, const std::string& config) {
  const StudyKind kind = parse_study_kind(kind_name);
  const StudyConfig cfg = study_config_from_json(nlohmann::json::parse(config), kind);
  StudyResult r;
  {
    py::gil_scoped_release release;
    r = run_study(kind, cfg);
  }
  nlohmann::json j = study_report_json(r);
  j["config"] = study_config_json(cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.series)
    rows.push_back({{"series", s.series}, {"scale", s.scale}, {"estimate", s.estimate}, {"stderr", s.std_error}});
  j["series"] = rows;
  return j.dump();
}

py::array_t<double> to_numpy(const Field& x) {
  std::vector<py::ssize_t> shape(x.grid.n, x.grid.M);
  py::array_t<double> a(shape);
  std::copy(x.v.begin(), x.v.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_wildlab, m) {
  m.doc() = "Bindings for the wildlab library";

  // Translators run newest first, so the base class goes in first.
  auto& domain = py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", domain.ptr());
  py::register_exception<HorizonTooLarge>(m, "HorizonTooLarge", domain.ptr());

  m.def(
      "enumerate_trees",
      [](int n_max) {
        std::vector<std::string> out;
        for (const auto& t : enumerate_trees(n_max)) out.push_back(canonical_form(t));
        return out;
      },
      py::arg("n_max"));
  m.def(
      "tree_stats",
      [](const std::string& tree, double d) {
        const TreeStats s = tree_stats(LabelledTree::parse(tree), d);
        py::dict r;
        r["noise"] = s.noise;
        r["deriv_edges"] = s.deriv_edges;
        r["homogeneity"] = s.homogeneity.str();
        r["homogeneity_value"] = s.homogeneity_value;
        r["parity_odd"] = s.parity_odd;
        return r;
      },
      py::arg("tree"), py::arg("d"));
  m.def("kappa_guard", [](double d, int n) { return kappa_guard(d, n); }, py::arg("d"), py::arg("n") = 2);
  m.def("noise_bound", &noise_bound, py::arg("d"));
  m.def(
      "_params_check", [](double d, double kappa, int n) { return params_report_json(d, kappa, n).dump(); },
      py::arg("d"), py::arg("kappa"), py::arg("n") = 2);
  m.def(
      "_certify",
      [](const std::string& tree, double d, double kappa, const std::string& kind, const std::string& theta, int n) {
        return certify_json(tree, d, kappa, kind, theta, n).dump();
      },
      py::arg("tree"), py::arg("d"), py::arg("kappa"), py::arg("kind"), py::arg("theta"), py::arg("n") = 2);
  m.def("_study", &study_json, py::arg("kind"), py::arg("config"));
  m.def(
      "sample_gff",
      [](double d, int M, std::uint64_t seed, double eps, int n) {
        const GridSpec grid{n, M};
        grid.validate();
        Field x = sample_gff(grid, CovarianceSpec{d}, seed);
        if (eps > 0) x = mollify(x, Mollifier{eps});
        return to_numpy(x);
      },
      py::arg("d"), py::arg("M"), py::arg("seed"), py::arg("eps") = 0.0, py::arg("n") = 2);
  m.def(
      "fit_loglog",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const LogLogFit f = fit_loglog(x, y);
        py::dict r;
        r["slope"] = f.slope;
        r["intercept"] = f.intercept;
        r["stderr"] = f.stderr_slope;
        r["r2"] = f.r2;
        return r;
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
  m.def("sha256_file", &sha256_file, py::arg("path"));
}
