#include "tess/diagnostics.hpp"
#include "tess/experiment.hpp"
#include "tess/flow.hpp"
#include "tess/sampler.hpp"
#include "tess/targets.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <cstring>

namespace py = pybind11;
using namespace tess;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

SampleArray to_samples(const Array3& a) {
  if (a.ndim() != 3) throw py::value_error("expected an array of shape (iterations, chains, dim)");
  SampleArray s(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                static_cast<std::size_t>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), s.values().begin());
  return s;
}

Array3 from_samples(const SampleArray& s) {
  Array3 out({s.iterations(), s.chains(), s.dim()});
  std::copy(s.values().begin(), s.values().end(), out.mutable_data());
  return out;
}

py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

TargetModel target_by_name(const std::string& model) {
  return load_dataset(model, {}).target;
}

}  // namespace

PYBIND11_MODULE(_tess, m) {
  m.doc() = "Transport elliptical slice sampling core";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "TessError", PyExc_RuntimeError);
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("banana_logdensity", [](const Vector& x) { return banana_logdensity(x); }, py::arg("x"));
  m.def("banana_log_normalizer", &banana_log_normalizer);
  m.def("known_models", &known_models);
  m.def(
      "target_logdensity",
      [](const std::string& model, const Vector& z) { return target_by_name(model).log_density(z); },
      py::arg("model"), py::arg("z"), "Log density of a bundled model at an unconstrained point.");
  m.def(
      "hmm_filter_loglik",
      [](const Vector& params, const std::vector<double>& returns) {
        return hmm_filter_loglik(params, ReturnsSeries{returns});
      },
      py::arg("params"), py::arg("returns"));

  py::class_<TransportMap>(m, "TransportMap")
      .def(py::init([](Eigen::Index dim, int n_pairs, std::uint64_t seed, Eigen::Index hidden_width) {
             return init_flow(dim, n_pairs, seed, hidden_width);
           }),
           py::arg("dim"), py::arg("n_pairs") = 2, py::arg("seed") = 0, py::arg("hidden_width") = 0)
      .def_property_readonly("dim", &TransportMap::dim)
      .def_property_readonly("n_pairs", &TransportMap::n_pairs)
      .def_property_readonly("param_count", &TransportMap::param_count)
      .def("params", &TransportMap::params)
      .def("set_params", &TransportMap::set_params, py::arg("params"))
      .def(
          "forward",
          [](const TransportMap& t, const Vector& u) {
            const MapResult r = t.forward(u);
            return py::make_tuple(r.value, r.logdet);
          },
          py::arg("u"))
      .def(
          "inverse",
          [](const TransportMap& t, const Vector& x) {
            const MapResult r = t.inverse(x);
            return py::make_tuple(r.value, r.logdet);
          },
          py::arg("x"))
      .def("save", [](const TransportMap& t, const std::filesystem::path& p) { save_checkpoint(t, p); }, py::arg("path"))
      .def_static("load", &load_checkpoint, py::arg("path"));

  m.def("autocovariance", &autocovariance, py::arg("series"));
  m.def(
      "iat", [](const std::vector<double>& s, double window_factor) { return iat(s, {window_factor}); },
      py::arg("series"), py::arg("window_factor") = 5.0);
  m.def(
      "summarize",
      [](const Array3& samples, double window_factor) {
        const IatSummary s = summarize(to_samples(samples), {window_factor});
        py::dict out;
        out["tau"] = s.tau;
        out["tau_max"] = s.tau_max;
        out["sigma_tau"] = s.sigma_tau;
        out["ess"] = s.ess;
        out["ess_per_chain"] = s.ess_per_chain;
        out["missing"] = s.missing;
        out["warnings"] = s.warnings;
        return out;
      },
      py::arg("samples"), py::arg("window_factor") = 5.0);
  m.def(
      "diagnose",
      [](const std::string& model, const Array3& samples, std::size_t stein_cap, std::uint64_t seed) {
        return to_python(diagnose(target_by_name(model), to_samples(samples), stein_cap, seed).to_json());
      },
      py::arg("model"), py::arg("samples"), py::arg("stein_cap") = 4096, py::arg("seed") = 0);

  m.def(
      "read_samples_csv", [](const std::filesystem::path& p) { return from_samples(read_samples_csv(p)); },
      py::arg("path"));

  m.def(
      "default_config", [](const std::string& model) { return to_python(config_for_model(model).to_json()); },
      py::arg("model") = "banana");
  m.def(
      "run",
      [](const py::dict& config) {
        const nlohmann::json j = from_python(config);
        RunConfig cfg = config_for_model(j.value("model", std::string("banana")));
        apply_config_json(cfg, j);
        validate_config(cfg);
        RunManifest manifest;
        {
          py::gil_scoped_release release;
          manifest = run_experiment(cfg);
        }
        return to_python(manifest.json);
      },
      py::arg("config"), "Runs the full pipeline and returns the manifest.");
}
