#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "causalshift/errors.hpp"
#include "causalshift/experiment.hpp"
#include "causalshift/serialization.hpp"

namespace py = pybind11;
using namespace causalshift;

namespace {

py::array_t<std::uint8_t> adjacency_array(const BinaryMatrix& m) {
  const auto n = static_cast<py::ssize_t>(m.size());
  py::array_t<std::uint8_t> out({n, n});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < n; ++i)
    for (py::ssize_t j = 0; j < n; ++j) view(i, j) = m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return out;
}

BinaryMatrix adjacency_from(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ParameterError("adjacency must be a square matrix");
  const auto n = static_cast<std::size_t>(a.shape(0));
  BinaryMatrix m(n);
  auto view = a.unchecked<2>();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, view(i, j) != 0);
  return m;
}

py::array_t<int> samples_array(const SampleMatrix& s) {
  py::array_t<int> out({static_cast<py::ssize_t>(s.rows()), static_cast<py::ssize_t>(s.width())});
  std::copy(s.values().begin(), s.values().end(), out.mutable_data());
  return out;
}

std::string sweep_csv(const std::string& config_json, bool adaptation) {
  const ExperimentConfig cfg = config_from_json(config_json);
  SweepResult res;
  {
    py::gil_scoped_release release;
    res = adaptation ? run_adaptation_sweep(cfg) : run_generalization_sweep(cfg);
  }
  return rows_to_csv(res.rows);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core bindings for causalshift";

  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<StructuralError>(m, "StructuralError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("version", [] { return std::string(version()); });
  m.attr("RESULTS_HEADER") = std::string(kResultsHeader);

  m.def(
      "generate_graph",
      [](const std::string& spec, std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        return adjacency_array(GraphSpec::parse(spec).generate(n, rng).adjacency());
      },
      py::arg("spec"), py::arg("n"), py::arg("seed") = 0,
      "Adjacency matrix with A[i, j] = 1 iff j is a parent of i.");

  m.def(
      "shd", [](const py::array_t<std::uint8_t>& a, const py::array_t<std::uint8_t>& b) {
        return shd(adjacency_from(a), adjacency_from(b));
      },
      py::arg("a"), py::arg("b"));

  m.def("is_acyclic", [](const py::array_t<std::uint8_t>& a) { return is_acyclic(adjacency_from(a)); });

  py::class_<GroundTruthScm>(m, "Scm")
      .def(py::init([](const std::string& graph, std::size_t n, std::size_t k, std::uint64_t seed) {
             Rng rng(seed);
             const Dag dag = GraphSpec::parse(graph).generate(n, rng);
             return init_scm(dag, k, rng);
           }),
           py::arg("graph"), py::arg("n"), py::arg("k") = kDefaultCategories, py::arg("seed") = 0)
      .def_property_readonly("n", &GroundTruthScm::size)
      .def_property_readonly("k", &GroundTruthScm::k)
      .def_property_readonly("adjacency", [](const GroundTruthScm& s) { return adjacency_array(s.dag().adjacency()); })
      .def(
          "sample",
          [](const GroundTruthScm& s, std::size_t count, std::uint64_t seed) {
            Rng rng(seed);
            return samples_array(sample_observational(s, count, rng).samples);
          },
          py::arg("count"), py::arg("seed") = 0)
      .def(
          "sample_intervened",
          [](const GroundTruthScm& s, std::size_t target, std::optional<int> value, std::size_t count,
             std::uint64_t seed) {
            Rng rng(seed);
            return samples_array(sample_interventional(s, Intervention{target, value}, count, rng).samples);
          },
          py::arg("target"), py::arg("value"), py::arg("count"), py::arg("seed") = 0,
          "value=None redraws the intervened value uniformly per sample.")
      .def("to_json", [](const GroundTruthScm& s) { return scm_to_json(s); })
      .def_static("from_json", [](const std::string& text) { return scm_from_json(text); });

  m.def("default_config", [] { return config_to_json(ExperimentConfig{}); });
  m.def(
      "resolve_config", [](const std::string& text) {
        const ExperimentConfig cfg = config_from_json(text);
        validate(cfg);
        return config_to_json(cfg);
      },
      py::arg("config_json"), "Fills every missing field with its default and validates.");
  m.def(
      "run_generalization_sweep", [](const std::string& cfg) { return sweep_csv(cfg, false); },
      py::arg("config_json"), "Runs the sweep and returns the long-format CSV text.");
  m.def(
      "run_adaptation_sweep", [](const std::string& cfg) { return sweep_csv(cfg, true); },
      py::arg("config_json"));
}
