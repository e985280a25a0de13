#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "mvsa/cli/run_manifest.hpp"
#include "mvsa/core/error.hpp"
#include "mvsa/core/tensor_io.hpp"
#include "mvsa/network/decision.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = mvsa::cli::run(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

// Detections come in as dicts: {"label", "confidence", "box": [x0, y0, x1, y1]}.
mvsa::Detection to_detection(const py::dict& d) {
  mvsa::Detection det;
  det.label = mvsa::parse_object_class(d["label"].cast<std::string>());
  det.confidence = d["confidence"].cast<double>();
  const auto b = d["box"].cast<std::vector<double>>();
  if (b.size() != 4) throw py::value_error("box needs 4 numbers");
  det.box = {b[0], b[1], b[2], b[3]};
  return det;
}

std::string select_target(const std::vector<py::dict>& dets, std::pair<double, double> effector, double end_x,
                          double radius) {
  std::vector<mvsa::Detection> v;
  for (const auto& d : dets) v.push_back(to_detection(d));
  return mvsa::to_string(mvsa::select_target_onion(v, {effector.first, effector.second}, end_x, radius));
}

std::string consolidate(const std::vector<std::string>& per_view) {
  std::vector<mvsa::Status> s;
  for (const auto& p : per_view) s.push_back(mvsa::parse_status(p));
  return mvsa::to_string(mvsa::consolidate_status(s));
}

py::tuple fuse(const std::vector<double>& g, const std::vector<std::vector<double>>& c) {
  const auto r = mvsa::fuse(g, c);
  return py::make_tuple(r.distribution, r.label);
}

py::array_t<double> read_tensor(const std::string& path) {
  const auto t = mvsa::read_tensor<double>(path);
  py::array_t<double> a(t.shape());
  std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_mvsa, m) {
  m.doc() = "Multi-view state-action recognition core";
  m.def("run_cli", &run_cli, "args"_a, "Runs one CLI invocation in-process; returns (exit_code, stdout, stderr).");
  m.def("select_target_onion", &select_target, "detections"_a, "effector"_a, "conveyor_end_x"_a,
        "effector_radius"_a = mvsa::kEffectorRadiusPx);
  m.def("consolidate_status", &consolidate, "per_view"_a);
  m.def("fuse", &fuse, "gating"_a, "distributions"_a);
  m.def("read_tensor", &read_tensor, "path"_a);
  m.def("config_hash", [](const std::string& j) { return mvsa::config_hash(nlohmann::json::parse(j)); }, "json"_a);
  m.attr("__version__") = mvsa::kToolVersion;

  py::register_exception<mvsa::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<mvsa::FormatError>(m, "FormatError", PyExc_ValueError);
}
