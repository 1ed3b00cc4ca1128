// Thin bindings. Structured results cross as JSON text; the Python package
// decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "dhsplan/compare.hpp"
#include "dhsplan/errors.hpp"

namespace py = pybind11;
using namespace dhsplan;

namespace {

std::vector<int> pick_hours(const NetworkModel &m, const std::optional<std::vector<int>> &hours) {
  return hours ? *hours : all_hours(m);
}

nlohmann::json point_json(const ProblemInstance &inst, const std::vector<double> &x) {
  nlohmann::json values = nlohmann::json::object();
  for (std::size_t j = 0; j < x.size(); ++j)
    values[inst.vars.name(static_cast<int>(j))] = x[j];
  return values;
}

std::string solve(const std::string &path, const std::string &variant,
                  const std::optional<std::vector<int>> &hours) {
  const NetworkModel model = load_network(path);
  const std::vector<int> hs = pick_hours(model, hours);
  nlohmann::json out;
  out["variant"] = variant;
  out["hours"] = hs;
  if (variant == "tightening") {
    const TighteningResult r = tighten(model, hs);
    out["status"] = to_string(r.status);
    out["objective"] = r.final_objective;
    out["iterations"] = r.iterations.size();
    out["max_violation"] = r.iterations.back().max_violation;
    out["avg_violation"] = r.iterations.back().avg_violation;
    out["values"] = point_json(r.instance, r.final_x);
    if (r.repaired)
      out["repaired"] = {{"objective", r.repaired->objective}, {"method", r.repaired->method}};
    return out.dump();
  }
  const Variant v = parse_variant(variant);
  const ProblemInstance inst = build(model, v, hs);
  if (v == Variant::Base || v == Variant::Reformulated) {
    const GlobalSolution g = solve_global(inst);
    out["status"] = to_string(g.status);
    out["objective"] = g.upper_bound;
    out["lower_bound"] = g.lower_bound;
    out["gap"] = g.gap;
    out["values"] = point_json(inst, g.x);
    return out.dump();
  }
  const QpSolution s = solve_qp(to_qp(inst));
  out["status"] = to_string(s.status);
  if (s.status == QpStatus::Optimal) {
    out["objective"] = s.objective;
    out["values"] = point_json(inst, std::vector<double>(s.x.data(), s.x.data() + s.x.size()));
  }
  return out.dump();
}

std::string compare(const std::string &path, const std::optional<std::vector<int>> &hours,
                    bool skip_global, const std::string &name) {
  const NetworkModel model = load_network(path);
  CompareConfig cfg;
  cfg.skip_global = skip_global;
  return comparison_json(compare_variants(model, pick_hours(model, hours), cfg, name)).dump();
}

py::dict network_summary(const std::string &path) {
  const NetworkModel m = load_network(path);
  py::dict d;
  d["horizon_hours"] = m.horizon_hours;
  std::vector<std::string> nodes, pipes;
  for (const auto &n : m.heat_nodes)
    nodes.push_back(n.id);
  for (const auto &p : m.pipes)
    pipes.push_back(p.id);
  d["heat_nodes"] = nodes;
  d["pipes"] = pipes;
  d["buses"] = m.buses.size();
  d["units"] = m.units.size();
  return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "heat and power dispatch with bilinear heat networks";
  m.attr("__version__") = std::string(version());

  // later registrations are tried first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("network_summary", &network_summary, py::arg("path"));
  m.def("solve_json", &solve, py::arg("path"), py::arg("variant") = "reformulated",
        py::arg("hours") = std::nullopt, py::call_guard<py::gil_scoped_release>());
  m.def("compare_json", &compare, py::arg("path"), py::arg("hours") = std::nullopt,
        py::arg("skip_global") = false, py::arg("name") = "instance",
        py::call_guard<py::gil_scoped_release>());
  m.def("taylor_gap", &taylor_gap, py::arg("x"));
}
