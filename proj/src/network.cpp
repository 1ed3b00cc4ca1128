#include "dhsplan/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "dhsplan/errors.hpp"
#include "json_schema.hpp"
#include "network_schema.hpp"

namespace dhsplan {

using nlohmann::json;

std::string_view to_string(NodeKind kind) {
  switch (kind) {
  case NodeKind::source:
    return "source";
  case NodeKind::load:
    return "load";
  case NodeKind::junction:
    return "junction";
  }
  return "junction";
}

const std::string &unit_id(const GenerationUnit &unit) {
  return std::visit([](const auto &u) -> const std::string & { return u.id; }, unit);
}

const HeatNode *NetworkModel::find_node(std::string_view id) const {
  for (const auto &n : heat_nodes)
    if (n.id == id)
      return &n;
  return nullptr;
}

const Bus *NetworkModel::find_bus(std::string_view id) const {
  for (const auto &b : buses)
    if (b.id == id)
      return &b;
  return nullptr;
}

const Pipe *NetworkModel::find_pipe(std::string_view id) const {
  for (const auto &p : pipes)
    if (p.id == id)
      return &p;
  return nullptr;
}

const HeatNode &NetworkModel::node(std::string_view id) const {
  const HeatNode *n = find_node(id);
  if (!n)
    throw ValidationError("node " + std::string(id), "unknown heat node");
  return *n;
}

Adjacency derive_adjacency(const NetworkModel &model) {
  Adjacency adj;
  for (const auto &n : model.heat_nodes) {
    adj.in[n.id];
    adj.out[n.id];
  }
  for (const auto &p : model.pipes) {
    adj.out[p.from].push_back(p.id);
    adj.in[p.to].push_back(p.id);
  }
  return adj;
}

// ---------------------------------------------------------------------------
// CHP operating region

ChpRegionDiagnostics validate_chp_region(const ChpUnit &unit) {
  std::vector<RegionRow> rows = unit.region;
  rows.push_back({-1.0, 0.0, 0.0}); // P >= 0
  rows.push_back({0.0, -1.0, 0.0}); // H >= 0

  double scale = 1.0;
  for (const auto &r : rows)
    scale = std::max({scale, std::abs(r.d)});
  const double tol = 1e-9 * scale;

  auto feasible = [&](double p, double h) {
    return std::all_of(rows.begin(), rows.end(), [&](const RegionRow &r) {
      const double norm = std::max(1.0, std::hypot(r.a, r.b));
      return r.a * p + r.b * h - r.d <= tol * norm;
    });
  };

  ChpRegionDiagnostics diag;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const auto &r = rows[i];
      const auto &s = rows[j];
      const double det = r.a * s.b - r.b * s.a;
      if (std::abs(det) <= 1e-12 * std::max(1.0, std::hypot(r.a, r.b) * std::hypot(s.a, s.b)))
        continue;
      const double p = (r.d * s.b - r.b * s.d) / det;
      const double h = (r.a * s.d - r.d * s.a) / det;
      if (!feasible(p, h))
        continue;
      const bool dup = std::any_of(diag.vertices.begin(), diag.vertices.end(), [&](const auto &v) {
        return std::abs(v[0] - p) <= 1e-9 * scale && std::abs(v[1] - h) <= 1e-9 * scale;
      });
      if (!dup)
        diag.vertices.push_back({p, h});
    }
  }
  if (diag.vertices.empty())
    throw EmptyRegion("CHP unit " + unit.id + ": operating region is empty");

  // Extreme rays of the recession cone lie along boundary lines.
  for (const auto &r : rows) {
    const double norm = std::hypot(r.a, r.b);
    if (norm == 0.0)
      continue;
    for (double sign : {1.0, -1.0}) {
      const double dp = sign * r.b / norm;
      const double dh = -sign * r.a / norm;
      const bool recedes = std::all_of(rows.begin(), rows.end(), [&](const RegionRow &q) {
        return q.a * dp + q.b * dh <= 1e-12;
      });
      if (recedes)
        throw UnboundedRegion("CHP unit " + unit.id + ": operating region is unbounded");
    }
  }

  double cp = 0.0;
  double ch = 0.0;
  for (const auto &v : diag.vertices) {
    cp += v[0];
    ch += v[1];
  }
  cp /= static_cast<double>(diag.vertices.size());
  ch /= static_cast<double>(diag.vertices.size());
  std::sort(diag.vertices.begin(), diag.vertices.end(), [&](const auto &a, const auto &b) {
    return std::atan2(a[1] - ch, a[0] - cp) < std::atan2(b[1] - ch, b[0] - cp);
  });
  return diag;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class IssueList {
public:
  void add(std::string entity, std::string message) {
    issues_.push_back({std::move(entity), std::move(message)});
  }
  bool empty() const { return issues_.empty(); }
  std::vector<Issue> take() { return std::move(issues_); }

private:
  std::vector<Issue> issues_;
};

template <class Range, class Key>
void check_unique(const Range &items, Key key, std::string_view what, IssueList &issues) {
  std::set<std::string> seen;
  for (const auto &item : items) {
    const std::string &id = key(item);
    if (!seen.insert(id).second)
      issues.add(std::string(what) + " " + id, "duplicate id");
  }
}

bool connected(const std::vector<std::string> &vertices,
               const std::vector<std::pair<std::string, std::string>> &edges) {
  if (vertices.size() <= 1)
    return true;
  std::map<std::string, std::vector<std::string>> nbr;
  for (const auto &[a, b] : edges) {
    nbr[a].push_back(b);
    nbr[b].push_back(a);
  }
  std::set<std::string> seen{vertices.front()};
  std::deque<std::string> queue{vertices.front()};
  while (!queue.empty()) {
    const std::string v = queue.front();
    queue.pop_front();
    for (const auto &w : nbr[v]) {
      if (seen.insert(w).second)
        queue.push_back(w);
    }
  }
  return std::all_of(vertices.begin(), vertices.end(),
                     [&](const std::string &v) { return seen.count(v) > 0; });
}

void check_series(const std::vector<double> &series, int horizon, const std::string &entity,
                  bool nonnegative, IssueList &issues) {
  if (static_cast<int>(series.size()) != horizon) {
    issues.add(entity, "load series has " + std::to_string(series.size()) +
                           " entries, expected T=" + std::to_string(horizon));
    return;
  }
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (!std::isfinite(series[t]))
      issues.add(entity, "load at hour " + std::to_string(t + 1) + " is not finite");
    else if (nonnegative && series[t] < 0.0)
      issues.add(entity, "heat_load >= 0 violated at hour " + std::to_string(t + 1));
  }
}

} // namespace

void validate_network(const NetworkModel &model) {
  IssueList issues;

  if (model.horizon_hours < 1)
    issues.add("meta", "T >= 1 violated");
  if (!(model.specific_heat > 0.0))
    issues.add("meta", "specific_heat > 0 violated");
  if (!(model.base_power > 0.0))
    issues.add("meta", "base_mva > 0 violated");

  check_unique(model.heat_nodes, [](const HeatNode &n) -> const std::string & { return n.id; },
               "node", issues);
  check_unique(model.pipes, [](const Pipe &p) -> const std::string & { return p.id; }, "pipe",
               issues);
  check_unique(model.buses, [](const Bus &b) -> const std::string & { return b.id; }, "bus",
               issues);
  check_unique(model.lines, [](const Line &l) -> const std::string & { return l.id; }, "line",
               issues);
  check_unique(model.units, [](const GenerationUnit &u) -> const std::string & { return unit_id(u); },
               "unit", issues);
  for (const auto &n : model.heat_nodes) {
    if (model.find_bus(n.id))
      issues.add("node " + n.id, "id also used by a bus; load keys would be ambiguous");
  }

  for (const auto &n : model.heat_nodes) {
    const std::string entity = "node " + n.id;
    if (!(n.tau_min < n.tau_max))
      issues.add(entity, "tau_min < tau_max violated");
    if ((n.kind == NodeKind::source) != n.tau_source.has_value())
      issues.add(entity, "tau_source must be present exactly for source nodes");
    if (n.tau_source && (*n.tau_source < n.tau_min || *n.tau_source > n.tau_max))
      issues.add(entity, "tau_source within [tau_min, tau_max] violated");
    check_series(n.heat_load, model.horizon_hours, entity, true, issues);
    if (n.kind != NodeKind::load &&
        std::any_of(n.heat_load.begin(), n.heat_load.end(), [](double h) { return h != 0.0; }))
      issues.add(entity, "only load nodes may carry heat_load");
  }

  for (const auto &b : model.buses)
    check_series(b.p_load, model.horizon_hours, "bus " + b.id, false, issues);

  for (const auto &p : model.pipes) {
    const std::string entity = "pipe " + p.id;
    const HeatNode *from = model.find_node(p.from);
    const HeatNode *to = model.find_node(p.to);
    if (!from)
      issues.add(entity, "unknown from node '" + p.from + "'");
    if (!to)
      issues.add(entity, "unknown to node '" + p.to + "'");
    if (p.from == p.to)
      issues.add(entity, "from and to must differ");
    if (!(p.m_min >= 0.0))
      issues.add(entity, "m_min >= 0 violated");
    if (!(p.m_min < p.m_max))
      issues.add(entity, "m_min < m_max violated");
    else if (!(p.m_nominal >= p.m_min && p.m_nominal <= p.m_max))
      issues.add(entity, "m_nominal within [m_min, m_max] violated");
    if (!(p.length > 0.0))
      issues.add(entity, "length > 0 violated");
    if (!(p.heat_transfer_coeff >= 0.0))
      issues.add(entity, "heat_transfer_coeff >= 0 violated");
    if (!(p.tau_pipe_min < p.tau_pipe_max))
      issues.add(entity, "tau_pipe_min < tau_pipe_max violated");
  }

  for (const auto &l : model.lines) {
    const std::string entity = "line " + l.id;
    if (!model.find_bus(l.from))
      issues.add(entity, "unknown from bus '" + l.from + "'");
    if (!model.find_bus(l.to))
      issues.add(entity, "unknown to bus '" + l.to + "'");
    if (l.from == l.to)
      issues.add(entity, "from and to must differ");
    if (!(l.reactance > 0.0))
      issues.add(entity, "reactance > 0 violated");
    if (!(l.p_max > 0.0))
      issues.add(entity, "p_max > 0 violated");
  }

  std::set<std::string> hosted_sources;
  auto check_heat_host = [&](const std::string &entity, const std::string &node_id) {
    const HeatNode *n = model.find_node(node_id);
    if (!n) {
      issues.add(entity, "unknown node '" + node_id + "'");
    } else if (n->kind != NodeKind::source) {
      issues.add(entity, "heat units must attach to a source node, '" + node_id + "' is " +
                             std::string(to_string(n->kind)));
    } else {
      hosted_sources.insert(node_id);
    }
  };
  auto check_bus = [&](const std::string &entity, const std::string &bus_id) {
    if (!model.find_bus(bus_id))
      issues.add(entity, "unknown bus '" + bus_id + "'");
  };

  for (const auto &unit : model.units) {
    std::visit(
        [&](const auto &u) {
          using T = std::decay_t<decltype(u)>;
          const std::string entity = "unit " + u.id;
          if constexpr (std::is_same_v<T, HeatingBoiler>) {
            check_heat_host(entity, u.node_id);
            if (!(u.h_min <= u.h_max))
              issues.add(entity, "h_min <= h_max violated");
          } else if constexpr (std::is_same_v<T, ChpUnit>) {
            check_heat_host(entity, u.node_id);
            check_bus(entity, u.bus_id);
            const double d11 = 2.0 * u.cost[2];
            const double d22 = 2.0 * u.cost[4];
            const double off = u.cost[5];
            const double tol = 1e-12 * std::max({1.0, std::abs(d11), std::abs(d22), std::abs(off)});
            if (d11 < -tol || d22 < -tol || d11 * d22 - off * off < -tol * tol)
              issues.add(entity, "cost Hessian [[2*c2, c5], [c5, 2*c4]] is not positive semidefinite");
            try {
              validate_chp_region(u);
            } catch (const EmptyRegion &) {
              issues.add(entity, "operating region is empty");
            } catch (const UnboundedRegion &) {
              issues.add(entity, "operating region is unbounded");
            }
          } else {
            check_bus(entity, u.bus_id);
            if (!(u.p_min <= u.p_max))
              issues.add(entity, "p_min <= p_max violated");
          }
        },
        unit);
  }

  for (const auto &n : model.heat_nodes) {
    if (n.kind == NodeKind::source && !hosted_sources.count(n.id))
      issues.add("node " + n.id, "source node hosts no CHP unit or boiler");
  }

  {
    std::vector<std::string> vs;
    std::vector<std::pair<std::string, std::string>> es;
    for (const auto &n : model.heat_nodes)
      vs.push_back(n.id);
    for (const auto &p : model.pipes)
      es.emplace_back(p.from, p.to);
    if (!connected(vs, es))
      issues.add("heat network", "graph is not connected");
  }
  {
    std::vector<std::string> vs;
    std::vector<std::pair<std::string, std::string>> es;
    for (const auto &b : model.buses)
      vs.push_back(b.id);
    for (const auto &l : model.lines)
      es.emplace_back(l.from, l.to);
    if (!connected(vs, es))
      issues.add("power network", "graph is not connected");
  }

  // Nominal flows must respect mass balance: equality at junctions, and at
  // load nodes the outflow cannot exceed the inflow.
  if (issues.empty()) {
    const Adjacency adj = derive_adjacency(model);
    for (const auto &n : model.heat_nodes) {
      if (n.kind == NodeKind::source)
        continue;
      double in = 0.0;
      double out = 0.0;
      double scale = 1.0;
      for (const auto &id : adj.in.at(n.id)) {
        in += model.find_pipe(id)->m_nominal;
        scale = std::max(scale, model.find_pipe(id)->m_nominal);
      }
      for (const auto &id : adj.out.at(n.id))
        out += model.find_pipe(id)->m_nominal;
      const double tol = 1e-9 * scale;
      if (n.kind == NodeKind::junction && std::abs(in - out) > tol)
        issues.add("node " + n.id, "nominal flows violate mass balance");
      if (n.kind == NodeKind::load && out > in + tol)
        issues.add("node " + n.id, "nominal outflow exceeds inflow");
    }
  }

  if (!issues.empty())
    throw ValidationError(issues.take());
}

// ---------------------------------------------------------------------------
// JSON I/O

const json &network_schema() {
  static const json schema = json::parse(detail::kNetworkSchemaText);
  return schema;
}

namespace {

NodeKind parse_kind(const std::string &s) {
  if (s == "source")
    return NodeKind::source;
  if (s == "load")
    return NodeKind::load;
  return NodeKind::junction;
}

} // namespace

NetworkModel parse_network(const json &doc) {
  const auto violations = detail::validate_schema(network_schema(), doc);
  if (!violations.empty()) {
    std::vector<Issue> issues;
    bool missing = false;
    for (const auto &v : violations) {
      issues.push_back({v.path, v.message});
      missing = missing || v.missing_required;
    }
    if (missing)
      throw UnitConventionError(std::move(issues));
    throw ValidationError(std::move(issues));
  }

  NetworkModel m;
  const json &meta = doc.at("meta");
  m.horizon_hours = meta.at("T").get<int>();
  m.ambient_temp = meta.at("tau_ambient").get<double>();
  m.specific_heat = meta.value("specific_heat", kWaterSpecificHeat);
  m.base_power = meta.at("base_mva").get<double>();
  const auto zeros = std::vector<double>(static_cast<std::size_t>(m.horizon_hours), 0.0);

  for (const auto &jn : doc.at("heat_nodes")) {
    HeatNode n;
    n.id = jn.at("id").get<std::string>();
    n.kind = parse_kind(jn.at("kind").get<std::string>());
    n.tau_min = jn.at("tau_min").get<double>();
    n.tau_max = jn.at("tau_max").get<double>();
    if (jn.contains("tau_source"))
      n.tau_source = jn.at("tau_source").get<double>();
    n.heat_load = zeros;
    m.heat_nodes.push_back(std::move(n));
  }

  for (const auto &jp : doc.at("pipes")) {
    Pipe p;
    p.id = jp.at("id").get<std::string>();
    p.from = jp.at("from").get<std::string>();
    p.to = jp.at("to").get<std::string>();
    p.length = jp.at("length").get<double>();
    p.heat_transfer_coeff = jp.at("heat_transfer_coeff").get<double>();
    p.m_min = jp.at("m_min").get<double>();
    p.m_max = jp.at("m_max").get<double>();
    p.m_nominal = jp.at("m_nominal").get<double>();
    // Outlet window defaults to the downstream node's window.
    const HeatNode *down = m.find_node(p.to);
    p.tau_pipe_min = jp.contains("tau_pipe_min") ? jp.at("tau_pipe_min").get<double>()
                     : down                      ? down->tau_min
                                                 : 0.0;
    p.tau_pipe_max = jp.contains("tau_pipe_max") ? jp.at("tau_pipe_max").get<double>()
                     : down                      ? down->tau_max
                                                 : 0.0;
    m.pipes.push_back(std::move(p));
  }

  for (const auto &jb : doc.at("buses")) {
    Bus b;
    b.id = jb.at("id").get<std::string>();
    b.p_load = zeros;
    m.buses.push_back(std::move(b));
  }

  for (const auto &jl : doc.at("lines")) {
    Line l;
    l.id = jl.at("id").get<std::string>();
    l.from = jl.at("from").get<std::string>();
    l.to = jl.at("to").get<std::string>();
    l.reactance = jl.at("reactance").get<double>();
    l.p_max = jl.at("p_max").get<double>();
    m.lines.push_back(std::move(l));
  }

  for (const auto &ju : doc.at("units")) {
    const std::string type = ju.at("type").get<std::string>();
    if (type == "boiler") {
      m.units.emplace_back(HeatingBoiler{ju.at("id").get<std::string>(),
                                         ju.at("node_id").get<std::string>(),
                                         ju.at("cost_c").get<double>(), ju.at("h_min").get<double>(),
                                         ju.at("h_max").get<double>()});
    } else if (type == "chp") {
      ChpUnit c;
      c.id = ju.at("id").get<std::string>();
      c.bus_id = ju.at("bus_id").get<std::string>();
      c.node_id = ju.at("node_id").get<std::string>();
      for (int k = 0; k < 6; ++k)
        c.cost[static_cast<std::size_t>(k)] = ju.at("cost_c" + std::to_string(k)).get<double>();
      for (const auto &r : ju.at("region"))
        c.region.push_back({r.at("A").get<double>(), r.at("B").get<double>(), r.at("D").get<double>()});
      m.units.emplace_back(std::move(c));
    } else {
      m.units.emplace_back(ThermalUnit{ju.at("id").get<std::string>(), ju.at("bus_id").get<std::string>(),
                                       ju.at("cost_c1").get<double>(), ju.at("cost_c2").get<double>(),
                                       ju.at("p_min").get<double>(), ju.at("p_max").get<double>()});
    }
  }

  std::vector<Issue> load_issues;
  for (const auto &[key, series] : doc.at("loads").items()) {
    std::vector<double> values = series.get<std::vector<double>>();
    bool found = false;
    for (auto &n : m.heat_nodes) {
      if (n.id == key) {
        n.heat_load = values;
        found = true;
      }
    }
    for (auto &b : m.buses) {
      if (b.id == key) {
        b.p_load = values;
        found = true;
      }
    }
    if (!found)
      load_issues.push_back({"loads " + key, "no heat node or bus with this id"});
  }

  try {
    validate_network(m);
  } catch (const ValidationError &e) {
    auto all = e.issues();
    all.insert(all.end(), load_issues.begin(), load_issues.end());
    throw ValidationError(std::move(all));
  }
  if (!load_issues.empty())
    throw ValidationError(std::move(load_issues));
  return m;
}

NetworkModel load_network(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open network file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError("network file '" + path.string() + "': " + e.what());
  }
  return parse_network(doc);
}

json to_json(const NetworkModel &m) {
  json doc;
  doc["meta"] = {{"T", m.horizon_hours},
                 {"tau_ambient", m.ambient_temp},
                 {"specific_heat", m.specific_heat},
                 {"base_mva", m.base_power}};
  json loads = json::object();
  json nodes = json::array();
  for (const auto &n : m.heat_nodes) {
    json jn = {{"id", n.id},
               {"kind", std::string(to_string(n.kind))},
               {"tau_min", n.tau_min},
               {"tau_max", n.tau_max}};
    if (n.tau_source)
      jn["tau_source"] = *n.tau_source;
    nodes.push_back(std::move(jn));
    loads[n.id] = n.heat_load;
  }
  doc["heat_nodes"] = std::move(nodes);

  json pipes = json::array();
  for (const auto &p : m.pipes) {
    pipes.push_back({{"id", p.id},
                     {"from", p.from},
                     {"to", p.to},
                     {"length", p.length},
                     {"heat_transfer_coeff", p.heat_transfer_coeff},
                     {"m_min", p.m_min},
                     {"m_max", p.m_max},
                     {"tau_pipe_min", p.tau_pipe_min},
                     {"tau_pipe_max", p.tau_pipe_max},
                     {"m_nominal", p.m_nominal}});
  }
  doc["pipes"] = std::move(pipes);

  json buses = json::array();
  for (const auto &b : m.buses) {
    buses.push_back({{"id", b.id}});
    loads[b.id] = b.p_load;
  }
  doc["buses"] = std::move(buses);

  json lines = json::array();
  for (const auto &l : m.lines) {
    lines.push_back({{"id", l.id},
                     {"from", l.from},
                     {"to", l.to},
                     {"reactance", l.reactance},
                     {"p_max", l.p_max}});
  }
  doc["lines"] = std::move(lines);

  json units = json::array();
  for (const auto &unit : m.units) {
    std::visit(
        [&](const auto &u) {
          using T = std::decay_t<decltype(u)>;
          if constexpr (std::is_same_v<T, HeatingBoiler>) {
            units.push_back({{"id", u.id},
                             {"type", "boiler"},
                             {"node_id", u.node_id},
                             {"cost_c", u.cost_c},
                             {"h_min", u.h_min},
                             {"h_max", u.h_max}});
          } else if constexpr (std::is_same_v<T, ChpUnit>) {
            json ju = {{"id", u.id}, {"type", "chp"}, {"bus_id", u.bus_id}, {"node_id", u.node_id}};
            for (int k = 0; k < 6; ++k)
              ju["cost_c" + std::to_string(k)] = u.cost[static_cast<std::size_t>(k)];
            json region = json::array();
            for (const auto &r : u.region)
              region.push_back({{"A", r.a}, {"B", r.b}, {"D", r.d}});
            ju["region"] = std::move(region);
            units.push_back(std::move(ju));
          } else {
            units.push_back({{"id", u.id},
                             {"type", "thermal"},
                             {"bus_id", u.bus_id},
                             {"cost_c1", u.cost_c1},
                             {"cost_c2", u.cost_c2},
                             {"p_min", u.p_min},
                             {"p_max", u.p_max}});
          }
        },
        unit);
  }
  doc["units"] = std::move(units);
  doc["loads"] = std::move(loads);
  return doc;
}

} // namespace dhsplan
