#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace dhsplan {

/// Specific heat of water in MW*s/(kg*degC); makes c*m*tau come out in MW.
inline constexpr double kWaterSpecificHeat = 4.182e-3;

enum class NodeKind { source, load, junction };

std::string_view to_string(NodeKind kind);

struct HeatNode {
  std::string id;
  NodeKind kind = NodeKind::junction;
  double tau_min = 0.0; // nodal outlet temperature window, degC
  double tau_max = 0.0;
  std::optional<double> tau_source; // fixed supply temperature, sources only
  std::vector<double> heat_load;    // MW per hour

  bool operator==(const HeatNode &) const = default;
};

/// Supply pipe with fixed flow direction from -> to.
struct Pipe {
  std::string id;
  std::string from;
  std::string to;
  double length = 0.0;              // m
  double heat_transfer_coeff = 0.0; // MW/(m*degC)
  double m_min = 0.0;               // kg/s
  double m_max = 0.0;
  double tau_pipe_min = 0.0; // outlet temperature window, degC
  double tau_pipe_max = 0.0;
  // Flow used by the constant-flow baseline; NaN when not provided.
  double m_nominal = std::numeric_limits<double>::quiet_NaN();

  /// nu * L, the heat loss per degree of upstream excess temperature (MW/degC).
  double loss_factor() const { return heat_transfer_coeff * length; }

  bool operator==(const Pipe &) const = default;
};

struct Bus {
  std::string id;
  std::vector<double> p_load; // MW per hour

  bool operator==(const Bus &) const = default;
};

struct Line {
  std::string id;
  std::string from;
  std::string to;
  double reactance = 0.0; // per unit
  double p_max = 0.0;     // MW

  bool operator==(const Line &) const = default;
};

struct HeatingBoiler {
  std::string id;
  std::string node_id;
  double cost_c = 0.0; // $/MWh
  double h_min = 0.0;
  double h_max = 0.0;

  bool operator==(const HeatingBoiler &) const = default;
};

/// One edge of a CHP operating polygon: a*P + b*H <= d.
struct RegionRow {
  double a = 0.0;
  double b = 0.0;
  double d = 0.0;

  bool operator==(const RegionRow &) const = default;
};

struct ChpUnit {
  std::string id;
  std::string bus_id;
  std::string node_id;
  // c0 + c1*P + c2*P^2 + c3*H + c4*H^2 + c5*P*H
  std::array<double, 6> cost{};
  std::vector<RegionRow> region;

  bool operator==(const ChpUnit &) const = default;
};

struct ThermalUnit {
  std::string id;
  std::string bus_id;
  double cost_c1 = 0.0;
  double cost_c2 = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;

  bool operator==(const ThermalUnit &) const = default;
};

using GenerationUnit = std::variant<HeatingBoiler, ChpUnit, ThermalUnit>;

const std::string &unit_id(const GenerationUnit &unit);

struct NetworkModel {
  int horizon_hours = 0;
  double ambient_temp = 0.0;                   // degC
  double specific_heat = kWaterSpecificHeat;   // MW*s/(kg*degC)
  double base_power = 100.0;                   // MVA
  std::vector<HeatNode> heat_nodes;
  std::vector<Pipe> pipes;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<GenerationUnit> units;

  const HeatNode *find_node(std::string_view id) const;
  const Bus *find_bus(std::string_view id) const;
  const Pipe *find_pipe(std::string_view id) const;
  const HeatNode &node(std::string_view id) const;

  bool operator==(const NetworkModel &) const = default;
};

/// Pipe ids entering and leaving each heat node.
struct Adjacency {
  std::map<std::string, std::vector<std::string>> in;
  std::map<std::string, std::vector<std::string>> out;
};

Adjacency derive_adjacency(const NetworkModel &model);

struct ChpRegionDiagnostics {
  /// Polygon vertices (P, H) in counter-clockwise order.
  std::vector<std::array<double, 2>> vertices;
};

/// Checks that {a*P + b*H <= d for all rows, P >= 0, H >= 0} is a nonempty,
/// bounded polygon. Throws EmptyRegion or UnboundedRegion.
ChpRegionDiagnostics validate_chp_region(const ChpUnit &unit);

/// Parses and validates a network document. Throws UnitConventionError for
/// missing required fields, ValidationError for every violated invariant.
NetworkModel parse_network(const nlohmann::json &doc);

/// Reads a canonical network file. Throws ParseError on malformed JSON.
NetworkModel load_network(const std::filesystem::path &path);

/// Structural and numerical invariants; collects every defect before throwing.
void validate_network(const NetworkModel &model);

/// Canonical JSON form; parse_network(to_json(m)) == m.
nlohmann::json to_json(const NetworkModel &model);

/// The JSON schema enforced by parse_network.
const nlohmann::json &network_schema();

} // namespace dhsplan
