#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/SparseCore>

#include "dhsplan/network.hpp"

namespace dhsplan {

enum class Variant { Base, Reformulated, RemoveBilinear, McCormick, ConstantFlow };

std::string_view to_string(Variant v);
/// Accepts "base", "reformulated", "remove-bilinear", "mccormick", "constant-flow".
Variant parse_variant(std::string_view name);

/// Decision variable families. Declaration order is the column order.
enum class VarKind {
  m_pipe,         // mass flow, kg/s
  tau_tilde_node, // nodal outlet temperature above ambient, degC
  tau_tilde_pipe, // pipe outlet temperature above ambient (base model only)
  h_in_pipe,      // heat delivered at a pipe outlet, MW
  h_out_pipe,     // heat injected at a pipe inlet, MW
  theta_bus,      // voltage angle, rad
  p_chp,
  h_chp,
  p_tu,
  h_hb,
};

std::string_view to_string(VarKind kind);

struct VarKey {
  VarKind kind = VarKind::m_pipe;
  std::string id;
  int hour = 1;

  auto operator<=>(const VarKey &) const = default;
};

/// "m_pipe[p1,3]"
std::string to_string(const VarKey &key);
std::optional<VarKey> parse_var_key(std::string_view text);

/// Bijection between semantic keys and column indices, sorted by (kind, id, hour).
class VarMap {
public:
  VarMap() = default;
  explicit VarMap(std::vector<VarKey> keys);

  std::size_t size() const { return keys_.size(); }
  int index(const VarKey &key) const;
  std::optional<int> find(const VarKey &key) const;
  const VarKey &key(int column) const { return keys_.at(static_cast<std::size_t>(column)); }
  const std::vector<VarKey> &keys() const { return keys_; }
  std::string name(int column) const { return to_string(key(column)); }

private:
  std::vector<VarKey> keys_;
  std::map<VarKey, int> index_;
};

/// Names the model equation a row instantiates, e.g. {"11a", "n3", 2}.
struct RowLabel {
  std::string tag;
  std::string entity;
  int hour = 0;

  bool operator==(const RowLabel &) const = default;
};

std::string to_string(const RowLabel &label);

struct LinearRow {
  std::vector<std::pair<int, double>> coeffs;
  double rhs = 0.0;
  RowLabel label;
};

/// product = coeff * factor_m * factor_tau
struct BilinearTerm {
  int product = -1;
  int factor_m = -1;
  int factor_tau = -1;
  double coeff = 1.0;
  RowLabel label;
};

/// c0 + q'x + 1/2 x'Qx
struct QuadraticObjective {
  Eigen::SparseMatrix<double> Q;
  Eigen::VectorXd q;
  double c0 = 0.0;
};

struct ProblemInstance {
  Variant variant = Variant::Reformulated;
  std::vector<int> hours;
  VarMap vars;
  QuadraticObjective objective;
  std::vector<LinearRow> eq_rows;   // a'x == rhs
  std::vector<LinearRow> ineq_rows; // a'x <= rhs
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<BilinearTerm> bilinear_terms;

  std::size_t num_vars() const { return vars.size(); }
};

/// Rows, bilinear terms, and variable bounds contributed by one model block.
struct ConstraintBlock {
  std::vector<LinearRow> eq_rows;
  std::vector<LinearRow> ineq_rows;
  std::vector<BilinearTerm> bilinear_terms;
  std::vector<std::tuple<int, double, double>> bounds; // column, lo, hi
};

std::vector<int> all_hours(const NetworkModel &model);

/// Columns needed by `variant` over `hours`.
VarMap make_var_map(const NetworkModel &model, Variant variant, std::span<const int> hours);

/// Reformulated heat network: balance, Taylor heat loss, flow-dependent heat
/// windows, temperature windows, mass balance, source temperatures, and the
/// bilinear outlet-heat terms H_out = c*m*tau.
ConstraintBlock build_dhs_reformulated(const NetworkModel &model, const VarMap &vars, int hour);

/// Original heat network with the exponential loss pre-linearized; registers
/// both products m*tau_pipe and m*tau_node per pipe.
ConstraintBlock build_dhs_base(const NetworkModel &model, const VarMap &vars, int hour);

/// Fixed nominal flows with floating source temperatures; fully linear.
ConstraintBlock build_constant_flow(const NetworkModel &model, const VarMap &vars, int hour);

/// DC power balance, line limits, and reference angle.
ConstraintBlock build_power_network(const NetworkModel &model, const VarMap &vars, int hour);

/// Unit operating limits and the CHP polygon rows.
ConstraintBlock build_units(const NetworkModel &model, const VarMap &vars, int hour);

/// Assembles the full planning problem. Hours are 1-based and block-decoupled.
ProblemInstance build(const NetworkModel &model, Variant variant, std::span<const int> hours);

struct TermBox {
  double m_lo = 0.0;
  double m_hi = 0.0;
  double tau_lo = 0.0;
  double tau_hi = 0.0;
};

/// Per-term boxes taken from the instance's variable bounds.
std::vector<TermBox> initial_boxes(const ProblemInstance &instance);

/// Replaces every bilinear term by its four McCormick envelope rows over the
/// supplied boxes and intersects variable bounds with them.
ProblemInstance apply_mccormick(const ProblemInstance &instance, std::span<const TermBox> boxes);

/// McCormick relaxation over per-variable bounds (shared factors get one box).
ProblemInstance apply_mccormick(const ProblemInstance &instance, std::span<const double> lo,
                                std::span<const double> hi);

/// Fixes every bilinear m factor at its value in x and replaces each term by
/// the exact linear row H = c*m(x)*tau, tagged like the term it replaces.
ProblemInstance linearize_at_flows(const ProblemInstance &instance, std::span<const double> x);

/// Fixes every bilinear temperature factor at its value in x instead; the
/// flows stay free, so the result usually keeps a feasible point.
ProblemInstance linearize_at_temperatures(const ProblemInstance &instance,
                                          std::span<const double> x);

/// |product - c*m*tau| / max(floor, |product|) at x.
double relative_violation(const BilinearTerm &term, std::span<const double> x, double floor);

double objective_value(const ProblemInstance &instance, std::span<const double> x);

/// Per-equation-tag row counts, for auditing instance structure.
std::map<std::string, int> row_tag_counts(const ProblemInstance &instance);

/// CPLEX LP text with equation tags in the row names; bilinear terms become
/// quadratic equality rows.
std::string to_lp_format(const ProblemInstance &instance);

} // namespace dhsplan
