#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhsplan/formulation.hpp"
#include "dhsplan/network.hpp"

namespace dhsplan {

/// e^(-x) - (1 - x), accurate for small x.
double taylor_gap(double x);

struct NodeTemperature {
  std::string node;
  int hour = 0;
  double tau = 0.0; // degC
  bool in_window = true;
};

struct PipeTemperature {
  std::string pipe;
  int hour = 0;
  std::optional<double> tau; // outlet, degC; absent below kZeroFlow
  bool in_window = true;
};

struct RecoveredTemperatures {
  std::vector<NodeTemperature> nodes;
  std::vector<PipeTemperature> pipes;
  int out_of_window = 0;
  int zero_flow = 0;
};

inline constexpr double kZeroFlow = 1e-9; // kg/s

/// Nodal temperatures from the tau_tilde columns; pipe outlet temperatures
/// from H_in/(c*m), or from tau_tilde_pipe when the instance has it.
RecoveredTemperatures recover_temperatures(std::span<const double> x,
                                           const ProblemInstance &instance,
                                           const NetworkModel &model, double window_tol = 1e-6);

struct PipeAudit {
  std::string pipe;
  int hour = 0;
  double m = 0.0;
  double loss_ratio = 0.0;   // nu*L/(c*m), infinite at zero flow
  double tau_upstream = 0.0; // degC
  double taylor_outlet = 0.0; // first-order law, degC
  double exact_outlet = 0.0;  // exponential law, degC
  std::optional<double> carried_outlet; // what the solution itself implies, degC
  double discrepancy_abs = 0.0; // exact - taylor, degC
  double discrepancy_rel = 0.0; // same per degree of upstream excess temperature
  bool premise_violated = false; // loss_ratio above threshold
};

struct HourClosure {
  int hour = 0;
  double production = 0.0; // MW
  double load = 0.0;
  double linear_losses = 0.0; // sum nu*L*tau_tilde_upstream
  double exact_losses = 0.0;  // sum c*m*tau_tilde_upstream*(1 - e^-x)
  double closure_linear = 0.0; // production - load - linear_losses
  double closure_exact = 0.0;
};

struct PhysicsAudit {
  std::vector<PipeAudit> pipes;
  std::vector<HourClosure> hours;
  double premise_threshold = 0.1;
  double max_loss_ratio = 0.0;
  double max_discrepancy_abs = 0.0;
  int premise_flags = 0;
};

/// Recomputes every pipe outlet with the exponential loss law and compares
/// it with the temperature the solution carries; energy closure per hour.
PhysicsAudit exact_heat_loss_audit(std::span<const double> x, const ProblemInstance &instance,
                                   const NetworkModel &model, double premise_threshold = 0.1);

/// Relative violation of H_out = c*m*tau_tilde_upstream per pipe and hour for
/// any variant's solution (floor 1e-6). Order: pipes outer, hours inner.
struct TermViolation {
  std::string pipe;
  int hour = 0;
  double violation = 0.0;
};
std::vector<TermViolation> outlet_heat_violations(std::span<const double> x,
                                                  const ProblemInstance &instance,
                                                  const NetworkModel &model);

/// Objective of each hour's block, in instance.hours order. The constant
/// term is spread evenly (it is a per-hour sum of identical unit constants).
std::vector<double> hourly_objectives(std::span<const double> x, const ProblemInstance &instance);

} // namespace dhsplan
