#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dhsplan/formulation.hpp"
#include "dhsplan/network.hpp"
#include "dhsplan/qp.hpp"

namespace dhsplan {

/// eps^n = a * r^(n-1), n = 1..count
std::vector<double> geometric_schedule(double a, double r, int count);

/// "geom:a,r" or "list:v1,v2,...". Validates (0,1) entries, nonincreasing.
/// Geometric schedules are expanded to `count` entries.
std::vector<double> parse_eps_schedule(std::string_view text, int count);

struct TighteningConfig {
  double delta = 0.01;
  int max_iters = 10;
  std::vector<double> eps = geometric_schedule(0.5, 0.5, 10);
  bool repair = true;
  QpConfig qp;
  int workers = 1; // hours run concurrently
};

/// Throws ValidationError.
void validate(const TighteningConfig &config);

/// [(1-eps)v, (1+eps)v] intersected with the initial box.
std::pair<double, double> tightened_box(double v, double eps, double lo_ini, double hi_ini);

enum class TighteningStatus { ConvergedByDelta, BudgetExhausted, RelaxationInfeasible };

std::string_view to_string(TighteningStatus s);

struct ViolationReport {
  std::vector<double> per_term; // instance.bilinear_terms order
  double max = 0.0;
  double avg = 0.0;
};

/// |H - c*m*tau| / max(|H|, floor) per term.
ViolationReport violation_report(std::span<const double> x, const ProblemInstance &instance,
                                 double floor = 1e-6);

struct TighteningIteration {
  int n = 0;
  double objective = 0.0;
  double max_violation = 0.0;
  double avg_violation = 0.0;
  std::vector<TermBox> boxes; // per term of the hour's instance, as solved
  double seconds = 0.0;
};

struct HourTightening {
  int hour = 0;
  TighteningStatus status = TighteningStatus::BudgetExhausted;
  std::vector<TighteningIteration> iterations; // feasible iterations only
  std::optional<std::vector<TermBox>> infeasible_boxes;
};

struct RepairResult {
  std::vector<double> x;
  double objective = 0.0;
  std::string method; // "fixed-flow" or "local"
};

struct TighteningResult {
  TighteningStatus status = TighteningStatus::BudgetExhausted;
  ProblemInstance instance; // reformulated, all requested hours
  std::vector<HourTightening> hours;
  /// Summed over hours; an hour that stopped early keeps its last iterate.
  std::vector<TighteningIteration> iterations;
  std::vector<double> final_x;
  double final_objective = 0.0;
  std::optional<RepairResult> repaired;
  std::string repair_error;
};

/// Bound-tightened McCormick loop. Throws InfeasibleBoundsError when the
/// first relaxation of some hour is already infeasible.
TighteningResult tighten(const NetworkModel &model, std::span<const int> hours,
                         const TighteningConfig &config = {});

/// Fixes the flows at x and re-solves the now-linear reformulated model.
/// Throws FixedFlowInfeasible.
RepairResult repair_fixed_flow(const NetworkModel &model, std::span<const int> hours,
                               std::span<const double> x, const QpConfig &qp = {});

/// Same on an existing reformulated instance.
RepairResult repair_fixed_flow(const ProblemInstance &reformulated, std::span<const double> x,
                               const QpConfig &qp = {});

/// Fixed-flow repair, falling back to a local solve from x when the fixed
/// flows cannot serve the loads. Throws FixedFlowInfeasible if both fail.
RepairResult repair_with_fallback(const ProblemInstance &reformulated, std::span<const double> x,
                                  const QpConfig &qp = {});

} // namespace dhsplan
