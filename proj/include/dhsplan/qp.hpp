#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "dhsplan/formulation.hpp"

namespace dhsplan {

using SparseMat = Eigen::SparseMatrix<double>;

/// min c0 + q'x + 1/2 x'Qx  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lo <= x <= hi
struct QpProblem {
  SparseMat Q;
  Eigen::VectorXd q;
  double c0 = 0.0;
  SparseMat A_eq;
  Eigen::VectorXd b_eq;
  SparseMat A_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Eigen::Index num_vars() const { return q.size(); }
};

enum class QpStatus { Optimal, PrimalInfeasible, DualInfeasible, IterLimit, NumericalFailure };

std::string_view to_string(QpStatus s);

/// Stationarity convention: Q x + q - A_eq' y_eq + A_in' z_in - z_lo + z_hi = 0,
/// so y_eq is the sensitivity of the optimal value to b_eq.
struct QpDuals {
  Eigen::VectorXd y_eq;
  Eigen::VectorXd z_in;
  Eigen::VectorXd z_lo;
  Eigen::VectorXd z_hi;
};

struct QpResiduals {
  double primal = 0.0;          // max violation of rows and bounds
  double dual = 0.0;            // stationarity, inf-norm
  double complementarity = 0.0; // sum |z * slack| / max(1, |objective|)
  double duality_gap = 0.0;     // |primal obj - dual obj| / (1 + |primal obj|)
};

struct QpSolution {
  QpStatus status = QpStatus::NumericalFailure;
  Eigen::VectorXd x;
  QpDuals duals;
  double objective = 0.0;
  double dual_objective = 0.0;
  QpResiduals residuals;
  int iterations = 0;
  /// Farkas multipliers (y_eq, z_in stacked) for PrimalInfeasible, or a primal
  /// ray for DualInfeasible.
  Eigen::VectorXd certificate;
  /// Columns whose pivots broke down, for NumericalFailure.
  std::vector<int> culprit_columns;
  std::string message;
};

struct QpConfig {
  double tolerance = 1e-8;
  int max_iterations = 200;
  double regularization = 1e-9;
  double infeasibility_tolerance = 1e-10;
  bool check_psd = true;
};

/// Throws DimensionMismatch for inconsistent shapes and ValidationError when
/// Q is not symmetric positive semidefinite.
void validate_qp(const QpProblem &problem);

/// Primal-dual interior point with Mehrotra predictor-corrector.
QpSolution solve_qp(const QpProblem &problem, const QpConfig &config = {});

/// Convex instance to solver form. Rows keep the instance's order.
/// Throws UnsupportedVariant when bilinear terms remain.
QpProblem to_qp(const ProblemInstance &instance);

struct PriceMap {
  std::map<std::pair<std::string, int>, double> heat;     // (node, hour) -> $/MWh
  std::map<std::pair<std::string, int>, double> electric; // (bus, hour) -> $/MWh
};

/// Balance-row duals as nodal prices. Throws NotOptimal.
PriceMap extract_duals(const QpSolution &solution, const ProblemInstance &instance,
                       double base_power);

} // namespace dhsplan
