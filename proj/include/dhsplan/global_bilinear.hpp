#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhsplan/formulation.hpp"
#include "dhsplan/qp.hpp"

namespace dhsplan {

struct GlobalConfig {
  double gap_tol = 1e-4;  // relative
  double feas_tol = 1e-6; // relative per term
  long node_limit = 100000;
  double time_limit = 600.0; // seconds
  int workers = 1;           // independent blocks are solved in parallel
  // tighter than the QP default so incumbents close heat balances to ~1e-9 MW
  QpConfig qp = [] {
    QpConfig c;
    c.tolerance = 1e-9;
    return c;
  }();
  std::optional<std::filesystem::path> node_log;
};

enum class GlobalStatus { Optimal, NodeLimit, TimeLimit, Infeasible };

std::string_view to_string(GlobalStatus s);

struct GlobalSolution {
  GlobalStatus status = GlobalStatus::Infeasible;
  std::vector<double> x;
  double upper_bound = 0.0;
  double lower_bound = 0.0;
  double gap = 0.0;
  long nodes = 0;
  double seconds = 0.0;
  int components = 0;
};

/// Per-variable box of a search node. Bilinear factors are split in place and
/// product bounds are propagated from them.
struct BnbNode {
  long id = 0;
  long parent = -1;
  int depth = 0;
  std::vector<double> lo;
  std::vector<double> hi;
  double lower_bound = -std::numeric_limits<double>::infinity();
};

struct BranchChoice {
  int term = -1;
  int column = -1;
  double split = 0.0;
};

/// Most violated term above feas_tol, and which factor to split. Nothing when
/// every term is within tolerance.
std::optional<BranchChoice> choose_branch(const ProblemInstance &instance, const BnbNode &node,
                                          std::span<const double> root_lo,
                                          std::span<const double> root_hi,
                                          std::span<const double> x, double feas_tol);

/// Children of `node` split at choice.split. The split column's box is cut and
/// the bounds of every product that uses it are narrowed to the interval product.
std::pair<BnbNode, BnbNode> branch(const ProblemInstance &instance, const BnbNode &node,
                                   const BranchChoice &choice, long first_child_id);

/// Spatial branch-and-bound over McCormick relaxations. The instance must be
/// Base or Reformulated; hour blocks that share no rows are searched separately.
/// Throws NoFeasibleIncumbent when the search ends without any feasible point.
GlobalSolution solve_global(const ProblemInstance &instance, const GlobalConfig &config = {});

struct LocalConfig {
  int max_iterations = 60;
  double initial_radius = 0.1; // fraction of each factor's box width
  double feas_tol = 1e-6;
  QpConfig qp;
};

/// Local solve of the bilinear instance from x0: sequential linearization with
/// elastic term rows and a trust region, then one exact re-solve with the
/// temperatures fixed. Nothing when no point within feas_tol is reached.
std::optional<std::vector<double>> local_solve(const ProblemInstance &instance,
                                               std::span<const double> x0,
                                               const LocalConfig &config = {});

/// Independent pieces of an instance: columns linked by rows, terms, or Q.
struct Component {
  ProblemInstance instance;
  std::vector<int> columns; // local column -> parent column
};

std::vector<Component> split_components(const ProblemInstance &instance);

} // namespace dhsplan
