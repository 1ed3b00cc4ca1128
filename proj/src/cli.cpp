#include "dhsplan/cli.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "dhsplan/analysis.hpp"
#include "dhsplan/compare.hpp"
#include "dhsplan/errors.hpp"

namespace dhsplan {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum Exit { kOk = 0, kError = 1, kInfeasible = 2, kBudget = 3, kTolerance = 4 };

struct Common {
  std::string network;
  std::string hours;
  std::string output_dir;
  int workers = 1;
  double qp_tol = QpConfig{}.tolerance;
  int qp_max_iter = QpConfig{}.max_iterations;
  double gap_tol = GlobalConfig{}.gap_tol;
  long node_limit = GlobalConfig{}.node_limit;
  double time_limit = GlobalConfig{}.time_limit;
  double delta = TighteningConfig{}.delta;
  int max_iters = TighteningConfig{}.max_iters;
  std::string eps = "geom:0.5,0.5";
  bool no_repair = false;
  double premise = 0.1;
};

int parse_int(std::string_view s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
    throw ValidationError("hours", "bad hour '" + std::string(s) + "'");
  return v;
}

// "a..b" inclusive, or a single hour; empty means the whole horizon.
std::vector<int> parse_hours(std::string_view text, const NetworkModel &model) {
  if (text.empty())
    return all_hours(model);
  const auto dots = text.find("..");
  const int a = parse_int(text.substr(0, dots));
  const int b = dots == std::string_view::npos ? a : parse_int(text.substr(dots + 2));
  if (b < a)
    throw ValidationError("hours", "empty range " + std::string(text));
  std::vector<int> hours;
  for (int h = a; h <= b; ++h)
    hours.push_back(h);
  return hours;
}

fs::path output_dir(const Common &c) {
  if (!c.output_dir.empty())
    return c.output_dir;
  if (const char *env = std::getenv("DHSPLAN_OUTPUT_DIR"); env && *env)
    return env;
  return ".";
}

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("--network", c.network, "network JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--hours", c.hours, "hour range a..b (default: whole horizon)");
  cmd->add_option("--output-dir", c.output_dir, "output directory (env DHSPLAN_OUTPUT_DIR)");
  cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--qp-tol", c.qp_tol, "QP optimality tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--qp-max-iter", c.qp_max_iter, "QP iteration limit")->check(CLI::PositiveNumber);
  cmd->add_option("--gap-tol", c.gap_tol, "global relative gap")->check(CLI::PositiveNumber);
  cmd->add_option("--node-limit", c.node_limit, "global node limit per block")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--time-limit", c.time_limit, "global time limit, s")->check(CLI::PositiveNumber);
  cmd->add_option("--delta", c.delta, "tightening stop threshold")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", c.max_iters, "tightening iterations")->check(CLI::PositiveNumber);
  cmd->add_option("--eps", c.eps, "schedule geom:a,r or list:v1,v2,...");
  cmd->add_flag("--no-repair", c.no_repair, "skip the fixed-flow repair");
  cmd->add_option("--premise-threshold", c.premise, "flag pipes with nu*L/(c*m) above this");
}

CompareConfig make_config(const Common &c) {
  CompareConfig cfg;
  cfg.qp.tolerance = c.qp_tol;
  cfg.qp.max_iterations = c.qp_max_iter;
  cfg.global.gap_tol = c.gap_tol;
  cfg.global.node_limit = c.node_limit;
  cfg.global.time_limit = c.time_limit;
  cfg.global.qp.max_iterations = c.qp_max_iter;
  cfg.global.qp.tolerance = std::min(cfg.global.qp.tolerance, c.qp_tol);
  cfg.tightening.delta = c.delta;
  cfg.tightening.max_iters = c.max_iters;
  cfg.tightening.eps = parse_eps_schedule(c.eps, std::max(1, c.max_iters - 1));
  cfg.tightening.repair = !c.no_repair;
  cfg.tightening.qp = cfg.qp;
  cfg.tightening.workers = c.workers;
  cfg.workers = c.workers;
  cfg.premise_threshold = c.premise;
  return cfg;
}

std::string violations_csv(std::span<const double> x, const ProblemInstance &inst,
                           const NetworkModel &model, const std::string &hash) {
  std::string out = "# dhsplan " + std::string(version()) + " config " + hash + "\n";
  out += "pipe,hour,violation\n";
  for (const auto &v : outlet_heat_violations(x, inst, model))
    out += v.pipe + "," + std::to_string(v.hour) + "," + format_number(v.violation) + "\n";
  return out;
}

std::string duals_csv(const PriceMap &prices, const std::string &hash) {
  std::string out = "# dhsplan " + std::string(version()) + " config " + hash + "\n";
  out += "network,id,hour,price\n";
  for (const auto &[key, v] : prices.heat)
    out += "heat," + key.first + "," + std::to_string(key.second) + "," + format_number(v) + "\n";
  for (const auto &[key, v] : prices.electric)
    out += "electric," + key.first + "," + std::to_string(key.second) + "," + format_number(v) +
           "\n";
  return out;
}

SolutionFile solution_file(const ProblemInstance &inst, std::span<const double> x,
                           std::string variant, std::string status, const std::string &hash) {
  SolutionFile s;
  s.version = std::string(version());
  s.config_hash = hash;
  s.variant = std::move(variant);
  s.status = std::move(status);
  s.hours = inst.hours;
  if (!x.empty()) {
    s.objective = objective_value(inst, x);
    for (std::size_t j = 0; j < x.size(); ++j)
      s.values.emplace_back(inst.vars.name(static_cast<int>(j)), x[j]);
  }
  return s;
}

void write_solution(const fs::path &path, const SolutionFile &s) {
  write_text_file(path, to_json(s).dump(2) + "\n");
}

int cmd_solve(const Common &c, const std::string &variant_name, const std::string &node_log) {
  const NetworkModel model = load_network(c.network);
  const std::vector<int> hours = parse_hours(c.hours, model);
  const CompareConfig cfg = make_config(c);
  json cj = config_json(cfg);
  cj["variant"] = variant_name;
  const std::string hash = config_hash(cj, hours, model);
  const fs::path dir = output_dir(c);
  fs::create_directories(dir);

  if (variant_name == "tightening") {
    TighteningResult r;
    try {
      r = tighten(model, hours, cfg.tightening);
    } catch (const InfeasibleBoundsError &e) {
      std::cerr << "infeasible: " << e.what() << "\n";
      return kInfeasible;
    }
    write_text_file(dir / "iterations.csv", iterations_csv(r, hash));
    write_solution(dir / "solution.json", solution_file(r.instance, r.final_x, "tightening",
                                                        std::string(to_string(r.status)), hash));
    write_text_file(dir / "violations.csv", violations_csv(r.final_x, r.instance, model, hash));
    write_text_file(dir / "schedule.csv", schedule_csv(r.instance, r.final_x, hash));
    if (r.repaired)
      write_solution(dir / "repaired.json",
                     solution_file(r.instance, r.repaired->x, "reformulated",
                                   "repaired:" + r.repaired->method, hash));
    else if (!r.repair_error.empty())
      std::cerr << "repair failed: " << r.repair_error << "\n";
    std::printf("status %s objective %.10g iterations %zu\n", std::string(to_string(r.status)).c_str(),
                r.final_objective, r.iterations.size());
    if (r.repaired)
      std::printf("repaired objective %.10g (%s)\n", r.repaired->objective,
                  r.repaired->method.c_str());
    return r.status == TighteningStatus::ConvergedByDelta ? kOk : kBudget;
  }

  const Variant variant = parse_variant(variant_name);
  const ProblemInstance inst = build(model, variant, hours);

  if (variant == Variant::Base || variant == Variant::Reformulated) {
    GlobalConfig gc = cfg.global;
    gc.workers = c.workers;
    if (!node_log.empty())
      gc.node_log = node_log;
    GlobalSolution g;
    try {
      g = solve_global(inst, gc);
    } catch (const NoFeasibleIncumbent &e) {
      std::cerr << "no feasible point found: " << e.what() << "\n";
      return kInfeasible;
    }
    if (g.status == GlobalStatus::Infeasible) {
      std::cerr << "infeasible\n";
      return kInfeasible;
    }
    write_solution(dir / "solution.json",
                   solution_file(inst, g.x, variant_name, std::string(to_string(g.status)), hash));
    write_text_file(dir / "violations.csv", violations_csv(g.x, inst, model, hash));
    write_text_file(dir / "schedule.csv", schedule_csv(inst, g.x, hash));
    std::printf("status %s objective %.10g bound %.10g gap %.3g nodes %ld\n",
                std::string(to_string(g.status)).c_str(), g.upper_bound, g.lower_bound, g.gap,
                g.nodes);
    return g.status == GlobalStatus::Optimal ? kOk : kBudget;
  }

  const QpSolution s = solve_qp(to_qp(inst), cfg.qp);
  if (s.status == QpStatus::PrimalInfeasible) {
    std::cerr << "infeasible\n";
    return kInfeasible;
  }
  if (s.status != QpStatus::Optimal) {
    std::cerr << "solver: " << to_string(s.status) << " " << s.message << "\n";
    return kError;
  }
  const std::vector<double> x(s.x.data(), s.x.data() + s.x.size());
  write_solution(dir / "solution.json", solution_file(inst, x, variant_name, "Optimal", hash));
  write_text_file(dir / "duals.csv", duals_csv(extract_duals(s, inst, model.base_power), hash));
  write_text_file(dir / "violations.csv", violations_csv(x, inst, model, hash));
  write_text_file(dir / "schedule.csv", schedule_csv(inst, x, hash));
  std::printf("status Optimal objective %.10g iterations %d\n", s.objective, s.iterations);
  return kOk;
}

int cmd_compare(const Common &c, const std::vector<std::string> &skip, std::string name) {
  const NetworkModel model = load_network(c.network);
  const std::vector<int> hours = parse_hours(c.hours, model);
  CompareConfig cfg = make_config(c);
  for (const auto &s : skip) {
    if (s != "global")
      throw ValidationError("skip", "only 'global' can be skipped");
    cfg.skip_global = true;
  }
  if (name.empty())
    name = fs::path(c.network).stem().string();
  const ComparisonReport r = compare_variants(model, hours, cfg, name);
  write_comparison_files(r, output_dir(c));
  std::cout << comparison_csv(r);
  for (const auto &row : r.rows)
    if (row.status == RowStatus::Limit || row.status == RowStatus::Failed)
      return kBudget;
  return kOk;
}

int cmd_check(const std::string &solution_path, const std::string &network, double tolerance,
              double premise) {
  std::ifstream f(solution_path, std::ios::binary);
  if (!f)
    throw ParseError("cannot read " + solution_path);
  std::stringstream ss;
  ss << f.rdbuf();
  const SolutionFile sol = parse_solution(ss.str());
  const NetworkModel model = load_network(network);
  const Variant variant =
      sol.variant == "tightening" ? Variant::Reformulated : parse_variant(sol.variant);
  const ProblemInstance inst = build(model, variant, sol.hours);
  const std::vector<double> x = solution_vector(sol, inst);

  double worst = 0.0, sum = 0.0;
  const auto v = outlet_heat_violations(x, inst, model);
  for (const auto &t : v) {
    worst = std::max(worst, t.violation);
    sum += t.violation;
  }
  const double avg = v.empty() ? 0.0 : sum / static_cast<double>(v.size());
  const PhysicsAudit audit = exact_heat_loss_audit(x, inst, model, premise);
  const RecoveredTemperatures temps = recover_temperatures(x, inst, model);
  double closure = 0.0;
  for (const auto &h : audit.hours)
    closure = std::max(closure, std::abs(h.closure_linear));

  std::printf("max_violation %.6g\navg_violation %.6g\n", worst, avg);
  std::printf("max_loss_ratio %.6g\npremise_flags %d\nmax_taylor_discrepancy_degC %.6g\n",
              audit.max_loss_ratio, audit.premise_flags, audit.max_discrepancy_abs);
  std::printf("max_energy_closure_MW %.6g\nout_of_window %d\nzero_flow_pipes %d\n", closure,
              temps.out_of_window, temps.zero_flow);
  return worst <= tolerance ? kOk : kTolerance;
}

} // namespace

int run_cli(int argc, char **argv) {
  CLI::App app{"Integrated heat and power dispatch with bilinear heat networks"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  Common solve_opts;
  std::string variant = "reformulated";
  std::string node_log;
  auto *solve = app.add_subcommand("solve", "solve one model variant");
  add_common(solve, solve_opts);
  solve->add_option("--variant", variant,
                    "base|reformulated|remove-bilinear|mccormick|constant-flow|tightening")
      ->check(CLI::IsMember({"base", "reformulated", "remove-bilinear", "mccormick",
                             "constant-flow", "tightening"}));
  solve->add_option("--node-log", node_log, "branch-and-bound node log CSV");

  Common compare_opts;
  std::vector<std::string> skip;
  std::string name;
  auto *compare = app.add_subcommand("compare", "run every variant and write reports");
  add_common(compare, compare_opts);
  compare->add_option("--skip", skip, "variants to skip (global)");
  compare->add_option("--name", name, "report file stem (default: network file stem)");

  std::string solution, check_network;
  double tolerance = 0.08, premise = 0.1;
  auto *check = app.add_subcommand("check", "audit a solution file");
  check->add_option("--solution", solution, "solution.json")->required();
  check->add_option("--network", check_network, "network JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  check->add_option("--tolerance", tolerance, "max relative violation accepted");
  check->add_option("--premise-threshold", premise, "flag pipes with nu*L/(c*m) above this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? kOk : kError;
  }

  try {
    if (*solve)
      return cmd_solve(solve_opts, variant, node_log);
    if (*compare)
      return cmd_compare(compare_opts, skip, name);
    return cmd_check(solution, check_network, tolerance, premise);
  } catch (const InfeasibleBoundsError &e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
}

} // namespace dhsplan
