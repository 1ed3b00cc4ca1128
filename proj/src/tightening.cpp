#include "dhsplan/tightening.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <set>
#include <thread>
#include <tuple>

#include "dhsplan/errors.hpp"
#include "dhsplan/global_bilinear.hpp"

namespace dhsplan {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> parse_numbers(std::string_view text) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string_view tok = text.substr(0, comma);
    while (!tok.empty() && tok.front() == ' ')
      tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ')
      tok.remove_suffix(1);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc{} || p != tok.data() + tok.size())
      throw ValidationError("eps", "bad number '" + std::string(tok) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos)
      break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

void check_schedule(std::span<const double> eps) {
  std::vector<Issue> issues;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0 && eps[i] < 1.0))
      issues.push_back({"eps", "entry " + std::to_string(i + 1) + " outside (0,1)"});
    if (i > 0 && eps[i] > eps[i - 1])
      issues.push_back({"eps", "schedule increases at entry " + std::to_string(i + 1)});
  }
  if (!issues.empty())
    throw ValidationError(std::move(issues));
}

std::vector<TermBox> boxes_of(const ProblemInstance &inst, std::span<const double> lo,
                              std::span<const double> hi) {
  std::vector<TermBox> out;
  out.reserve(inst.bilinear_terms.size());
  for (const auto &t : inst.bilinear_terms) {
    const auto m = static_cast<std::size_t>(t.factor_m);
    const auto tau = static_cast<std::size_t>(t.factor_tau);
    out.push_back({lo[m], hi[m], lo[tau], hi[tau]});
  }
  return out;
}

struct HourRun {
  HourTightening record;
  ProblemInstance instance;
  std::vector<double> x; // last feasible iterate
};

HourRun run_hour(const NetworkModel &model, int hour, const TighteningConfig &cfg) {
  HourRun run;
  run.record.hour = hour;
  const std::vector<int> hs{hour};
  run.instance = build(model, Variant::Reformulated, hs);
  const ProblemInstance &inst = run.instance;

  // Tightened columns: flows and non-source node temperatures that appear as factors.
  std::set<int> cols;
  for (const auto &t : inst.bilinear_terms) {
    cols.insert(t.factor_m);
    const VarKey &k = inst.vars.key(t.factor_tau);
    if (k.kind == VarKind::tau_tilde_node && model.node(k.id).kind != NodeKind::source)
      cols.insert(t.factor_tau);
  }
  const std::vector<double> lo_ini = inst.lo, hi_ini = inst.hi;
  std::vector<double> lo = lo_ini, hi = hi_ini;

  QpConfig qc = cfg.qp;
  for (int n = 1; n <= cfg.max_iters; ++n) {
    const auto t0 = Clock::now();
    const ProblemInstance relax = apply_mccormick(inst, lo, hi);
    const QpSolution s = solve_qp(to_qp(relax), qc);
    qc.check_psd = false;
    if (s.status != QpStatus::Optimal) {
      if (n == 1)
        throw InfeasibleBoundsError("McCormick relaxation of hour " + std::to_string(hour) +
                                    " not solved: " + std::string(to_string(s.status)));
      run.record.status = TighteningStatus::RelaxationInfeasible;
      run.record.infeasible_boxes = boxes_of(inst, lo, hi);
      return run;
    }
    run.x.assign(s.x.data(), s.x.data() + s.x.size());
    const ViolationReport v = violation_report(run.x, inst);
    run.record.iterations.push_back(
        {n, s.objective, v.max, v.avg, boxes_of(inst, lo, hi), seconds_since(t0)});
    if (v.max <= cfg.delta) {
      run.record.status = TighteningStatus::ConvergedByDelta;
      return run;
    }
    if (n == cfg.max_iters)
      break;
    const double e = cfg.eps[static_cast<std::size_t>(n - 1)];
    for (int j : cols) {
      const auto u = static_cast<std::size_t>(j);
      std::tie(lo[u], hi[u]) = tightened_box(run.x[u], e, lo_ini[u], hi_ini[u]);
    }
  }
  run.record.status = TighteningStatus::BudgetExhausted;
  return run;
}

} // namespace

std::pair<double, double> tightened_box(double v, double eps, double lo_ini, double hi_ini) {
  const double a = (1.0 - eps) * v, b = (1.0 + eps) * v;
  return {std::max(std::min(a, b), lo_ini), std::min(std::max(a, b), hi_ini)};
}

std::vector<double> geometric_schedule(double a, double r, int count) {
  std::vector<double> out;
  double v = a;
  for (int i = 0; i < count; ++i, v *= r)
    out.push_back(v);
  return out;
}

std::vector<double> parse_eps_schedule(std::string_view text, int count) {
  std::vector<double> out;
  if (text.starts_with("geom:")) {
    const auto v = parse_numbers(text.substr(5));
    if (v.size() != 2)
      throw ValidationError("eps", "geom needs a,r");
    if (!(v[1] > 0.0 && v[1] <= 1.0))
      throw ValidationError("eps", "geom ratio outside (0,1]");
    out = geometric_schedule(v[0], v[1], count);
  } else if (text.starts_with("list:")) {
    out = parse_numbers(text.substr(5));
  } else {
    throw ValidationError("eps", "expected geom:a,r or list:v1,v2,...");
  }
  check_schedule(out);
  return out;
}

void validate(const TighteningConfig &config) {
  std::vector<Issue> issues;
  if (!(config.delta > 0.0))
    issues.push_back({"delta", "must be positive"});
  if (config.max_iters < 1)
    issues.push_back({"max_iters", "must be at least 1"});
  if (static_cast<int>(config.eps.size()) < config.max_iters - 1)
    issues.push_back({"eps", "schedule shorter than max_iters - 1"});
  if (!issues.empty())
    throw ValidationError(std::move(issues));
  check_schedule(config.eps);
}

std::string_view to_string(TighteningStatus s) {
  switch (s) {
  case TighteningStatus::ConvergedByDelta:
    return "ConvergedByDelta";
  case TighteningStatus::BudgetExhausted:
    return "BudgetExhausted";
  case TighteningStatus::RelaxationInfeasible:
    return "RelaxationInfeasible";
  }
  return "?";
}

ViolationReport violation_report(std::span<const double> x, const ProblemInstance &instance,
                                 double floor) {
  if (x.size() != instance.num_vars())
    throw DimensionMismatch("violation_report: x has " + std::to_string(x.size()) +
                            " entries, instance " + std::to_string(instance.num_vars()));
  ViolationReport r;
  for (const auto &t : instance.bilinear_terms) {
    const double v = relative_violation(t, x, floor);
    r.per_term.push_back(v);
    r.max = std::max(r.max, v);
    r.avg += v;
  }
  if (!r.per_term.empty())
    r.avg /= static_cast<double>(r.per_term.size());
  return r;
}

TighteningResult tighten(const NetworkModel &model, std::span<const int> hours,
                         const TighteningConfig &config) {
  validate(config);
  TighteningResult out;
  out.instance = build(model, Variant::Reformulated, hours);

  std::vector<HourRun> runs(hours.size());
  std::vector<std::exception_ptr> errors(hours.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < hours.size();) {
      try {
        runs[k] = run_hour(model, hours[k], config);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(hours.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }
  for (const auto &e : errors)
    if (e)
      std::rethrow_exception(e);

  out.status = TighteningStatus::ConvergedByDelta;
  out.final_x.assign(out.instance.num_vars(), 0.0);
  std::size_t longest = 0;
  for (const auto &r : runs) {
    if (r.record.status == TighteningStatus::RelaxationInfeasible)
      out.status = TighteningStatus::RelaxationInfeasible;
    else if (r.record.status == TighteningStatus::BudgetExhausted &&
             out.status == TighteningStatus::ConvergedByDelta)
      out.status = TighteningStatus::BudgetExhausted;
    longest = std::max(longest, r.record.iterations.size());
    for (std::size_t j = 0; j < r.x.size(); ++j)
      out.final_x[static_cast<std::size_t>(out.instance.vars.index(r.instance.vars.key(static_cast<int>(j))))] =
          r.x[j];
  }
  out.final_objective = objective_value(out.instance, out.final_x);

  // Aggregate rows: each hour contributes its iterate min(n, last).
  for (std::size_t i = 0; i < longest; ++i) {
    TighteningIteration agg;
    agg.n = static_cast<int>(i + 1);
    std::size_t terms = 0;
    for (const auto &r : runs) {
      const auto &its = r.record.iterations;
      const auto &it = its[std::min(i, its.size() - 1)];
      agg.objective += it.objective;
      agg.max_violation = std::max(agg.max_violation, it.max_violation);
      agg.avg_violation += it.avg_violation * static_cast<double>(r.instance.bilinear_terms.size());
      terms += r.instance.bilinear_terms.size();
      agg.boxes.insert(agg.boxes.end(), it.boxes.begin(), it.boxes.end());
      if (i < its.size())
        agg.seconds += it.seconds;
    }
    if (terms > 0)
      agg.avg_violation /= static_cast<double>(terms);
    out.iterations.push_back(std::move(agg));
  }
  for (auto &r : runs)
    out.hours.push_back(std::move(r.record));

  if (config.repair) {
    try {
      out.repaired = repair_with_fallback(out.instance, out.final_x, config.qp);
    } catch (const Error &e) {
      out.repair_error = e.what();
    }
  }
  return out;
}

RepairResult repair_fixed_flow(const ProblemInstance &reformulated, std::span<const double> x,
                               const QpConfig &qp) {
  const ProblemInstance fixed = linearize_at_flows(reformulated, x);
  const QpSolution s = solve_qp(to_qp(fixed), qp);
  if (s.status != QpStatus::Optimal)
    throw FixedFlowInfeasible("fixed-flow re-solve: " + std::string(to_string(s.status)));
  RepairResult r;
  r.x.assign(s.x.data(), s.x.data() + s.x.size());
  r.objective = objective_value(reformulated, r.x);
  r.method = "fixed-flow";
  return r;
}

RepairResult repair_fixed_flow(const NetworkModel &model, std::span<const int> hours,
                               std::span<const double> x, const QpConfig &qp) {
  return repair_fixed_flow(build(model, Variant::Reformulated, hours), x, qp);
}

RepairResult repair_with_fallback(const ProblemInstance &reformulated, std::span<const double> x,
                                  const QpConfig &qp) {
  try {
    return repair_fixed_flow(reformulated, x, qp);
  } catch (const FixedFlowInfeasible &) {
  }
  LocalConfig lc;
  lc.qp = qp;
  auto y = local_solve(reformulated, x, lc);
  if (!y)
    throw FixedFlowInfeasible("fixed flows infeasible and local solve found no feasible point");
  RepairResult r;
  r.x = std::move(*y);
  r.objective = objective_value(reformulated, r.x);
  r.method = "local";
  return r;
}

} // namespace dhsplan
