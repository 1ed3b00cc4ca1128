#include "dhsplan/compare.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <thread>

#include "dhsplan/errors.hpp"

namespace dhsplan {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

json qp_json(const QpConfig &qp) {
  return {{"tolerance", qp.tolerance},
          {"max_iterations", qp.max_iterations},
          {"regularization", qp.regularization},
          {"infeasibility_tolerance", qp.infeasibility_tolerance}};
}

void fill_violations(VariantRow &row, const NetworkModel &model) {
  const auto v = outlet_heat_violations(row.x, row.instance, model);
  if (v.empty())
    return;
  double worst = 0.0, sum = 0.0;
  for (const auto &t : v) {
    worst = std::max(worst, t.violation);
    sum += t.violation;
  }
  row.max_violation_pct = 100.0 * worst;
  row.avg_violation_pct = 100.0 * sum / static_cast<double>(v.size());
}

void accept_point(VariantRow &row, std::vector<double> x, const NetworkModel &model) {
  row.x = std::move(x);
  row.objective = objective_value(row.instance, row.x);
  row.hour_objectives = hourly_objectives(row.x, row.instance);
  fill_violations(row, model);
}

void run_global(VariantRow &row, const NetworkModel &model, std::span<const int> hours,
                Variant v, const CompareConfig &cfg) {
  row.instance = build(model, v, hours);
  try {
    const GlobalSolution g = solve_global(row.instance, cfg.global);
    switch (g.status) {
    case GlobalStatus::Optimal:
      row.status = RowStatus::Ok;
      break;
    case GlobalStatus::NodeLimit:
    case GlobalStatus::TimeLimit:
      row.status = RowStatus::Limit;
      row.note = std::string(to_string(g.status)) + ", gap " + format_number(g.gap);
      break;
    case GlobalStatus::Infeasible:
      row.status = RowStatus::Failed;
      row.note = "infeasible";
      return;
    }
    accept_point(row, g.x, model);
  } catch (const NoFeasibleIncumbent &) {
    row.status = RowStatus::Failed;
    row.note = "no solution found within limits";
  }
}

void run_convex(VariantRow &row, const NetworkModel &model, std::span<const int> hours, Variant v,
                const CompareConfig &cfg) {
  row.instance = build(model, v, hours);
  const QpSolution s = solve_qp(to_qp(row.instance), cfg.qp);
  if (s.status != QpStatus::Optimal) {
    row.status = RowStatus::Failed;
    row.note = std::string(to_string(s.status));
    return;
  }
  row.status = RowStatus::Ok;
  accept_point(row, std::vector<double>(s.x.data(), s.x.data() + s.x.size()), model);
}

} // namespace

std::string_view version() { return DHSPLAN_VERSION; }

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4)
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

nlohmann::json config_json(const CompareConfig &c) {
  return {{"global",
           {{"gap_tol", c.global.gap_tol},
            {"feas_tol", c.global.feas_tol},
            {"node_limit", c.global.node_limit},
            {"time_limit", c.global.time_limit},
            {"qp", qp_json(c.global.qp)}}},
          {"tightening",
           {{"delta", c.tightening.delta},
            {"max_iters", c.tightening.max_iters},
            {"eps", c.tightening.eps},
            {"repair", c.tightening.repair},
            {"qp", qp_json(c.tightening.qp)}}},
          {"qp", qp_json(c.qp)},
          {"skip_global", c.skip_global},
          {"premise_threshold", c.premise_threshold}};
}

std::string config_hash(const nlohmann::json &config, std::span<const int> hours,
                        const NetworkModel &model) {
  const json doc = {{"config", config},
                    {"hours", std::vector<int>(hours.begin(), hours.end())},
                    {"network", to_json(model)}};
  return hex64(fnv1a(doc.dump()));
}

std::string_view to_string(RowStatus s) {
  switch (s) {
  case RowStatus::Ok:
    return "ok";
  case RowStatus::Limit:
    return "limit";
  case RowStatus::Failed:
    return "failed";
  case RowStatus::Skipped:
    return "skipped";
  }
  return "?";
}

ComparisonReport compare_variants(const NetworkModel &model, std::span<const int> hours,
                                  const CompareConfig &config, std::string instance_name) {
  if (hours.empty())
    throw ValidationError("hours", "hour selection is empty");
  validate(config.tightening);

  ComparisonReport report;
  report.instance_name = std::move(instance_name);
  report.hours.assign(hours.begin(), hours.end());
  report.version = std::string(version());
  report.config_hash = config_hash(config_json(config), hours, model);
  report.rows.resize(6);
  const char *names[] = {"Base(Global)", "Reformulated(Global)", "RemoveBilinear",
                         "McCormick",    "TighteningMcCormick",  "ConstantFlow"};
  for (std::size_t i = 0; i < 6; ++i)
    report.rows[i].name = names[i];

  std::optional<TighteningResult> tightened;
  std::vector<std::pair<std::size_t, std::function<void()>>> jobs;
  auto &rows = report.rows;
  if (!config.skip_global) {
    jobs.emplace_back(0, [&] { run_global(rows[0], model, hours, Variant::Base, config); });
    jobs.emplace_back(1, [&] { run_global(rows[1], model, hours, Variant::Reformulated, config); });
  } else {
    rows[0].note = rows[1].note = "skipped";
  }
  jobs.emplace_back(2, [&] { run_convex(rows[2], model, hours, Variant::RemoveBilinear, config); });
  jobs.emplace_back(3, [&] { run_convex(rows[3], model, hours, Variant::McCormick, config); });
  jobs.emplace_back(4, [&] {
    VariantRow &row = rows[4];
    try {
      tightened = tighten(model, hours, config.tightening);
    } catch (const InfeasibleBoundsError &e) {
      row.instance = build(model, Variant::Reformulated, hours);
      row.status = RowStatus::Failed;
      row.note = e.what();
      return;
    }
    row.instance = tightened->instance;
    switch (tightened->status) {
    case TighteningStatus::ConvergedByDelta:
      row.status = RowStatus::Ok;
      break;
    case TighteningStatus::BudgetExhausted:
      row.status = RowStatus::Limit;
      row.note = "budget exhausted";
      break;
    case TighteningStatus::RelaxationInfeasible:
      row.status = RowStatus::Limit;
      row.note = "relaxation infeasible, last feasible iterate";
      break;
    }
    accept_point(row, tightened->final_x, model);
    if (!tightened->repair_error.empty())
      row.note += (row.note.empty() ? "" : "; ") + ("repair failed: " + tightened->repair_error);
  });
  jobs.emplace_back(5, [&] {
    try {
      run_convex(rows[5], model, hours, Variant::ConstantFlow, config);
    } catch (const MissingNominalFlow &e) {
      rows[5].status = RowStatus::Failed;
      rows[5].note = e.what();
    }
  });

  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < jobs.size();) {
      const auto t0 = Clock::now();
      try {
        jobs[k].second();
      } catch (...) {
        errors[k] = std::current_exception();
      }
      rows[jobs[k].first].seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    }
  };
  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(jobs.size())));
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

  report.tightening = std::move(tightened);
  const auto &ref = rows[0];
  for (auto &row : rows) {
    if (ref.objective && row.objective)
      row.gap_pct = 100.0 * std::abs(*row.objective - *ref.objective) /
                    std::max(std::abs(*ref.objective), 1e-12);
    else if (row.objective)
      row.note += (row.note.empty() ? "" : "; ") + std::string("gap unavailable");
  }
  for (const auto &row : rows)
    report.audits.push_back(row.x.empty() ? PhysicsAudit{}
                                          : exact_heat_loss_audit(row.x, row.instance, model,
                                                                  config.premise_threshold));
  return report;
}

} // namespace dhsplan
