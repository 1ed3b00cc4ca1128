#include "dhsplan/analysis.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <variant>

#include "dhsplan/errors.hpp"

namespace dhsplan {

namespace {

double value(std::span<const double> x, const ProblemInstance &inst, VarKind kind,
             const std::string &id, int hour) {
  return x[static_cast<std::size_t>(inst.vars.index({kind, id, hour}))];
}

void check_size(std::span<const double> x, const ProblemInstance &inst) {
  if (x.size() != inst.num_vars())
    throw DimensionMismatch("solution has " + std::to_string(x.size()) + " entries, instance " +
                            std::to_string(inst.num_vars()));
}

bool inside(double v, double lo, double hi, double tol) { return v >= lo - tol && v <= hi + tol; }

// Pipe outlet excess temperature implied by the solution.
std::optional<double> carried_tilde(std::span<const double> x, const ProblemInstance &inst,
                                    const NetworkModel &model, const Pipe &p, int hour) {
  if (auto col = inst.vars.find({VarKind::tau_tilde_pipe, p.id, hour}))
    return x[static_cast<std::size_t>(*col)];
  const double m = value(x, inst, VarKind::m_pipe, p.id, hour);
  if (m < kZeroFlow)
    return std::nullopt;
  return value(x, inst, VarKind::h_in_pipe, p.id, hour) / (model.specific_heat * m);
}

} // namespace

double taylor_gap(double x) { return std::expm1(-x) + x; }

RecoveredTemperatures recover_temperatures(std::span<const double> x,
                                           const ProblemInstance &instance,
                                           const NetworkModel &model, double window_tol) {
  check_size(x, instance);
  const double ta = model.ambient_temp;
  RecoveredTemperatures out;
  for (const auto &n : model.heat_nodes)
    for (int h : instance.hours) {
      NodeTemperature t{n.id, h, value(x, instance, VarKind::tau_tilde_node, n.id, h) + ta, true};
      // constant flow lets source temperatures float
      const bool fixed = n.tau_source && instance.variant != Variant::ConstantFlow;
      t.in_window = inside(t.tau, fixed ? *n.tau_source : n.tau_min,
                           fixed ? *n.tau_source : n.tau_max, window_tol);
      out.out_of_window += t.in_window ? 0 : 1;
      out.nodes.push_back(std::move(t));
    }
  for (const auto &p : model.pipes)
    for (int h : instance.hours) {
      PipeTemperature t{p.id, h, std::nullopt, true};
      if (auto tilde = carried_tilde(x, instance, model, p, h)) {
        t.tau = *tilde + ta;
        t.in_window = inside(*t.tau, p.tau_pipe_min, p.tau_pipe_max, window_tol);
      } else {
        ++out.zero_flow;
      }
      out.out_of_window += t.in_window ? 0 : 1;
      out.pipes.push_back(std::move(t));
    }
  return out;
}

PhysicsAudit exact_heat_loss_audit(std::span<const double> x, const ProblemInstance &instance,
                                   const NetworkModel &model, double premise_threshold) {
  check_size(x, instance);
  const double c = model.specific_heat;
  const double ta = model.ambient_temp;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  PhysicsAudit audit;
  audit.premise_threshold = premise_threshold;

  std::map<int, HourClosure> closure;
  for (int h : instance.hours) {
    HourClosure &hc = closure[h];
    hc.hour = h;
    for (const auto &n : model.heat_nodes)
      hc.load += n.heat_load.at(static_cast<std::size_t>(h - 1));
    for (const auto &unit : model.units) {
      if (const auto *hb = std::get_if<HeatingBoiler>(&unit))
        hc.production += value(x, instance, VarKind::h_hb, hb->id, h);
      else if (const auto *chp = std::get_if<ChpUnit>(&unit))
        hc.production += value(x, instance, VarKind::h_chp, chp->id, h);
    }
  }

  for (const auto &p : model.pipes)
    for (int h : instance.hours) {
      PipeAudit a;
      a.pipe = p.id;
      a.hour = h;
      a.m = value(x, instance, VarKind::m_pipe, p.id, h);
      const double up = value(x, instance, VarKind::tau_tilde_node, p.from, h);
      a.tau_upstream = up + ta;
      const double nu_l = p.loss_factor();
      HourClosure &hc = closure[h];
      hc.linear_losses += nu_l * up;
      if (auto carried = carried_tilde(x, instance, model, p, h))
        a.carried_outlet = *carried + ta;
      if (a.m < kZeroFlow) {
        a.loss_ratio = nu_l > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        a.exact_outlet = nu_l > 0.0 ? ta : a.tau_upstream;
        a.taylor_outlet = nan;
        a.discrepancy_abs = nan;
        a.discrepancy_rel = nan;
      } else {
        a.loss_ratio = nu_l / (c * a.m);
        const double exact_tilde = up * std::exp(-a.loss_ratio);
        const double taylor_tilde = up * (1.0 - a.loss_ratio);
        a.exact_outlet = exact_tilde + ta;
        a.taylor_outlet = taylor_tilde + ta;
        a.discrepancy_abs = exact_tilde - taylor_tilde;
        a.discrepancy_rel = up != 0.0 ? a.discrepancy_abs / up : 0.0;
        hc.exact_losses += -c * a.m * up * std::expm1(-a.loss_ratio);
        audit.max_discrepancy_abs = std::max(audit.max_discrepancy_abs, std::abs(a.discrepancy_abs));
      }
      a.premise_violated = a.loss_ratio > premise_threshold;
      audit.premise_flags += a.premise_violated ? 1 : 0;
      audit.max_loss_ratio = std::max(audit.max_loss_ratio, a.loss_ratio);
      audit.pipes.push_back(std::move(a));
    }

  for (auto &[h, hc] : closure) {
    hc.closure_linear = hc.production - hc.load - hc.linear_losses;
    hc.closure_exact = hc.production - hc.load - hc.exact_losses;
    audit.hours.push_back(hc);
  }
  return audit;
}

std::vector<TermViolation> outlet_heat_violations(std::span<const double> x,
                                                  const ProblemInstance &instance,
                                                  const NetworkModel &model) {
  check_size(x, instance);
  std::vector<TermViolation> out;
  for (const auto &p : model.pipes)
    for (int h : instance.hours) {
      const double H = value(x, instance, VarKind::h_out_pipe, p.id, h);
      const double m = value(x, instance, VarKind::m_pipe, p.id, h);
      const double tau = value(x, instance, VarKind::tau_tilde_node, p.from, h);
      out.push_back({p.id, h, std::abs(H - model.specific_heat * m * tau) /
                                  std::max(std::abs(H), 1e-6)});
    }
  return out;
}

std::vector<double> hourly_objectives(std::span<const double> x, const ProblemInstance &instance) {
  check_size(x, instance);
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < instance.hours.size(); ++i)
    slot[instance.hours[i]] = i;
  std::vector<double> out(instance.hours.size(),
                          instance.objective.c0 / static_cast<double>(instance.hours.size()));
  auto hour_of = [&](Eigen::Index j) { return slot.at(instance.vars.key(static_cast<int>(j)).hour); };
  for (Eigen::Index j = 0; j < instance.objective.q.size(); ++j)
    out[hour_of(j)] += instance.objective.q[j] * x[static_cast<std::size_t>(j)];
  const auto &Q = instance.objective.Q;
  for (int k = 0; k < Q.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Q, k); it; ++it)
      out[hour_of(it.row())] += 0.5 * it.value() * x[static_cast<std::size_t>(it.row())] *
                                x[static_cast<std::size_t>(it.col())];
  return out;
}

} // namespace dhsplan
