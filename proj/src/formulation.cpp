#include "dhsplan/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dhsplan/errors.hpp"

namespace dhsplan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr std::pair<VarKind, std::string_view> kKindNames[] = {
    {VarKind::m_pipe, "m_pipe"},       {VarKind::tau_tilde_node, "tau_tilde_node"},
    {VarKind::tau_tilde_pipe, "tau_tilde_pipe"}, {VarKind::h_in_pipe, "h_in_pipe"},
    {VarKind::h_out_pipe, "h_out_pipe"}, {VarKind::theta_bus, "theta_bus"},
    {VarKind::p_chp, "p_chp"},         {VarKind::h_chp, "h_chp"},
    {VarKind::p_tu, "p_tu"},           {VarKind::h_hb, "h_hb"},
};
} // namespace

std::string_view to_string(Variant v) {
  switch (v) {
  case Variant::Base:
    return "base";
  case Variant::Reformulated:
    return "reformulated";
  case Variant::RemoveBilinear:
    return "remove-bilinear";
  case Variant::McCormick:
    return "mccormick";
  case Variant::ConstantFlow:
    return "constant-flow";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Base, Variant::Reformulated, Variant::RemoveBilinear,
                    Variant::McCormick, Variant::ConstantFlow}) {
    if (to_string(v) == name)
      return v;
  }
  throw UnsupportedVariant("unsupported model variant '" + std::string(name) + "'");
}

std::string_view to_string(VarKind kind) {
  for (const auto &[k, name] : kKindNames)
    if (k == kind)
      return name;
  return "unknown";
}

std::string to_string(const VarKey &key) {
  return std::string(to_string(key.kind)) + "[" + key.id + "," + std::to_string(key.hour) + "]";
}

std::optional<VarKey> parse_var_key(std::string_view text) {
  const auto open = text.find('[');
  const auto comma = text.rfind(',');
  if (open == std::string_view::npos || comma == std::string_view::npos || comma < open ||
      text.empty() || text.back() != ']')
    return std::nullopt;
  const std::string_view kind = text.substr(0, open);
  VarKey key;
  bool known = false;
  for (const auto &[k, name] : kKindNames) {
    if (name == kind) {
      key.kind = k;
      known = true;
    }
  }
  if (!known)
    return std::nullopt;
  key.id = std::string(text.substr(open + 1, comma - open - 1));
  try {
    std::size_t used = 0;
    const std::string hour(text.substr(comma + 1, text.size() - comma - 2));
    key.hour = std::stoi(hour, &used);
    if (used != hour.size())
      return std::nullopt;
  } catch (const std::exception &) {
    return std::nullopt;
  }
  return key;
}

VarMap::VarMap(std::vector<VarKey> keys) : keys_(std::move(keys)) {
  std::sort(keys_.begin(), keys_.end());
  keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
  for (std::size_t i = 0; i < keys_.size(); ++i)
    index_.emplace(keys_[i], static_cast<int>(i));
}

int VarMap::index(const VarKey &key) const {
  auto it = index_.find(key);
  if (it == index_.end())
    throw DimensionMismatch("no column for variable " + to_string(key));
  return it->second;
}

std::optional<int> VarMap::find(const VarKey &key) const {
  auto it = index_.find(key);
  if (it == index_.end())
    return std::nullopt;
  return it->second;
}

std::string to_string(const RowLabel &label) {
  return label.tag + "[" + label.entity + "," + std::to_string(label.hour) + "]";
}

std::vector<int> all_hours(const NetworkModel &model) {
  std::vector<int> hours(static_cast<std::size_t>(model.horizon_hours));
  for (int t = 0; t < model.horizon_hours; ++t)
    hours[static_cast<std::size_t>(t)] = t + 1;
  return hours;
}

VarMap make_var_map(const NetworkModel &model, Variant variant, std::span<const int> hours) {
  std::vector<VarKey> keys;
  for (int t : hours) {
    for (const auto &p : model.pipes) {
      keys.push_back({VarKind::m_pipe, p.id, t});
      keys.push_back({VarKind::h_in_pipe, p.id, t});
      keys.push_back({VarKind::h_out_pipe, p.id, t});
      if (variant == Variant::Base)
        keys.push_back({VarKind::tau_tilde_pipe, p.id, t});
    }
    for (const auto &n : model.heat_nodes)
      keys.push_back({VarKind::tau_tilde_node, n.id, t});
    for (const auto &b : model.buses)
      keys.push_back({VarKind::theta_bus, b.id, t});
    for (const auto &unit : model.units) {
      std::visit(
          [&](const auto &u) {
            using T = std::decay_t<decltype(u)>;
            if constexpr (std::is_same_v<T, HeatingBoiler>) {
              keys.push_back({VarKind::h_hb, u.id, t});
            } else if constexpr (std::is_same_v<T, ChpUnit>) {
              keys.push_back({VarKind::p_chp, u.id, t});
              keys.push_back({VarKind::h_chp, u.id, t});
            } else {
              keys.push_back({VarKind::p_tu, u.id, t});
            }
          },
          unit);
    }
  }
  return VarMap(std::move(keys));
}

// ---------------------------------------------------------------------------
// Heat network blocks

namespace {

struct RowBuilder {
  LinearRow row;

  RowBuilder(std::string tag, std::string entity, int hour) {
    row.label = {std::move(tag), std::move(entity), hour};
  }
  RowBuilder &add(int col, double coeff) {
    if (coeff != 0.0)
      row.coeffs.emplace_back(col, coeff);
    return *this;
  }
  LinearRow done(double rhs) {
    row.rhs = rhs;
    return std::move(row);
  }
};

enum class HeatMode { Reformulated, Base, ConstantFlow };

// Heat injected at node i by its units.
void add_unit_heat(const NetworkModel &model, const VarMap &vars, const std::string &node_id,
                   int hour, RowBuilder &row) {
  for (const auto &unit : model.units) {
    if (const auto *hb = std::get_if<HeatingBoiler>(&unit); hb && hb->node_id == node_id)
      row.add(vars.index({VarKind::h_hb, hb->id, hour}), 1.0);
    if (const auto *chp = std::get_if<ChpUnit>(&unit); chp && chp->node_id == node_id)
      row.add(vars.index({VarKind::h_chp, chp->id, hour}), 1.0);
  }
}

ConstraintBlock build_heat_block(const NetworkModel &model, const VarMap &vars, int hour,
                                 HeatMode mode) {
  ConstraintBlock block;
  const Adjacency adj = derive_adjacency(model);
  const double c = model.specific_heat;
  const double ta = model.ambient_temp;
  const auto t_idx = static_cast<std::size_t>(hour - 1);
  const std::string balance_tag = mode == HeatMode::Base ? "1a" : "11a";
  const std::string loss_tag = mode == HeatMode::Base ? "1c" : "11b";

  auto col = [&](VarKind kind, const std::string &id) { return vars.index({kind, id, hour}); };

  for (const auto &n : model.heat_nodes) {
    const double load = n.heat_load.at(t_idx);
    RowBuilder bal(balance_tag, n.id, hour);
    add_unit_heat(model, vars, n.id, hour, bal);
    for (const auto &pid : adj.in.at(n.id))
      bal.add(col(VarKind::h_in_pipe, pid), 1.0);
    for (const auto &pid : adj.out.at(n.id))
      bal.add(col(VarKind::h_out_pipe, pid), -1.0);
    if (mode == HeatMode::ConstantFlow && n.kind == NodeKind::load) {
      // Fixed flows cannot match every load exactly; surplus heat leaves
      // with the return water.
      LinearRow r = bal.done(load);
      for (auto &[j, a] : r.coeffs)
        a = -a;
      r.rhs = -load;
      block.ineq_rows.push_back(std::move(r));
    } else {
      block.eq_rows.push_back(bal.done(load));
    }

    if (n.kind == NodeKind::junction) {
      RowBuilder mass("1b", n.id, hour);
      for (const auto &pid : adj.in.at(n.id))
        mass.add(col(VarKind::m_pipe, pid), 1.0);
      for (const auto &pid : adj.out.at(n.id))
        mass.add(col(VarKind::m_pipe, pid), -1.0);
      if (!mass.row.coeffs.empty())
        block.eq_rows.push_back(mass.done(0.0));
    } else if (n.kind == NodeKind::load && !adj.out.at(n.id).empty()) {
      // Load nodes discharge part of their inflow through the consumer.
      RowBuilder mass("1b", n.id, hour);
      for (const auto &pid : adj.out.at(n.id))
        mass.add(col(VarKind::m_pipe, pid), 1.0);
      for (const auto &pid : adj.in.at(n.id))
        mass.add(col(VarKind::m_pipe, pid), -1.0);
      block.ineq_rows.push_back(mass.done(0.0));
    }

    const int tau = col(VarKind::tau_tilde_node, n.id);
    if (n.kind == NodeKind::source && mode != HeatMode::ConstantFlow) {
      const double fixed = *n.tau_source - ta;
      block.eq_rows.push_back(RowBuilder("1f", n.id, hour).add(tau, 1.0).done(fixed));
      block.bounds.emplace_back(tau, fixed, fixed);
    } else {
      block.bounds.emplace_back(tau, n.tau_min - ta, n.tau_max - ta);
    }
  }

  for (const auto &p : model.pipes) {
    const HeatNode &up = model.node(p.from);
    const int m = col(VarKind::m_pipe, p.id);
    const int h_in = col(VarKind::h_in_pipe, p.id);
    const int h_out = col(VarKind::h_out_pipe, p.id);
    const int tau_up = col(VarKind::tau_tilde_node, p.from);

    block.eq_rows.push_back(RowBuilder(loss_tag, p.id, hour)
                                .add(h_in, 1.0)
                                .add(h_out, -1.0)
                                .add(tau_up, p.loss_factor())
                                .done(0.0));

    if (mode == HeatMode::ConstantFlow) {
      if (std::isnan(p.m_nominal))
        throw MissingNominalFlow("pipe " + p.id + ": m_nominal is required for constant flow");
      block.bounds.emplace_back(m, p.m_nominal, p.m_nominal);
    } else {
      block.bounds.emplace_back(m, p.m_min, p.m_max);
    }

    if (mode == HeatMode::Base) {
      const int tau_pipe = col(VarKind::tau_tilde_pipe, p.id);
      block.bounds.emplace_back(tau_pipe, p.tau_pipe_min - ta, p.tau_pipe_max - ta);
      block.bilinear_terms.push_back({h_in, m, tau_pipe, c, {"4", p.id, hour}});
      block.bilinear_terms.push_back({h_out, m, tau_up, c, {"5", p.id, hour}});
      continue;
    }

    block.ineq_rows.push_back(RowBuilder("11c", p.id, hour)
                                  .add(m, c * (p.tau_pipe_min - ta))
                                  .add(h_in, -1.0)
                                  .done(0.0));
    block.ineq_rows.push_back(RowBuilder("11c", p.id, hour)
                                  .add(h_in, 1.0)
                                  .add(m, -c * (p.tau_pipe_max - ta))
                                  .done(0.0));
    block.ineq_rows.push_back(RowBuilder("11d", p.id, hour)
                                  .add(m, c * (up.tau_min - ta))
                                  .add(h_out, -1.0)
                                  .done(0.0));
    block.ineq_rows.push_back(RowBuilder("11d", p.id, hour)
                                  .add(h_out, 1.0)
                                  .add(m, -c * (up.tau_max - ta))
                                  .done(0.0));

    if (mode == HeatMode::ConstantFlow) {
      block.eq_rows.push_back(RowBuilder("11f", p.id, hour)
                                  .add(h_out, 1.0)
                                  .add(tau_up, -c * p.m_nominal)
                                  .done(0.0));
    } else {
      block.bilinear_terms.push_back({h_out, m, tau_up, c, {"11f", p.id, hour}});
    }
  }
  return block;
}

void append(ConstraintBlock &into, ConstraintBlock &&from) {
  auto move_all = [](auto &dst, auto &src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
  };
  move_all(into.eq_rows, from.eq_rows);
  move_all(into.ineq_rows, from.ineq_rows);
  move_all(into.bilinear_terms, from.bilinear_terms);
  move_all(into.bounds, from.bounds);
}

} // namespace

ConstraintBlock build_dhs_reformulated(const NetworkModel &model, const VarMap &vars, int hour) {
  return build_heat_block(model, vars, hour, HeatMode::Reformulated);
}

ConstraintBlock build_dhs_base(const NetworkModel &model, const VarMap &vars, int hour) {
  return build_heat_block(model, vars, hour, HeatMode::Base);
}

ConstraintBlock build_constant_flow(const NetworkModel &model, const VarMap &vars, int hour) {
  return build_heat_block(model, vars, hour, HeatMode::ConstantFlow);
}

ConstraintBlock build_power_network(const NetworkModel &model, const VarMap &vars, int hour) {
  ConstraintBlock block;
  const double base = model.base_power;
  const auto t_idx = static_cast<std::size_t>(hour - 1);
  auto theta = [&](const std::string &bus) { return vars.index({VarKind::theta_bus, bus, hour}); };

  std::string reference;
  for (const auto &b : model.buses)
    if (reference.empty() || b.id < reference)
      reference = b.id;

  for (const auto &b : model.buses) {
    RowBuilder bal("12a", b.id, hour);
    for (const auto &unit : model.units) {
      if (const auto *chp = std::get_if<ChpUnit>(&unit); chp && chp->bus_id == b.id)
        bal.add(vars.index({VarKind::p_chp, chp->id, hour}), 1.0 / base);
      if (const auto *tu = std::get_if<ThermalUnit>(&unit); tu && tu->bus_id == b.id)
        bal.add(vars.index({VarKind::p_tu, tu->id, hour}), 1.0 / base);
    }
    // Net angle-driven outflow, accumulated per column so parallel lines merge.
    std::map<int, double> flow;
    for (const auto &l : model.lines) {
      const double susceptance = 1.0 / l.reactance;
      if (l.from == b.id) {
        flow[theta(l.from)] -= susceptance;
        flow[theta(l.to)] += susceptance;
      } else if (l.to == b.id) {
        flow[theta(l.from)] += susceptance;
        flow[theta(l.to)] -= susceptance;
      }
    }
    for (const auto &[j, a] : flow)
      bal.add(j, a);
    block.eq_rows.push_back(bal.done(b.p_load.at(t_idx) / base));

    const int th = theta(b.id);
    if (b.id == reference)
      block.bounds.emplace_back(th, 0.0, 0.0);
    else
      block.bounds.emplace_back(th, -kInf, kInf);
  }

  for (const auto &l : model.lines) {
    const double s = 1.0 / l.reactance;
    const double limit = l.p_max / base;
    block.ineq_rows.push_back(
        RowBuilder("12b", l.id, hour).add(theta(l.from), s).add(theta(l.to), -s).done(limit));
    block.ineq_rows.push_back(
        RowBuilder("12b", l.id, hour).add(theta(l.from), -s).add(theta(l.to), s).done(limit));
  }
  return block;
}

ConstraintBlock build_units(const NetworkModel &model, const VarMap &vars, int hour) {
  ConstraintBlock block;
  for (const auto &unit : model.units) {
    std::visit(
        [&](const auto &u) {
          using T = std::decay_t<decltype(u)>;
          if constexpr (std::is_same_v<T, HeatingBoiler>) {
            block.bounds.emplace_back(vars.index({VarKind::h_hb, u.id, hour}), u.h_min, u.h_max);
          } else if constexpr (std::is_same_v<T, ChpUnit>) {
            const int p = vars.index({VarKind::p_chp, u.id, hour});
            const int h = vars.index({VarKind::h_chp, u.id, hour});
            for (const auto &r : u.region) {
              block.ineq_rows.push_back(
                  RowBuilder("14b", u.id, hour).add(p, r.a).add(h, r.b).done(r.d));
            }
            // The polygon is bounded; its extreme points give implied boxes.
            double p_hi = 0.0;
            double h_hi = 0.0;
            for (const auto &v : validate_chp_region(u).vertices) {
              p_hi = std::max(p_hi, v[0]);
              h_hi = std::max(h_hi, v[1]);
            }
            block.bounds.emplace_back(p, 0.0, p_hi);
            block.bounds.emplace_back(h, 0.0, h_hi);
          } else {
            block.bounds.emplace_back(vars.index({VarKind::p_tu, u.id, hour}), u.p_min, u.p_max);
          }
        },
        unit);
  }
  return block;
}

namespace {

QuadraticObjective build_objective(const NetworkModel &model, const VarMap &vars,
                                   std::span<const int> hours) {
  const auto n = static_cast<Eigen::Index>(vars.size());
  QuadraticObjective obj;
  obj.q = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trips;
  for (int t : hours) {
    for (const auto &unit : model.units) {
      std::visit(
          [&](const auto &u) {
            using T = std::decay_t<decltype(u)>;
            if constexpr (std::is_same_v<T, HeatingBoiler>) {
              obj.q[vars.index({VarKind::h_hb, u.id, t})] += u.cost_c;
            } else if constexpr (std::is_same_v<T, ChpUnit>) {
              const int p = vars.index({VarKind::p_chp, u.id, t});
              const int h = vars.index({VarKind::h_chp, u.id, t});
              obj.c0 += u.cost[0];
              obj.q[p] += u.cost[1];
              obj.q[h] += u.cost[3];
              trips.emplace_back(p, p, 2.0 * u.cost[2]);
              trips.emplace_back(h, h, 2.0 * u.cost[4]);
              trips.emplace_back(p, h, u.cost[5]);
              trips.emplace_back(h, p, u.cost[5]);
            } else {
              const int p = vars.index({VarKind::p_tu, u.id, t});
              obj.q[p] += u.cost_c1;
              trips.emplace_back(p, p, 2.0 * u.cost_c2);
            }
          },
          unit);
    }
  }
  obj.Q.resize(n, n);
  obj.Q.setFromTriplets(trips.begin(), trips.end());
  obj.Q.prune(0.0);
  return obj;
}

} // namespace

ProblemInstance build(const NetworkModel &model, Variant variant, std::span<const int> hours) {
  if (hours.empty())
    throw ValidationError("hours", "hour selection is empty");
  std::vector<int> sorted(hours.begin(), hours.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ValidationError("hours", "hour selection has duplicates");
  for (int t : sorted) {
    if (t < 1 || t > model.horizon_hours)
      throw ValidationError("hours", "hour " + std::to_string(t) + " outside 1.." +
                                         std::to_string(model.horizon_hours));
  }

  const Variant structural = variant == Variant::McCormick || variant == Variant::RemoveBilinear
                                 ? Variant::Reformulated
                                 : variant;

  ProblemInstance inst;
  inst.variant = structural;
  inst.hours = sorted;
  inst.vars = make_var_map(model, structural, sorted);
  const std::size_t n = inst.vars.size();
  inst.lo.assign(n, -kInf);
  inst.hi.assign(n, kInf);
  inst.objective = build_objective(model, inst.vars, sorted);

  ConstraintBlock all;
  for (int t : sorted) {
    switch (structural) {
    case Variant::Base:
      append(all, build_dhs_base(model, inst.vars, t));
      break;
    case Variant::ConstantFlow:
      append(all, build_constant_flow(model, inst.vars, t));
      break;
    default:
      append(all, build_dhs_reformulated(model, inst.vars, t));
      break;
    }
    append(all, build_power_network(model, inst.vars, t));
    append(all, build_units(model, inst.vars, t));
  }
  for (const auto &[j, lo, hi] : all.bounds) {
    inst.lo[static_cast<std::size_t>(j)] = std::max(inst.lo[static_cast<std::size_t>(j)], lo);
    inst.hi[static_cast<std::size_t>(j)] = std::min(inst.hi[static_cast<std::size_t>(j)], hi);
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (inst.lo[j] > inst.hi[j])
      throw InfeasibleBoundsError("empty bound interval for " + inst.vars.name(static_cast<int>(j)));
  }
  inst.eq_rows = std::move(all.eq_rows);
  inst.ineq_rows = std::move(all.ineq_rows);
  inst.bilinear_terms = std::move(all.bilinear_terms);

  if (variant == Variant::RemoveBilinear) {
    inst.bilinear_terms.clear();
    inst.variant = Variant::RemoveBilinear;
  } else if (variant == Variant::McCormick) {
    const auto boxes = initial_boxes(inst);
    return apply_mccormick(inst, boxes);
  }
  return inst;
}

ProblemInstance linearize_at_flows(const ProblemInstance &instance, std::span<const double> x) {
  if (x.size() != instance.num_vars())
    throw DimensionMismatch("point has " + std::to_string(x.size()) + " entries, instance has " +
                            std::to_string(instance.num_vars()) + " variables");
  ProblemInstance out = instance;
  out.variant = Variant::ConstantFlow;
  out.bilinear_terms.clear();
  for (const auto &t : instance.bilinear_terms) {
    const auto m = static_cast<std::size_t>(t.factor_m);
    const double value = std::clamp(x[m], instance.lo[m], instance.hi[m]);
    out.lo[m] = value;
    out.hi[m] = value;
  }
  for (const auto &t : instance.bilinear_terms) {
    const double m = out.lo[static_cast<std::size_t>(t.factor_m)];
    out.eq_rows.push_back(
        RowBuilder(t.label.tag, t.label.entity, t.label.hour)
            .add(t.product, 1.0)
            .add(t.factor_tau, -t.coeff * m)
            .done(0.0));
  }
  return out;
}

ProblemInstance linearize_at_temperatures(const ProblemInstance &instance,
                                          std::span<const double> x) {
  if (x.size() != instance.num_vars())
    throw DimensionMismatch("point has " + std::to_string(x.size()) + " entries, instance has " +
                            std::to_string(instance.num_vars()) + " variables");
  ProblemInstance out = instance;
  out.variant = Variant::ConstantFlow;
  out.bilinear_terms.clear();
  for (const auto &t : instance.bilinear_terms) {
    const auto tau = static_cast<std::size_t>(t.factor_tau);
    const double value = std::clamp(x[tau], instance.lo[tau], instance.hi[tau]);
    out.lo[tau] = value;
    out.hi[tau] = value;
  }
  for (const auto &t : instance.bilinear_terms) {
    const double tau = out.lo[static_cast<std::size_t>(t.factor_tau)];
    out.eq_rows.push_back(
        RowBuilder(t.label.tag, t.label.entity, t.label.hour)
            .add(t.product, 1.0)
            .add(t.factor_m, -t.coeff * tau)
            .done(0.0));
  }
  return out;
}

double relative_violation(const BilinearTerm &term, std::span<const double> x, double floor) {
  const double h = x[static_cast<std::size_t>(term.product)];
  const double prod = term.coeff * x[static_cast<std::size_t>(term.factor_m)] *
                      x[static_cast<std::size_t>(term.factor_tau)];
  return std::abs(h - prod) / std::max(floor, std::abs(h));
}

double objective_value(const ProblemInstance &instance, std::span<const double> x) {
  if (x.size() != instance.num_vars())
    throw DimensionMismatch("point has " + std::to_string(x.size()) + " entries, instance has " +
                            std::to_string(instance.num_vars()) + " variables");
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return instance.objective.c0 + instance.objective.q.dot(v) +
         0.5 * v.dot(instance.objective.Q * v);
}

std::map<std::string, int> row_tag_counts(const ProblemInstance &instance) {
  std::map<std::string, int> counts;
  for (const auto &r : instance.eq_rows)
    ++counts[r.label.tag];
  for (const auto &r : instance.ineq_rows)
    ++counts[r.label.tag];
  return counts;
}

} // namespace dhsplan
