#include "dhsplan/global_bilinear.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <thread>

#include "dhsplan/errors.hpp"

namespace dhsplan {

std::string_view to_string(GlobalStatus s) {
  switch (s) {
  case GlobalStatus::Optimal:
    return "optimal";
  case GlobalStatus::NodeLimit:
    return "node_limit";
  case GlobalStatus::TimeLimit:
    return "time_limit";
  case GlobalStatus::Infeasible:
    return "infeasible";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using Clock = std::chrono::steady_clock;

// c*[a,b]*[c,d]
std::pair<double, double> interval_product(double c, double m_lo, double m_hi, double t_lo,
                                           double t_hi) {
  const double v[4] = {c * m_lo * t_lo, c * m_lo * t_hi, c * m_hi * t_lo, c * m_hi * t_hi};
  return {*std::min_element(v, v + 4), *std::max_element(v, v + 4)};
}

void propagate_products(const ProblemInstance &inst, std::vector<double> &lo,
                        std::vector<double> &hi, int column) {
  for (const auto &t : inst.bilinear_terms) {
    if (column >= 0 && t.factor_m != column && t.factor_tau != column)
      continue;
    const auto m = static_cast<std::size_t>(t.factor_m);
    const auto tau = static_cast<std::size_t>(t.factor_tau);
    const auto h = static_cast<std::size_t>(t.product);
    const auto [plo, phi] = interval_product(t.coeff, lo[m], hi[m], lo[tau], hi[tau]);
    lo[h] = std::max(lo[h], plo);
    hi[h] = std::min(hi[h], phi);
  }
}

double max_violation(const ProblemInstance &inst, std::span<const double> x) {
  double worst = 0.0;
  for (const auto &t : inst.bilinear_terms)
    worst = std::max(worst, relative_violation(t, x, 1.0));
  return worst;
}

std::vector<double> to_std(const Eigen::VectorXd &v) { return {v.data(), v.data() + v.size()}; }

struct BlockResult {
  GlobalStatus status = GlobalStatus::Infeasible;
  std::vector<double> x;
  double ub = kInf;
  double lb = -kInf;
  long nodes = 0;
  bool proven_infeasible = false;
  bool no_incumbent = false;
  std::string log;
};

struct OpenNode {
  double key;
  long id;
  BnbNode node;
};

struct OpenOrder {
  bool operator()(const OpenNode &a, const OpenNode &b) const {
    // min-heap on (bound, id)
    if (a.key != b.key)
      return a.key > b.key;
    return a.id > b.id;
  }
};

class Search {
public:
  Search(const ProblemInstance &inst, const GlobalConfig &cfg, Clock::time_point deadline,
         int component)
      : inst_(inst), cfg_(cfg), deadline_(deadline), component_(component) {}

  BlockResult run() {
    BlockResult res;
    BnbNode root;
    root.lo = inst_.lo;
    root.hi = inst_.hi;
    propagate_products(inst_, root.lo, root.hi, -1);
    root_lo_ = root.lo;
    root_hi_ = root.hi;

    std::priority_queue<OpenNode, std::vector<OpenNode>, OpenOrder> open;
    open.push({root.lower_bound, root.id, std::move(root)});
    long next_id = 1;
    bool unproven = false;
    GlobalStatus stop = GlobalStatus::Optimal;

    while (!open.empty()) {
      const double best_open = open.top().key;
      if (std::isfinite(ub_) && (ub_ - best_open) <= cfg_.gap_tol * std::max(1.0, std::abs(ub_)))
        break;
      if (res.nodes >= cfg_.node_limit) {
        stop = GlobalStatus::NodeLimit;
        break;
      }
      if (Clock::now() >= deadline_) {
        stop = GlobalStatus::TimeLimit;
        break;
      }
      BnbNode node = std::move(const_cast<OpenNode &>(open.top()).node);
      open.pop();
      ++res.nodes;

      const Eval ev = evaluate(node);
      std::optional<BranchChoice> choice;
      if (ev.feasible && !fathomed(ev.bound)) {
        if (ev.reliable) {
          choice = choose_branch(inst_, node, root_lo_, root_hi_, ev.x, cfg_.feas_tol);
          if (!choice && max_violation(inst_, ev.x) > cfg_.feas_tol)
            unproven = true; // violated but nothing left to split
        } else {
          choice = widest_split(node);
          if (!choice)
            unproven = true;
        }
      }
      log_node(node, ev, choice);
      if (!choice)
        continue;
      node.lower_bound = ev.bound;
      auto [left, right] = branch(inst_, node, *choice, next_id);
      next_id += 2;
      open.push({left.lower_bound, left.id, std::move(left)});
      open.push({right.lower_bound, right.id, std::move(right)});
    }

    double lb = ub_;
    if (!open.empty())
      lb = std::min(lb, open.top().key);
    if (!std::isfinite(ub_)) {
      if (stop == GlobalStatus::Optimal && open.empty() && !unproven) {
        res.status = GlobalStatus::Infeasible;
        res.proven_infeasible = true;
        res.log = log_.str();
        return res;
      }
      res.no_incumbent = true;
      res.log = log_.str();
      return res;
    }
    res.status = stop;
    res.x = incumbent_;
    res.ub = ub_;
    res.lb = std::min(lb, ub_);
    res.log = log_.str();
    return res;
  }

private:
  struct Eval {
    bool feasible = false;
    bool reliable = false;
    double bound = -kInf;
    std::vector<double> x;
  };

  bool fathomed(double bound) const {
    return std::isfinite(ub_) && bound >= ub_ - cfg_.gap_tol * std::max(1.0, std::abs(ub_));
  }

  QpSolution solve(const ProblemInstance &convex) {
    QpConfig qc = cfg_.qp;
    qc.check_psd = cfg_.qp.check_psd && !psd_checked_;
    psd_checked_ = true;
    return solve_qp(to_qp(convex), qc);
  }

  void offer(std::vector<double> x) {
    if (max_violation(inst_, x) > cfg_.feas_tol)
      return;
    const double obj = objective_value(inst_, x);
    if (obj < ub_) {
      ub_ = obj;
      incumbent_ = std::move(x);
    }
  }

  void try_linearized(const ProblemInstance &fixed) {
    const QpSolution s = solve(fixed);
    if (s.status == QpStatus::Optimal)
      offer(to_std(s.x));
  }

  Eval evaluate(const BnbNode &node) {
    Eval ev;
    ProblemInstance relax;
    try {
      relax = apply_mccormick(inst_, node.lo, node.hi);
    } catch (const EmptyBox &) {
      return ev;
    }
    const QpSolution s = solve(relax);
    if (s.status == QpStatus::PrimalInfeasible)
      return ev;
    ev.feasible = true;
    if (s.status != QpStatus::Optimal) {
      ev.bound = node.lower_bound;
      return ev;
    }
    ev.reliable = true;
    ev.x = to_std(s.x);
    ev.bound = std::max(node.lower_bound, s.objective);
    if (max_violation(inst_, ev.x) <= cfg_.feas_tol) {
      offer(ev.x);
      return ev;
    }
    try_linearized(linearize_at_temperatures(inst_, ev.x));
    if (node.id == 0)
      try_linearized(linearize_at_flows(inst_, ev.x));
    if (node.id == 0 || !std::isfinite(ub_)) {
      LocalConfig lc;
      lc.feas_tol = cfg_.feas_tol;
      lc.qp = cfg_.qp;
      if (auto local = local_solve(inst_, ev.x, lc))
        offer(std::move(*local));
    }
    return ev;
  }

  // Fallback when the relaxation could not be solved to optimality.
  std::optional<BranchChoice> widest_split(const BnbNode &node) const {
    std::optional<BranchChoice> best;
    double widest = 1e-9;
    for (std::size_t k = 0; k < inst_.bilinear_terms.size(); ++k) {
      const auto &t = inst_.bilinear_terms[k];
      for (int col : {t.factor_m, t.factor_tau}) {
        const auto j = static_cast<std::size_t>(col);
        const double root_w = root_hi_[j] - root_lo_[j];
        if (root_w <= 0.0)
          continue;
        const double w = (node.hi[j] - node.lo[j]) / root_w;
        if (w > widest) {
          widest = w;
          best = BranchChoice{static_cast<int>(k), col, 0.5 * (node.lo[j] + node.hi[j])};
        }
      }
    }
    return best;
  }

  void log_node(const BnbNode &node, const Eval &ev, const std::optional<BranchChoice> &c) {
    if (!cfg_.node_log)
      return;
    log_ << component_ << ',' << node.id << ',' << node.parent << ',' << node.depth << ',';
    if (ev.feasible)
      log_ << ev.bound;
    else
      log_ << "inf";
    log_ << ',' << ub_ << ',';
    if (c)
      log_ << inst_.vars.name(c->column) << ',' << c->split;
    else
      log_ << ',';
    log_ << '\n';
  }

  const ProblemInstance &inst_;
  const GlobalConfig &cfg_;
  Clock::time_point deadline_;
  int component_;
  std::vector<double> root_lo_, root_hi_;
  double ub_ = kInf;
  std::vector<double> incumbent_;
  bool psd_checked_ = false;
  std::ostringstream log_;
};

int find(std::vector<int> &parent, int i) {
  while (parent[static_cast<std::size_t>(i)] != i) {
    parent[static_cast<std::size_t>(i)] =
        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
    i = parent[static_cast<std::size_t>(i)];
  }
  return i;
}

void unite(std::vector<int> &parent, int a, int b) {
  a = find(parent, a);
  b = find(parent, b);
  if (a != b)
    parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
}

BlockResult solve_convex(const ProblemInstance &inst, const GlobalConfig &cfg) {
  BlockResult res;
  res.nodes = 1;
  const QpSolution s = solve_qp(to_qp(inst), cfg.qp);
  if (s.status == QpStatus::PrimalInfeasible) {
    res.status = GlobalStatus::Infeasible;
    res.proven_infeasible = true;
    return res;
  }
  if (s.status != QpStatus::Optimal)
    throw NoFeasibleIncumbent("convex block ended with status " + std::string(to_string(s.status)));
  res.status = GlobalStatus::Optimal;
  res.x = to_std(s.x);
  res.ub = res.lb = s.objective;
  return res;
}

} // namespace

std::optional<BranchChoice> choose_branch(const ProblemInstance &instance, const BnbNode &node,
                                          std::span<const double> root_lo,
                                          std::span<const double> root_hi,
                                          std::span<const double> x, double feas_tol) {
  auto norm_width = [&](int col) {
    const auto j = static_cast<std::size_t>(col);
    const double root_w = root_hi[j] - root_lo[j];
    return root_w > 0.0 ? (node.hi[j] - node.lo[j]) / root_w : 0.0;
  };
  std::optional<BranchChoice> best;
  double worst = feas_tol;
  for (std::size_t k = 0; k < instance.bilinear_terms.size(); ++k) {
    const auto &t = instance.bilinear_terms[k];
    const double v = relative_violation(t, x, 1.0);
    if (v <= worst)
      continue;
    const double wm = norm_width(t.factor_m);
    const double wt = norm_width(t.factor_tau);
    if (std::max(wm, wt) <= 1e-9)
      continue;
    const int col = wm >= wt ? t.factor_m : t.factor_tau;
    const auto j = static_cast<std::size_t>(col);
    const double w = node.hi[j] - node.lo[j];
    const double split = std::clamp(x[j], node.lo[j] + 0.1 * w, node.hi[j] - 0.1 * w);
    worst = v;
    best = BranchChoice{static_cast<int>(k), col, split};
  }
  return best;
}

std::pair<BnbNode, BnbNode> branch(const ProblemInstance &instance, const BnbNode &node,
                                   const BranchChoice &choice, long first_child_id) {
  const auto j = static_cast<std::size_t>(choice.column);
  if (!(choice.split > node.lo[j] && choice.split < node.hi[j]))
    throw std::invalid_argument("split point " + std::to_string(choice.split) +
                                " is not inside the box of " + instance.vars.name(choice.column));
  BnbNode left = node, right = node;
  left.id = first_child_id;
  right.id = first_child_id + 1;
  left.parent = right.parent = node.id;
  left.depth = right.depth = node.depth + 1;
  left.hi[j] = choice.split;
  right.lo[j] = choice.split;
  propagate_products(instance, left.lo, left.hi, choice.column);
  propagate_products(instance, right.lo, right.hi, choice.column);
  return {std::move(left), std::move(right)};
}

std::vector<Component> split_components(const ProblemInstance &inst) {
  const int n = static_cast<int>(inst.num_vars());
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto link_row = [&](const LinearRow &r) {
    for (std::size_t k = 1; k < r.coeffs.size(); ++k)
      unite(parent, r.coeffs[0].first, r.coeffs[k].first);
  };
  for (const auto &r : inst.eq_rows)
    link_row(r);
  for (const auto &r : inst.ineq_rows)
    link_row(r);
  for (const auto &t : inst.bilinear_terms) {
    unite(parent, t.product, t.factor_m);
    unite(parent, t.product, t.factor_tau);
  }
  const auto &Q = inst.objective.Q;
  for (int c = 0; c < Q.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Q, c); it; ++it)
      unite(parent, static_cast<int>(it.row()), static_cast<int>(it.col()));

  // Blocks without bilinear terms are pooled into one convex remainder.
  std::set<int> bilinear_roots;
  for (const auto &t : inst.bilinear_terms)
    bilinear_roots.insert(find(parent, t.product));
  std::map<int, int> slot; // root -> component index
  std::vector<int> comp_of(static_cast<std::size_t>(n));
  int convex_slot = -1;
  int count = 0;
  for (int j = 0; j < n; ++j) {
    const int r = find(parent, j);
    if (bilinear_roots.count(r)) {
      auto [it, inserted] = slot.emplace(r, count);
      if (inserted)
        ++count;
      comp_of[static_cast<std::size_t>(j)] = it->second;
    } else {
      if (convex_slot < 0)
        convex_slot = count++;
      comp_of[static_cast<std::size_t>(j)] = convex_slot;
    }
  }

  std::vector<Component> comps(static_cast<std::size_t>(count));
  std::vector<int> local(static_cast<std::size_t>(n));
  std::vector<std::vector<VarKey>> keys(static_cast<std::size_t>(count));
  for (int j = 0; j < n; ++j) {
    auto &c = comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(j)])];
    local[static_cast<std::size_t>(j)] = static_cast<int>(c.columns.size());
    c.columns.push_back(j);
    keys[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(j)])].push_back(
        inst.vars.key(j));
  }
  for (int k = 0; k < count; ++k) {
    auto &c = comps[static_cast<std::size_t>(k)];
    auto &ci = c.instance;
    ci.variant = inst.variant;
    ci.vars = VarMap(keys[static_cast<std::size_t>(k)]);
    std::set<int> hours;
    for (const auto &key : ci.vars.keys())
      hours.insert(key.hour);
    ci.hours.assign(hours.begin(), hours.end());
    const auto nk = static_cast<Eigen::Index>(c.columns.size());
    ci.objective.q.resize(nk);
    ci.objective.Q.resize(nk, nk);
    for (Eigen::Index i = 0; i < nk; ++i)
      ci.objective.q[i] = inst.objective.q[c.columns[static_cast<std::size_t>(i)]];
    for (int col : c.columns) {
      ci.lo.push_back(inst.lo[static_cast<std::size_t>(col)]);
      ci.hi.push_back(inst.hi[static_cast<std::size_t>(col)]);
    }
  }
  if (count > 0)
    comps[0].instance.objective.c0 = inst.objective.c0;

  std::vector<std::vector<Eigen::Triplet<double>>> trip(static_cast<std::size_t>(count));
  for (int c = 0; c < Q.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Q, c); it; ++it) {
      const auto r = static_cast<std::size_t>(it.row());
      const auto cc = static_cast<std::size_t>(it.col());
      trip[static_cast<std::size_t>(comp_of[r])].emplace_back(local[r], local[cc], it.value());
    }
  for (int k = 0; k < count; ++k)
    comps[static_cast<std::size_t>(k)].instance.objective.Q.setFromTriplets(
        trip[static_cast<std::size_t>(k)].begin(), trip[static_cast<std::size_t>(k)].end());

  auto remap = [&](const LinearRow &r) {
    LinearRow out = r;
    for (auto &[col, a] : out.coeffs)
      col = local[static_cast<std::size_t>(col)];
    return out;
  };
  auto owner = [&](const LinearRow &r) {
    return r.coeffs.empty() ? 0 : comp_of[static_cast<std::size_t>(r.coeffs[0].first)];
  };
  for (const auto &r : inst.eq_rows)
    comps[static_cast<std::size_t>(owner(r))].instance.eq_rows.push_back(remap(r));
  for (const auto &r : inst.ineq_rows)
    comps[static_cast<std::size_t>(owner(r))].instance.ineq_rows.push_back(remap(r));
  for (const auto &t : inst.bilinear_terms) {
    BilinearTerm lt = t;
    lt.product = local[static_cast<std::size_t>(t.product)];
    lt.factor_m = local[static_cast<std::size_t>(t.factor_m)];
    lt.factor_tau = local[static_cast<std::size_t>(t.factor_tau)];
    comps[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(t.product)])]
        .instance.bilinear_terms.push_back(lt);
  }
  return comps;
}

GlobalSolution solve_global(const ProblemInstance &instance, const GlobalConfig &config) {
  const auto start = Clock::now();
  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(
                  std::min(config.time_limit, 1e9)));
  if (!instance.bilinear_terms.empty() && instance.variant != Variant::Base &&
      instance.variant != Variant::Reformulated)
    throw UnsupportedVariant("global search needs a Base or Reformulated instance");

  // One-time convexity check so the searches can skip it.
  validate_qp(to_qp(ProblemInstance{instance.variant, instance.hours, instance.vars,
                                    instance.objective, {}, {}, instance.lo, instance.hi, {}}));
  GlobalConfig cfg = config;
  cfg.qp.check_psd = false;

  const std::vector<Component> comps = split_components(instance);
  std::vector<BlockResult> results(comps.size());
  std::vector<std::exception_ptr> errors(comps.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < comps.size();) {
      try {
        const auto &ci = comps[k].instance;
        results[k] = ci.bilinear_terms.empty()
                         ? solve_convex(ci, cfg)
                         : Search(ci, cfg, deadline, static_cast<int>(k)).run();
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(comps.size())));
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

  GlobalSolution out;
  out.components = static_cast<int>(comps.size());
  out.status = GlobalStatus::Optimal;
  out.x.assign(instance.num_vars(), 0.0);
  auto rank = [](GlobalStatus s) {
    switch (s) {
    case GlobalStatus::Optimal:
      return 0;
    case GlobalStatus::NodeLimit:
      return 1;
    case GlobalStatus::TimeLimit:
      return 2;
    case GlobalStatus::Infeasible:
      return 3;
    }
    return 3;
  };
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const BlockResult &r = results[k];
    out.nodes += r.nodes;
    if (rank(r.status) > rank(out.status))
      out.status = r.status;
    if (r.status == GlobalStatus::Infeasible)
      continue;
    out.upper_bound += r.ub;
    out.lower_bound += r.lb;
    for (std::size_t j = 0; j < comps[k].columns.size(); ++j)
      out.x[static_cast<std::size_t>(comps[k].columns[j])] = r.x[j];
  }
  if (out.status == GlobalStatus::Infeasible) {
    out.x.clear();
    out.upper_bound = kInf;
    out.lower_bound = kInf;
  } else {
    out.gap = (out.upper_bound - out.lower_bound) / std::max(1.0, std::abs(out.upper_bound));
  }
  if (config.node_log) {
    std::ofstream f(*config.node_log);
    if (!f)
      throw Error("cannot write node log " + config.node_log->string());
    f << "component,node,parent,depth,lower_bound,upper_bound,branch_variable,split\n";
    for (const auto &r : results)
      f << r.log;
  }
  for (const auto &r : results)
    if (r.no_incumbent)
      throw NoFeasibleIncumbent("branch-and-bound ended after " + std::to_string(r.nodes) +
                                " nodes without a feasible point");
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

} // namespace dhsplan
