#include <algorithm>
#include <cmath>
#include <set>

#include "dhsplan/global_bilinear.hpp"

namespace dhsplan {

namespace {

double abs_violation(const ProblemInstance &inst, std::span<const double> x) {
  double total = 0.0;
  for (const auto &t : inst.bilinear_terms)
    total += std::abs(x[static_cast<std::size_t>(t.product)] -
                      t.coeff * x[static_cast<std::size_t>(t.factor_m)] *
                          x[static_cast<std::size_t>(t.factor_tau)]);
  return total;
}

double max_rel_violation(const ProblemInstance &inst, std::span<const double> x) {
  double worst = 0.0;
  for (const auto &t : inst.bilinear_terms)
    worst = std::max(worst, relative_violation(t, x, 1.0));
  return worst;
}

} // namespace

std::optional<std::vector<double>> local_solve(const ProblemInstance &instance,
                                               std::span<const double> x0,
                                               const LocalConfig &config) {
  const auto n = static_cast<Eigen::Index>(instance.num_vars());
  const auto K = static_cast<Eigen::Index>(instance.bilinear_terms.size());
  if (static_cast<Eigen::Index>(x0.size()) != n)
    return std::nullopt;

  ProblemInstance linear = instance;
  linear.bilinear_terms.clear();
  const QpProblem base = to_qp(linear);
  const double rho = 1e3 * (1.0 + base.q.lpNorm<Eigen::Infinity>());

  std::set<int> factors;
  for (const auto &t : instance.bilinear_terms) {
    factors.insert(t.factor_m);
    factors.insert(t.factor_tau);
  }

  // Elastic form: columns x, s+ (K), s- (K).
  QpProblem p;
  const Eigen::Index n2 = n + 2 * K;
  p.Q = base.Q;
  p.Q.conservativeResize(n2, n2);
  p.q = Eigen::VectorXd::Zero(n2);
  p.q.head(n) = base.q;
  p.q.tail(2 * K).setConstant(rho);
  p.c0 = base.c0;
  p.A_in = base.A_in;
  p.A_in.conservativeResize(base.A_in.rows(), n2);
  p.b_in = base.b_in;
  p.lo = Eigen::VectorXd::Zero(n2);
  p.hi = Eigen::VectorXd::Constant(n2, std::numeric_limits<double>::infinity());
  p.lo.head(n) = base.lo;
  p.hi.head(n) = base.hi;
  const Eigen::Index m_eq = base.A_eq.rows();
  p.b_eq.resize(m_eq + K);
  p.b_eq.head(m_eq) = base.b_eq;

  std::vector<Eigen::Triplet<double>> fixed_part;
  for (int c = 0; c < base.A_eq.outerSize(); ++c)
    for (SparseMat::InnerIterator it(base.A_eq, c); it; ++it)
      fixed_part.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());

  std::vector<double> x(x0.begin(), x0.end());
  for (Eigen::Index j = 0; j < n; ++j)
    x[static_cast<std::size_t>(j)] = std::clamp(x[static_cast<std::size_t>(j)], base.lo[j], base.hi[j]);

  auto merit = [&](std::span<const double> v) {
    return objective_value(instance, v) + rho * abs_violation(instance, v);
  };

  double radius = config.initial_radius;
  double phi = merit(x);
  QpConfig qc = config.qp;
  qc.check_psd = false;

  for (int iter = 0; iter < config.max_iterations && radius > 1e-10; ++iter) {
    std::vector<Eigen::Triplet<double>> trip = fixed_part;
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto &t = instance.bilinear_terms[static_cast<std::size_t>(k)];
      const double mk = x[static_cast<std::size_t>(t.factor_m)];
      const double tk = x[static_cast<std::size_t>(t.factor_tau)];
      const int row = static_cast<int>(m_eq + k);
      trip.emplace_back(row, t.product, 1.0);
      trip.emplace_back(row, t.factor_m, -t.coeff * tk);
      trip.emplace_back(row, t.factor_tau, -t.coeff * mk);
      trip.emplace_back(row, static_cast<int>(n + k), -1.0);
      trip.emplace_back(row, static_cast<int>(n + K + k), 1.0);
      p.b_eq[m_eq + k] = -t.coeff * mk * tk;
    }
    p.A_eq.resize(m_eq + K, n2);
    p.A_eq.setFromTriplets(trip.begin(), trip.end());
    for (int j : factors) {
      const double w = base.hi[j] - base.lo[j];
      p.lo[j] = std::max(base.lo[j], x[static_cast<std::size_t>(j)] - radius * w);
      p.hi[j] = std::min(base.hi[j], x[static_cast<std::size_t>(j)] + radius * w);
    }

    const QpSolution s = solve_qp(p, qc);
    if (s.status != QpStatus::Optimal) {
      radius *= 0.25;
      continue;
    }
    std::vector<double> cand(s.x.data(), s.x.data() + n);
    const double predicted = phi - s.objective;
    if (predicted <= 1e-9 * (1.0 + std::abs(phi)))
      break;
    const double phi_new = merit(cand);
    const double ratio = (phi - phi_new) / predicted;
    if (ratio >= 0.1) {
      x = std::move(cand);
      phi = phi_new;
      if (ratio > 0.75)
        radius = std::min(1.0, 2.0 * radius);
    } else {
      radius *= 0.25;
    }
  }

  // Exact polish: at consistent temperatures the flows re-solve linearly.
  const QpSolution polish = solve_qp(to_qp(linearize_at_temperatures(instance, x)), qc);
  if (polish.status == QpStatus::Optimal) {
    std::vector<double> y(polish.x.data(), polish.x.data() + n);
    if (max_rel_violation(instance, y) <= config.feas_tol)
      return y;
  }
  if (max_rel_violation(instance, x) <= config.feas_tol)
    return x;
  return std::nullopt;
}

} // namespace dhsplan
