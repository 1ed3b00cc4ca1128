#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dhsplan/analysis.hpp"
#include "dhsplan/errors.hpp"
#include "dhsplan/formulation.hpp"
#include "dhsplan/global_bilinear.hpp"
#include "dhsplan/qp.hpp"

using namespace dhsplan;

namespace {

NetworkModel single_pipe() { return load_network(DHSPLAN_TEST_DATA "/single_pipe.json"); }
NetworkModel micro() { return load_network(DHSPLAN_DATA "/micro_y.json"); }

std::vector<double> to_std(const Eigen::VectorXd &v) { return {v.data(), v.data() + v.size()}; }

// sum_{k>=2} (-x)^k / k!
long double series_gap(long double x) {
  long double term = x * x / 2.0L, sum = 0.0L;
  for (int k = 2; k < 40; ++k) {
    sum += term;
    term *= -x / static_cast<long double>(k + 1);
  }
  return sum;
}

// Single pipe with the flow fixed so that nu*L/(c*m) = ratio and a load that
// the 90 degC source covers exactly.
NetworkModel fixed_ratio_pipe(double ratio) {
  NetworkModel net = single_pipe();
  Pipe &p = net.pipes.at(0);
  p.m_nominal = p.loss_factor() / (net.specific_heat * ratio);
  const double load = net.specific_heat * p.m_nominal * 80.0 * (1.0 - ratio);
  for (auto &n : net.heat_nodes)
    if (n.id == "l")
      n.heat_load.at(0) = load;
  return net;
}

} // namespace

TEST_CASE("Taylor gap against a long-double series") {
  for (double x : {1e-6, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.5}) {
    CAPTURE(x);
    const double oracle = static_cast<double>(series_gap(x));
    CHECK(taylor_gap(x) == doctest::Approx(oracle).epsilon(1e-14));
  }
  CHECK(taylor_gap(0.05) == doctest::Approx(1.229424500714e-3).epsilon(1e-10));
  CHECK(taylor_gap(0.2) == doctest::Approx(1.8730753077982e-2).epsilon(1e-10));
}

TEST_CASE("audit of a fixed-flow pipe at x = 0.05") {
  const NetworkModel net = fixed_ratio_pipe(0.05);
  const ProblemInstance inst = build(net, Variant::ConstantFlow, std::vector<int>{1});
  const QpSolution s = solve_qp(to_qp(inst));
  REQUIRE(s.status == QpStatus::Optimal);
  const PhysicsAudit a = exact_heat_loss_audit(to_std(s.x), inst, net);
  REQUIRE(a.pipes.size() == 1);
  const PipeAudit &p = a.pipes[0];
  CHECK(p.loss_ratio == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(p.tau_upstream == doctest::Approx(90.0).epsilon(1e-9));
  CHECK(p.exact_outlet == doctest::Approx(10.0 + 80.0 * std::exp(-0.05)).epsilon(1e-9));
  CHECK(p.exact_outlet == doctest::Approx(86.0983).epsilon(1e-6));
  CHECK(p.taylor_outlet == doctest::Approx(86.0).epsilon(1e-9));
  CHECK(std::abs(p.discrepancy_rel - static_cast<double>(series_gap(0.05))) <= 1e-12);
  REQUIRE(p.carried_outlet);
  CHECK(*p.carried_outlet == doctest::Approx(p.taylor_outlet).epsilon(1e-9));
  CHECK_FALSE(p.premise_violated);
}

TEST_CASE("premise flag above the threshold") {
  const NetworkModel net = fixed_ratio_pipe(0.2);
  const ProblemInstance inst = build(net, Variant::ConstantFlow, std::vector<int>{1});
  const QpSolution s = solve_qp(to_qp(inst));
  REQUIRE(s.status == QpStatus::Optimal);
  const PhysicsAudit a = exact_heat_loss_audit(to_std(s.x), inst, net);
  CHECK(a.pipes[0].premise_violated);
  CHECK(a.premise_flags == 1);
  CHECK(a.pipes[0].discrepancy_rel == doctest::Approx(series_gap(0.2)).epsilon(1e-10));
  const PhysicsAudit b = exact_heat_loss_audit(to_std(s.x), inst, net, 0.3);
  CHECK(b.premise_flags == 0);
}

TEST_CASE("lossless pipe: exact and Taylor agree") {
  NetworkModel net = single_pipe();
  net.pipes[0].heat_transfer_coeff = 0.0;
  const ProblemInstance inst = build(net, Variant::ConstantFlow, std::vector<int>{1});
  const QpSolution s = solve_qp(to_qp(inst));
  REQUIRE(s.status == QpStatus::Optimal);
  const PhysicsAudit a = exact_heat_loss_audit(to_std(s.x), inst, net);
  CHECK(a.pipes[0].loss_ratio == 0.0);
  CHECK(a.pipes[0].discrepancy_abs == 0.0);
  CHECK(a.pipes[0].exact_outlet == a.pipes[0].taylor_outlet);
  CHECK(a.hours[0].exact_losses == 0.0);
}

TEST_CASE("single pipe global solution: temperatures and closure") {
  const NetworkModel net = single_pipe();
  const ProblemInstance inst = build(net, Variant::Reformulated, std::vector<int>{1});
  const GlobalSolution g = solve_global(inst);
  REQUIRE(g.status == GlobalStatus::Optimal);
  const RecoveredTemperatures t = recover_temperatures(g.x, inst, net);
  CHECK(t.out_of_window == 0);
  CHECK(t.zero_flow == 0);
  REQUIRE(t.pipes.size() == 1);
  REQUIRE(t.pipes[0].tau);
  // H_in = 0.3 at m = 0.304/(c*80): tau_pipe = 10 + 80*0.3/0.304
  CHECK(*t.pipes[0].tau == doctest::Approx(10.0 + 80.0 * 0.3 / 0.304).epsilon(1e-6));
  for (const auto &n : t.nodes)
    if (n.node == "s")
      CHECK(n.tau == doctest::Approx(90.0));

  const PhysicsAudit a = exact_heat_loss_audit(g.x, inst, net);
  REQUIRE(a.hours.size() == 1);
  CHECK(a.hours[0].production == doctest::Approx(0.304).epsilon(1e-6));
  CHECK(a.hours[0].load == doctest::Approx(0.3));
  CHECK(a.hours[0].linear_losses == doctest::Approx(0.004).epsilon(1e-9));
  CHECK(std::abs(a.hours[0].closure_linear) <= 1e-8);
  // exponential losses are a little smaller than the linear ones
  CHECK(a.hours[0].exact_losses < a.hours[0].linear_losses);
}

TEST_CASE("ambient operation carries no heat") {
  NetworkModel net = single_pipe();
  for (auto &n : net.heat_nodes)
    n.heat_load.assign(n.heat_load.size(), 0.0);
  net.heat_nodes[0].tau_source = net.ambient_temp;
  net.heat_nodes[0].tau_min = net.heat_nodes[1].tau_min = net.ambient_temp;
  net.pipes[0].tau_pipe_min = net.ambient_temp;
  const ProblemInstance inst = build(net, Variant::Reformulated, std::vector<int>{1});
  const GlobalSolution g = solve_global(inst);
  REQUIRE(g.status == GlobalStatus::Optimal);
  for (VarKind k : {VarKind::h_in_pipe, VarKind::h_out_pipe})
    CHECK(std::abs(g.x[static_cast<std::size_t>(inst.vars.index({k, "p1", 1}))]) <= 1e-8);
}

TEST_CASE("zero flow leaves the pipe temperature absent") {
  const NetworkModel net = single_pipe();
  const ProblemInstance inst = build(net, Variant::Reformulated, std::vector<int>{1});
  std::vector<double> x(inst.num_vars(), 0.0);
  x[static_cast<std::size_t>(inst.vars.index({VarKind::tau_tilde_node, "s", 1}))] = 80.0;
  x[static_cast<std::size_t>(inst.vars.index({VarKind::tau_tilde_node, "l", 1}))] = 70.0;
  const RecoveredTemperatures t = recover_temperatures(x, inst, net);
  CHECK(t.zero_flow == 1);
  CHECK_FALSE(t.pipes[0].tau);
  const PhysicsAudit a = exact_heat_loss_audit(x, inst, net);
  CHECK(std::isinf(a.pipes[0].loss_ratio));
  CHECK(a.pipes[0].premise_violated);
  CHECK_THROWS_AS(recover_temperatures(std::vector<double>(2), inst, net), DimensionMismatch);
}

TEST_CASE("out-of-window temperatures are flagged") {
  const NetworkModel net = single_pipe();
  const ProblemInstance inst = build(net, Variant::Reformulated, std::vector<int>{1});
  std::vector<double> x(inst.num_vars(), 0.0);
  auto set = [&](VarKind k, const char *id, double v) {
    x[static_cast<std::size_t>(inst.vars.index({k, id, 1}))] = v;
  };
  set(VarKind::tau_tilde_node, "s", 80.0);
  set(VarKind::tau_tilde_node, "l", 20.0); // 30 degC, window starts at 50
  set(VarKind::m_pipe, "p1", 1.0);
  set(VarKind::h_in_pipe, "p1", net.specific_heat * 1.0 * 30.0); // outlet 40 degC
  const RecoveredTemperatures t = recover_temperatures(x, inst, net);
  CHECK(t.out_of_window == 2);
}

TEST_CASE("hourly objectives add up") {
  const NetworkModel net = micro();
  const std::vector<int> hours{2, 3, 4};
  const ProblemInstance inst = build(net, Variant::McCormick, hours);
  const QpSolution s = solve_qp(to_qp(inst));
  REQUIRE(s.status == QpStatus::Optimal);
  const auto per = hourly_objectives(to_std(s.x), inst);
  REQUIRE(per.size() == 3);
  CHECK(std::accumulate(per.begin(), per.end(), 0.0) ==
        doctest::Approx(s.objective).epsilon(1e-12));
  for (std::size_t i = 0; i < hours.size(); ++i) {
    const QpSolution one =
        solve_qp(to_qp(build(net, Variant::McCormick, std::vector<int>{hours[i]})));
    CHECK(per[i] == doctest::Approx(one.objective).epsilon(1e-8));
  }
}

TEST_CASE("outlet heat violations vanish for fixed flows") {
  const NetworkModel net = micro();
  const ProblemInstance inst = build(net, Variant::ConstantFlow, std::vector<int>{1});
  const QpSolution s = solve_qp(to_qp(inst));
  REQUIRE(s.status == QpStatus::Optimal);
  const auto v = outlet_heat_violations(to_std(s.x), inst, net);
  CHECK(v.size() == net.pipes.size());
  for (const auto &t : v)
    CHECK(t.violation <= 1e-9);
}
