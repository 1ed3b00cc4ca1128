#include <doctest.h>

#include <random>

#include "dhsplan/errors.hpp"
#include "dhsplan/qp.hpp"

using namespace dhsplan;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SparseMat dense_to_sparse(const Eigen::MatrixXd &M) { return M.sparseView(); }

QpProblem empty_problem(int n) {
  QpProblem p;
  p.Q.resize(n, n);
  p.q = VectorXd::Zero(n);
  p.A_eq.resize(0, n);
  p.b_eq.resize(0);
  p.A_in.resize(0, n);
  p.b_in.resize(0);
  p.lo = VectorXd::Constant(n, -kInf);
  p.hi = VectorXd::Constant(n, kInf);
  return p;
}

} // namespace

TEST_CASE("min x^2 with x >= 1 has bound multiplier 2") {
  QpProblem p = empty_problem(1);
  p.Q = dense_to_sparse(Eigen::MatrixXd::Constant(1, 1, 2.0));
  p.lo[0] = 1.0;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.duals.z_lo[0] == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("the same bound as an inequality row gives the same multiplier") {
  QpProblem p = empty_problem(1);
  p.Q = dense_to_sparse(Eigen::MatrixXd::Constant(1, 1, 2.0));
  p.A_in = dense_to_sparse(Eigen::MatrixXd::Constant(1, 1, -1.0));
  p.b_in = VectorXd::Constant(1, -1.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.duals.z_in[0] == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("projection onto x + y = 2 has equality dual -2") {
  QpProblem p = empty_problem(2);
  p.Q = dense_to_sparse(2.0 * Eigen::MatrixXd::Identity(2, 2));
  p.q = VectorXd::Constant(2, -4.0);
  p.c0 = 8.0;
  p.A_eq = dense_to_sparse(Eigen::MatrixXd::Ones(1, 2));
  p.b_eq = VectorXd::Constant(1, 2.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[0] == doctest::Approx(1.0));
  CHECK(s.x[1] == doctest::Approx(1.0));
  CHECK(s.duals.y_eq[0] == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(s.objective == doctest::Approx(2.0));
}

TEST_CASE("contradictory bounds are primal infeasible with a certificate") {
  QpProblem p = empty_problem(1);
  p.lo[0] = 1.0;
  p.hi[0] = 0.0;
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::PrimalInfeasible);
  CHECK(s.certificate.size() > 0);
}

TEST_CASE("contradictory rows are primal infeasible with a Farkas certificate") {
  // x >= 1 and x <= 0 as rows.
  QpProblem p = empty_problem(1);
  p.Q = dense_to_sparse(Eigen::MatrixXd::Constant(1, 1, 1.0));
  Eigen::MatrixXd G(2, 1);
  G << -1.0, 1.0;
  p.A_in = dense_to_sparse(G);
  p.b_in = VectorXd(2);
  p.b_in << -1.0, 0.0;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::PrimalInfeasible);
  // z >= 0 with G'z = 0 and b'z < 0.
  const VectorXd z = s.certificate.tail(2);
  CHECK((z.array() >= -1e-9).all());
  CHECK(std::abs((G.transpose() * z)[0]) <= 1e-6 * z.lpNorm<Eigen::Infinity>());
  CHECK(p.b_in.dot(z) < 0.0);
}

TEST_CASE("unbounded linear objective is dual infeasible") {
  QpProblem p = empty_problem(1);
  p.q[0] = -1.0;
  p.lo[0] = 0.0;
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::DualInfeasible);
}

TEST_CASE("fixed columns are eliminated and still receive multipliers") {
  // min (x-3)^2 + y^2, x fixed at 1, x + y = 2
  QpProblem p = empty_problem(2);
  p.Q = dense_to_sparse(2.0 * Eigen::MatrixXd::Identity(2, 2));
  p.q << -6.0, 0.0;
  p.lo[0] = p.hi[0] = 1.0;
  p.A_eq = dense_to_sparse(Eigen::MatrixXd::Ones(1, 2));
  p.b_eq = VectorXd::Constant(1, 2.0);
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.x[1] == doctest::Approx(1.0));
  CHECK(s.residuals.dual <= 1e-8);
}

TEST_CASE("non-PSD Q is rejected") {
  QpProblem p = empty_problem(2);
  Eigen::MatrixXd Q(2, 2);
  Q << 1.0, 2.0, 2.0, 1.0;
  p.Q = dense_to_sparse(Q);
  CHECK_THROWS_AS(solve_qp(p), ValidationError);
}

TEST_CASE("dimension mismatch is reported") {
  QpProblem p = empty_problem(2);
  p.lo = VectorXd::Zero(3);
  CHECK_THROWS_AS(solve_qp(p), DimensionMismatch);
}

TEST_CASE("solves are deterministic") {
  QpProblem p = empty_problem(3);
  Eigen::MatrixXd Q(3, 3);
  Q << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  p.Q = dense_to_sparse(Q);
  p.q << 1, -2, 3;
  p.A_eq = dense_to_sparse(Eigen::MatrixXd::Ones(1, 3));
  p.b_eq = VectorXd::Constant(1, 1.0);
  p.lo = VectorXd::Zero(3);
  const QpSolution a = solve_qp(p);
  const QpSolution b = solve_qp(p);
  REQUIRE(a.status == QpStatus::Optimal);
  CHECK(a.x == b.x);
  CHECK(a.duals.y_eq == b.duals.y_eq);
}

TEST_CASE("random PSD problems meet the KKT contract") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5 + trial * 3;
    const int r = n / 2;
    const int me = n / 4;
    const int mi = n / 3;
    Eigen::MatrixXd F(n, r);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < r; ++j)
        F(i, j) = g(rng);
    QpProblem p = empty_problem(n);
    p.Q = dense_to_sparse(F * F.transpose());
    for (int i = 0; i < n; ++i)
      p.q[i] = g(rng);
    VectorXd x0(n);
    for (int i = 0; i < n; ++i)
      x0[i] = u(rng);
    Eigen::MatrixXd A(me, n), G(mi, n);
    for (int i = 0; i < me; ++i)
      for (int j = 0; j < n; ++j)
        A(i, j) = g(rng);
    for (int i = 0; i < mi; ++i)
      for (int j = 0; j < n; ++j)
        G(i, j) = g(rng);
    p.A_eq = dense_to_sparse(A);
    p.b_eq = A * x0;
    p.A_in = dense_to_sparse(G);
    p.b_in = G * x0 + VectorXd::Constant(mi, 0.5);
    p.lo = VectorXd::Constant(n, -1.0);
    p.hi = VectorXd::Constant(n, 2.0);
    const QpSolution s = solve_qp(p);
    INFO("trial " << trial);
    REQUIRE(s.status == QpStatus::Optimal);
    const double bn = std::max({p.b_eq.lpNorm<Eigen::Infinity>(), p.b_in.lpNorm<Eigen::Infinity>(), 2.0});
    CHECK(s.residuals.primal <= 1e-8 * (1 + bn));
    CHECK(s.residuals.dual <= 1e-8 * (1 + p.q.lpNorm<Eigen::Infinity>()));
    CHECK(s.residuals.complementarity <= 1e-8);
    CHECK(s.residuals.duality_gap <= 1e-8);
  }
}
