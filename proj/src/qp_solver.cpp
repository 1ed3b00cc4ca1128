#include "dhsplan/qp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "dhsplan/errors.hpp"

namespace dhsplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using Eigen::VectorXd;
using Triplets = std::vector<Eigen::Triplet<double>>;

double inf_norm(const VectorXd &v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

double quad_obj(const SparseMat &Q, const VectorXd &q, double c0, const VectorXd &x) {
  return c0 + q.dot(x) + 0.5 * x.dot(Q * x);
}

// ---------------------------------------------------------------------------
// Presolve: drop fixed columns and rows left empty by them.

struct Reduced {
  std::vector<int> cols;    // reduced -> original column
  std::vector<int> eq_rows; // reduced -> original eq row
  std::vector<int> in_rows; // reduced -> original ineq row
  VectorXd x_full;          // fixed values in place, others 0
  SparseMat Q, A, G;
  VectorXd q, b, h, lo, hi;
  double c0 = 0.0;
};

SparseMat select(const SparseMat &M, const std::vector<int> &rows, const std::vector<int> &col_map,
                 Eigen::Index ncols) {
  // col_map: original col -> new col or -1
  std::vector<int> row_map(static_cast<std::size_t>(M.rows()), -1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    row_map[static_cast<std::size_t>(rows[i])] = static_cast<int>(i);
  Triplets t;
  for (int k = 0; k < M.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(M, k); it; ++it) {
      const int r = row_map[static_cast<std::size_t>(it.row())];
      const int c = col_map[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0)
        t.emplace_back(r, c, it.value());
    }
  }
  SparseMat out(static_cast<Eigen::Index>(rows.size()), ncols);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

// ---------------------------------------------------------------------------
// Ruiz equilibration of the KKT matrix [[Q, A', G'], [A, 0, 0], [G, 0, 0]].

struct Scaling {
  VectorXd D;  // columns
  VectorXd Ea; // equality rows
  VectorXd Eg; // inequality rows
};

Scaling equilibrate(const SparseMat &Q, const SparseMat &A, const SparseMat &G) {
  const Eigen::Index n = Q.cols();
  Scaling s{VectorXd::Ones(n), VectorXd::Ones(A.rows()), VectorXd::Ones(G.rows())};
  for (int iter = 0; iter < 15; ++iter) {
    VectorXd cmax = VectorXd::Zero(n);
    VectorXd amax = VectorXd::Zero(A.rows());
    VectorXd gmax = VectorXd::Zero(G.rows());
    for (int k = 0; k < Q.outerSize(); ++k) {
      for (SparseMat::InnerIterator it(Q, k); it; ++it) {
        const double v = std::abs(it.value()) * s.D[it.row()] * s.D[it.col()];
        cmax[it.col()] = std::max(cmax[it.col()], v);
      }
    }
    auto scan = [&](const SparseMat &M, const VectorXd &E, VectorXd &rmax) {
      for (int k = 0; k < M.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(M, k); it; ++it) {
          const double v = std::abs(it.value()) * E[it.row()] * s.D[it.col()];
          cmax[it.col()] = std::max(cmax[it.col()], v);
          rmax[it.row()] = std::max(rmax[it.row()], v);
        }
      }
    };
    scan(A, s.Ea, amax);
    scan(G, s.Eg, gmax);
    double worst = 0.0;
    auto update = [&](VectorXd &scale, const VectorXd &mx) {
      for (Eigen::Index i = 0; i < scale.size(); ++i) {
        if (mx[i] > 0.0) {
          scale[i] /= std::sqrt(mx[i]);
          worst = std::max(worst, std::abs(1.0 - mx[i]));
        }
      }
    };
    update(s.D, cmax);
    update(s.Ea, amax);
    update(s.Eg, gmax);
    if (worst < 1e-3)
      break;
  }
  return s;
}

SparseMat scale_matrix(const SparseMat &M, const VectorXd &rows, const VectorXd &cols) {
  SparseMat out = M;
  for (int k = 0; k < out.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(out, k); it; ++it)
      it.valueRef() *= rows[it.row()] * cols[it.col()];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interior point core on  min 1/2 x'Qx + q'x  s.t.  Ax = b,  Cx + s = d,  s >= 0
// where C stacks G, -I (finite lower bounds) and I (finite upper bounds).

enum class CoreExit { Converged, IterLimit, Diverged, FactorFailure };

struct CoreResult {
  CoreExit exit = CoreExit::IterLimit;
  VectorXd x, y, z, s;
  int iterations = 0;
  std::vector<int> bad_pivots;
};

class InteriorPoint {
public:
  InteriorPoint(const SparseMat &Q, const VectorXd &q, const SparseMat &A, const VectorXd &b,
                const SparseMat &G, const VectorXd &h, const VectorXd &lo, const VectorXd &hi,
                const QpConfig &cfg)
      : Q_(Q), q_(q), A_(A), b_(b), G_(G), cfg_(cfg) {
    n_ = q.size();
    me_ = A.rows();
    mg_ = G.rows();
    for (Eigen::Index j = 0; j < n_; ++j) {
      if (std::isfinite(lo[j]))
        lo_idx_.push_back(static_cast<int>(j));
      if (std::isfinite(hi[j]))
        hi_idx_.push_back(static_cast<int>(j));
    }
    m_ = mg_ + static_cast<Eigen::Index>(lo_idx_.size() + hi_idx_.size());
    d_.resize(m_);
    d_.head(mg_) = h;
    for (std::size_t k = 0; k < lo_idx_.size(); ++k)
      d_[mg_ + static_cast<Eigen::Index>(k)] = -lo[lo_idx_[k]];
    for (std::size_t k = 0; k < hi_idx_.size(); ++k)
      d_[mg_ + static_cast<Eigen::Index>(lo_idx_.size() + k)] = hi[hi_idx_[k]];
    At_ = A_.transpose();
    Gt_ = G_.transpose();
    Q_.makeCompressed();
  }

  Eigen::Index cone_size() const { return m_; }

  VectorXd C(const VectorXd &x) const {
    VectorXd out(m_);
    out.head(mg_) = G_ * x;
    Eigen::Index r = mg_;
    for (int j : lo_idx_)
      out[r++] = -x[j];
    for (int j : hi_idx_)
      out[r++] = x[j];
    return out;
  }

  // Bound rows only (the tail of C).
  VectorXd Cbt(const VectorXd &zb) const {
    VectorXd out = VectorXd::Zero(n_);
    Eigen::Index r = 0;
    for (int j : lo_idx_)
      out[j] -= zb[r++];
    for (int j : hi_idx_)
      out[j] += zb[r++];
    return out;
  }

  VectorXd Ct(const VectorXd &z) const {
    VectorXd out = Gt_ * z.head(mg_);
    Eigen::Index r = mg_;
    for (int j : lo_idx_)
      out[j] -= z[r++];
    for (int j : hi_idx_)
      out[j] += z[r++];
    return out;
  }

  CoreResult run(const std::function<bool(const VectorXd &, const VectorXd &, const VectorXd &,
                                          const VectorXd &)> &converged) {
    CoreResult res;
    rho_ = cfg_.regularization;
    delta_ = cfg_.regularization;

    // Initial point: solve the KKT system with unit scaling, then shift into the cone.
    VectorXd w = VectorXd::Ones(m_);
    if (!factor(w, w, res))
      return res;
    VectorXd x, u, v;
    solve(-q_ + Cbt(d_.tail(m_ - mg_)), b_, d_.head(mg_), x, u, v);
    VectorXd y = -u;
    VectorXd s = d_ - C(x);
    VectorXd z = -s;
    auto shift = [&](VectorXd &v) {
      if (v.size() == 0)
        return;
      const double a = -v.minCoeff();
      if (a >= 0.0)
        v.array() += 1.0 + a;
    };
    shift(s);
    shift(z);

    const double big = 1e14;
    double best_merit = kInf;
    int stalled = 0;
    for (int it = 0; it <= cfg_.max_iterations; ++it) {
      res.iterations = it;
      const VectorXd rd = Q_ * x + q_ - At_ * y + Ct(z);
      const VectorXd rp = A_ * x - b_;
      const VectorXd rc = C(x) + s - d_;
      if (converged(x, y, z, s)) {
        res.exit = CoreExit::Converged;
        break;
      }
      if (it == cfg_.max_iterations) {
        res.exit = CoreExit::IterLimit;
        break;
      }
      if (inf_norm(x) > big || inf_norm(y) > big || inf_norm(z) > big) {
        res.exit = CoreExit::Diverged;
        break;
      }
      const double mu = m_ > 0 ? s.dot(z) / static_cast<double>(m_) : 0.0;
      // No progress for a while usually means no interior point; let the
      // caller classify.
      const double merit = std::max({inf_norm(rd), inf_norm(rp), inf_norm(rc), mu});
      if (merit < 0.99 * best_merit) {
        best_merit = merit;
        stalled = 0;
      } else if (++stalled >= 30) {
        res.exit = CoreExit::Diverged;
        break;
      }

      w = (z.array() / s.array()).matrix();
      const VectorXd winv = (s.array() / z.array()).matrix();
      if (!factor(w, winv, res))
        return res;

      VectorXd dx, dy, dz, ds;
      // Predictor.
      VectorXd rsz = (s.array() * z.array()).matrix();
      direction(s, z, w, rd, rp, rc, rsz, dx, dy, dz, ds);
      const double a_aff = step_to_boundary(s, ds, z, dz, 1.0);
      double sigma = 0.0;
      if (m_ > 0) {
        const double mu_aff =
            (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m_);
        sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);
      }
      // Corrector.
      rsz = (s.array() * z.array() + ds.array() * dz.array() - sigma * mu).matrix();
      direction(s, z, w, rd, rp, rc, rsz, dx, dy, dz, ds);
      const double alpha = step_to_boundary(s, ds, z, dz, 0.99);

      VectorXd xn = x + alpha * dx;
      VectorXd yn = y + alpha * dy;
      VectorXd zn = z + alpha * dz;
      VectorXd sn = s + alpha * ds;
      if (!xn.allFinite() || !yn.allFinite() || !zn.allFinite() || !sn.allFinite()) {
        res.exit = CoreExit::Diverged;
        break;
      }
      x = std::move(xn);
      y = std::move(yn);
      z = std::move(zn);
      s = std::move(sn);
      if (farkas_like(y, z)) {
        res.exit = CoreExit::Diverged;
        res.iterations = it + 1;
        break;
      }
    }
    res.x = std::move(x);
    res.y = std::move(y);
    res.z = std::move(z);
    res.s = std::move(s);
    return res;
  }

private:
  // Dual iterates that approximately satisfy A'y - C'z = 0 with b'y - d'z > 0
  // certify primal infeasibility; stop early and let phase 1 confirm.
  bool farkas_like(const VectorXd &y, const VectorXd &z) const {
    const double scale = std::max(inf_norm(y), inf_norm(z));
    if (scale < 1e6)
      return false;
    const double gamma = (b_.dot(y) - d_.dot(z)) / scale;
    if (gamma <= 0.0)
      return false;
    const double res = inf_norm(At_ * y - Ct(z)) / scale;
    return res <= 1e-6 * gamma;
  }

  bool factor(const VectorXd &w, const VectorXd &winv, CoreResult &res) {
    rho_ = cfg_.regularization;
    delta_ = cfg_.regularization;
    for (int attempt = 0; attempt < 4; ++attempt) {
      assemble(w, winv);
      ldlt_.compute(K_);
      if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite() && pivots_ok())
        return true;
      rho_ *= 100.0;
      delta_ *= 100.0;
    }
    res.exit = CoreExit::FactorFailure;
    res.bad_pivots = bad_pivots();
    return false;
  }

  bool pivots_ok() const { return bad_pivots().empty(); }

  std::vector<int> bad_pivots() const {
    std::vector<int> bad;
    const VectorXd &D = ldlt_.vectorD();
    const auto &perm = ldlt_.permutationP();
    Eigen::VectorXi inv(D.size());
    for (Eigen::Index i = 0; i < D.size(); ++i)
      inv[perm.indices()[i]] = static_cast<int>(i);
    for (Eigen::Index k = 0; k < D.size(); ++k) {
      const int orig = inv[k];
      const double d = D[k];
      const bool primal = orig < n_;
      if (!std::isfinite(d) || (primal && d <= 0.0) || (!primal && d >= 0.0) ||
          std::abs(d) < 1e-300)
        bad.push_back(primal ? orig : -1);
    }
    bad.erase(std::remove(bad.begin(), bad.end(), -1), bad.end());
    std::sort(bad.begin(), bad.end());
    if (bad.empty() && !std::isfinite(D.sum()))
      bad.push_back(0);
    return bad;
  }

  // Quasi-definite augmented matrix
  //   [[Q + Cb'WbCb + rho, A', G'], [A, -delta, 0], [G, 0, -Wg^-1 - delta]].
  // Keeping G rows unreduced avoids cancellation in G'WG when slacks vanish.
  void assemble(const VectorXd &w, const VectorXd &winv) {
    Triplets t;
    t.reserve(static_cast<std::size_t>(Q_.nonZeros() + 2 * A_.nonZeros() + 2 * G_.nonZeros() +
                                       n_ + me_ + mg_));
    for (int k = 0; k < Q_.outerSize(); ++k)
      for (SparseMat::InnerIterator it(Q_, k); it; ++it)
        t.emplace_back(it.row(), it.col(), it.value());
    VectorXd diag = VectorXd::Constant(n_, rho_);
    Eigen::Index r = mg_;
    for (int j : lo_idx_)
      diag[j] += w[r++];
    for (int j : hi_idx_)
      diag[j] += w[r++];
    for (Eigen::Index j = 0; j < n_; ++j)
      t.emplace_back(j, j, diag[j]);
    for (int k = 0; k < A_.outerSize(); ++k) {
      for (SparseMat::InnerIterator it(A_, k); it; ++it) {
        t.emplace_back(n_ + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n_ + it.row(), it.value());
      }
    }
    for (int k = 0; k < G_.outerSize(); ++k) {
      for (SparseMat::InnerIterator it(G_, k); it; ++it) {
        t.emplace_back(n_ + me_ + it.row(), it.col(), it.value());
        t.emplace_back(it.col(), n_ + me_ + it.row(), it.value());
      }
    }
    for (Eigen::Index i = 0; i < me_; ++i)
      t.emplace_back(n_ + i, n_ + i, -delta_);
    winv_g_ = winv.head(mg_);
    for (Eigen::Index i = 0; i < mg_; ++i)
      t.emplace_back(n_ + me_ + i, n_ + me_ + i, -winv_g_[i] - delta_);
    const Eigen::Index N = n_ + me_ + mg_;
    K_.resize(N, N);
    K_.setFromTriplets(t.begin(), t.end());
    K_.makeCompressed();
  }

  // Solves the augmented system for [x; u; v] with refinement against the
  // unregularized matrix.
  void solve(const VectorXd &r1, const VectorXd &r2, const VectorXd &r3, VectorXd &x, VectorXd &u,
             VectorXd &v) {
    VectorXd rhs(n_ + me_ + mg_);
    rhs << r1, r2, r3;
    VectorXd sol = ldlt_.solve(rhs);
    auto residual = [&](const VectorXd &p) {
      VectorXd r = rhs - K_ * p;
      r.head(n_) += rho_ * p.head(n_);
      r.tail(me_ + mg_) -= delta_ * p.tail(me_ + mg_);
      return r;
    };
    VectorXd r = residual(sol);
    double rn = inf_norm(r);
    for (int k = 0; k < 6 && rn > 0.0; ++k) {
      VectorXd cand = sol + ldlt_.solve(r);
      VectorXd rc = residual(cand);
      const double cn = inf_norm(rc);
      if (!(cn < 0.5 * rn)) {
        if (cn < rn) {
          sol = cand;
        }
        break;
      }
      sol = std::move(cand);
      r = std::move(rc);
      rn = cn;
    }
    x = sol.head(n_);
    u = sol.segment(n_, me_);
    v = sol.tail(mg_);
  }

  void direction(const VectorXd &s, const VectorXd &z, const VectorXd &w, const VectorXd &rd,
                 const VectorXd &rp, const VectorXd &rc, const VectorXd &rsz, VectorXd &dx,
                 VectorXd &dy, VectorXd &dz, VectorXd &ds) {
    const VectorXd t = ((z.array() * rc.array() - rsz.array()) / s.array()).matrix();
    const Eigen::Index mb = m_ - mg_;
    VectorXd u, vg;
    solve(-rd - Cbt(t.tail(mb)), -rp, -(winv_g_.array() * t.head(mg_).array()).matrix(), dx, u, vg);
    dy = -u;
    const VectorXd cdx = C(dx);
    dz.resize(m_);
    dz.head(mg_) = vg;
    dz.tail(mb) = (w.tail(mb).array() * cdx.tail(mb).array()).matrix() + t.tail(mb);
    ds = -rc - cdx;
  }

  static double step_to_boundary(const VectorXd &s, const VectorXd &ds, const VectorXd &z,
                                 const VectorXd &dz, double fraction) {
    double a = 1.0 / fraction;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (ds[i] < 0.0)
        a = std::min(a, -s[i] / ds[i]);
      if (dz[i] < 0.0)
        a = std::min(a, -z[i] / dz[i]);
    }
    return std::min(1.0, fraction * a);
  }

  SparseMat Q_;
  VectorXd q_;
  SparseMat A_, At_;
  VectorXd b_;
  SparseMat G_, Gt_;
  VectorXd d_;
  QpConfig cfg_;
  Eigen::Index n_ = 0, me_ = 0, mg_ = 0, m_ = 0;
  std::vector<int> lo_idx_, hi_idx_;
  double rho_ = 0.0, delta_ = 0.0;
  VectorXd winv_g_;
  SparseMat K_;
  Eigen::SimplicialLDLT<SparseMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

// ---------------------------------------------------------------------------

struct Evaluated {
  QpResiduals residuals;
  double objective = 0.0;
  double dual_objective = 0.0;
};

double bound_sum(const VectorXd &v, const VectorXd &z) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (std::isfinite(v[j]))
      s += v[j] * z[j];
  return s;
}

Evaluated evaluate(const QpProblem &p, const VectorXd &x, const QpDuals &d) {
  Evaluated e;
  e.objective = quad_obj(p.Q, p.q, p.c0, x);
  double primal = 0.0;
  if (p.A_eq.rows() > 0)
    primal = inf_norm(p.A_eq * x - p.b_eq);
  VectorXd slack_in(p.A_in.rows());
  if (p.A_in.rows() > 0) {
    slack_in = p.b_in - p.A_in * x;
    primal = std::max(primal, std::max(0.0, -slack_in.minCoeff()));
  }
  double compl_sum = 0.0;
  for (Eigen::Index i = 0; i < slack_in.size(); ++i)
    compl_sum += std::abs(d.z_in[i] * slack_in[i]);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (std::isfinite(p.lo[j])) {
      primal = std::max(primal, p.lo[j] - x[j]);
      compl_sum += std::abs(d.z_lo[j] * (x[j] - p.lo[j]));
    }
    if (std::isfinite(p.hi[j])) {
      primal = std::max(primal, x[j] - p.hi[j]);
      compl_sum += std::abs(d.z_hi[j] * (p.hi[j] - x[j]));
    }
  }
  VectorXd stat = p.Q * x + p.q - d.z_lo + d.z_hi;
  if (p.A_eq.rows() > 0)
    stat -= p.A_eq.transpose() * d.y_eq;
  if (p.A_in.rows() > 0)
    stat += p.A_in.transpose() * d.z_in;
  e.dual_objective = p.c0 - 0.5 * x.dot(p.Q * x) + p.b_eq.dot(d.y_eq) - p.b_in.dot(d.z_in) +
                     bound_sum(p.lo, d.z_lo) - bound_sum(p.hi, d.z_hi);
  e.residuals.primal = primal;
  e.residuals.dual = inf_norm(stat);
  e.residuals.complementarity = compl_sum / std::max(1.0, std::abs(e.objective));
  e.residuals.duality_gap =
      std::abs(e.objective - e.dual_objective) / (1.0 + std::abs(e.objective));
  return e;
}

double rhs_scale(const QpProblem &p) {
  double s = std::max(inf_norm(p.b_eq), inf_norm(p.b_in));
  for (Eigen::Index j = 0; j < p.lo.size(); ++j) {
    if (std::isfinite(p.lo[j]))
      s = std::max(s, std::abs(p.lo[j]));
    if (std::isfinite(p.hi[j]))
      s = std::max(s, std::abs(p.hi[j]));
  }
  return s;
}

QpSolution solve_impl(const QpProblem &p, const QpConfig &cfg, bool allow_phase1);

// Elastic feasibility problem; its optimal duals form a Farkas certificate.
QpSolution phase_one(const QpProblem &p, const QpConfig &cfg, double &violation) {
  const Eigen::Index n = p.num_vars();
  const Eigen::Index me = p.A_eq.rows();
  const Eigen::Index mi = p.A_in.rows();
  const Eigen::Index N = n + 2 * me + mi;
  QpProblem f;
  f.Q.resize(N, N);
  f.q = VectorXd::Zero(N);
  f.q.tail(2 * me + mi).setOnes();
  Triplets te, ti;
  for (int k = 0; k < p.A_eq.outerSize(); ++k)
    for (SparseMat::InnerIterator it(p.A_eq, k); it; ++it)
      te.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < me; ++i) {
    te.emplace_back(i, n + i, 1.0);
    te.emplace_back(i, n + me + i, -1.0);
  }
  for (int k = 0; k < p.A_in.outerSize(); ++k)
    for (SparseMat::InnerIterator it(p.A_in, k); it; ++it)
      ti.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < mi; ++i)
    ti.emplace_back(i, n + 2 * me + i, -1.0);
  f.A_eq.resize(me, N);
  f.A_eq.setFromTriplets(te.begin(), te.end());
  f.b_eq = p.b_eq;
  f.A_in.resize(mi, N);
  f.A_in.setFromTriplets(ti.begin(), ti.end());
  f.b_in = p.b_in;
  f.lo = VectorXd::Zero(N);
  f.hi = VectorXd::Constant(N, kInf);
  f.lo.head(n) = p.lo;
  f.hi.head(n) = p.hi;
  QpConfig c1 = cfg;
  c1.check_psd = false;
  QpSolution sol = solve_impl(f, c1, false);
  violation = sol.objective;
  return sol;
}

QpSolution solve_impl(const QpProblem &p, const QpConfig &cfg, bool allow_phase1) {
  const Eigen::Index n = p.num_vars();
  QpSolution out;
  out.x = VectorXd::Zero(n);
  out.duals = {VectorXd::Zero(p.A_eq.rows()), VectorXd::Zero(p.A_in.rows()), VectorXd::Zero(n),
               VectorXd::Zero(n)};
  const double bscale = 1.0 + rhs_scale(p);
  const double qscale = 1.0 + inf_norm(p.q);
  const double feas_tol = cfg.tolerance * bscale;

  // Contradictory bounds need no iterations.
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p.lo[j] > p.hi[j]) {
      out.status = QpStatus::PrimalInfeasible;
      out.certificate = VectorXd::Zero(n);
      out.certificate[j] = 1.0;
      out.message = "column " + std::to_string(j) + " has lo > hi";
      return out;
    }
  }

  // Presolve.
  Reduced red;
  red.x_full = VectorXd::Zero(n);
  std::vector<int> col_map(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p.lo[j] == p.hi[j]) {
      red.x_full[j] = p.lo[j];
    } else {
      col_map[static_cast<std::size_t>(j)] = static_cast<int>(red.cols.size());
      red.cols.push_back(static_cast<int>(j));
    }
  }
  const auto nr = static_cast<Eigen::Index>(red.cols.size());
  const VectorXd b_eff = p.b_eq - p.A_eq * red.x_full;
  const VectorXd h_eff = p.b_in - p.A_in * red.x_full;
  std::vector<int> eq_count(static_cast<std::size_t>(p.A_eq.rows()), 0);
  std::vector<int> in_count(static_cast<std::size_t>(p.A_in.rows()), 0);
  for (int k = 0; k < p.A_eq.outerSize(); ++k)
    for (SparseMat::InnerIterator it(p.A_eq, k); it; ++it)
      if (col_map[static_cast<std::size_t>(it.col())] >= 0 && it.value() != 0.0)
        ++eq_count[static_cast<std::size_t>(it.row())];
  for (int k = 0; k < p.A_in.outerSize(); ++k)
    for (SparseMat::InnerIterator it(p.A_in, k); it; ++it)
      if (col_map[static_cast<std::size_t>(it.col())] >= 0 && it.value() != 0.0)
        ++in_count[static_cast<std::size_t>(it.row())];
  for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) {
    if (eq_count[static_cast<std::size_t>(i)] > 0) {
      red.eq_rows.push_back(static_cast<int>(i));
    } else if (std::abs(b_eff[i]) > feas_tol) {
      out.status = QpStatus::PrimalInfeasible;
      out.certificate = VectorXd::Zero(p.A_eq.rows() + p.A_in.rows());
      out.certificate[i] = b_eff[i] > 0 ? 1.0 : -1.0;
      out.x = red.x_full;
      out.message = "equality row " + std::to_string(i) + " cannot hold with fixed columns";
      return out;
    }
  }
  for (Eigen::Index i = 0; i < p.A_in.rows(); ++i) {
    if (in_count[static_cast<std::size_t>(i)] > 0) {
      red.in_rows.push_back(static_cast<int>(i));
    } else if (h_eff[i] < -feas_tol) {
      out.status = QpStatus::PrimalInfeasible;
      out.certificate = VectorXd::Zero(p.A_eq.rows() + p.A_in.rows());
      out.certificate[p.A_eq.rows() + i] = 1.0;
      out.x = red.x_full;
      out.message = "inequality row " + std::to_string(i) + " cannot hold with fixed columns";
      return out;
    }
  }
  red.Q = select(p.Q, red.cols, col_map, nr);
  red.A = select(p.A_eq, red.eq_rows, col_map, nr);
  red.G = select(p.A_in, red.in_rows, col_map, nr);
  const VectorXd qfull = p.q + p.Q * red.x_full;
  red.q.resize(nr);
  red.lo.resize(nr);
  red.hi.resize(nr);
  for (Eigen::Index k = 0; k < nr; ++k) {
    const int j = red.cols[static_cast<std::size_t>(k)];
    red.q[k] = qfull[j];
    red.lo[k] = p.lo[j];
    red.hi[k] = p.hi[j];
  }
  red.b.resize(static_cast<Eigen::Index>(red.eq_rows.size()));
  for (std::size_t i = 0; i < red.eq_rows.size(); ++i)
    red.b[static_cast<Eigen::Index>(i)] = b_eff[red.eq_rows[i]];
  red.h.resize(static_cast<Eigen::Index>(red.in_rows.size()));
  for (std::size_t i = 0; i < red.in_rows.size(); ++i)
    red.h[static_cast<Eigen::Index>(i)] = h_eff[red.in_rows[i]];

  // Map a reduced (scaled) iterate back to the original space.
  const Scaling sc = equilibrate(red.Q, red.A, red.G);
  auto recover = [&](const VectorXd &xs, const VectorXd &ys, const VectorXd &zs,
                     const std::vector<int> &lo_idx,
                     const std::vector<int> &hi_idx, VectorXd &x, QpDuals &d) {
    x = red.x_full;
    for (Eigen::Index k = 0; k < nr; ++k)
      x[red.cols[static_cast<std::size_t>(k)]] = sc.D[k] * xs[k];
    d.y_eq = VectorXd::Zero(p.A_eq.rows());
    d.z_in = VectorXd::Zero(p.A_in.rows());
    d.z_lo = VectorXd::Zero(n);
    d.z_hi = VectorXd::Zero(n);
    for (std::size_t i = 0; i < red.eq_rows.size(); ++i)
      d.y_eq[red.eq_rows[i]] = sc.Ea[static_cast<Eigen::Index>(i)] * ys[static_cast<Eigen::Index>(i)];
    const auto mg = static_cast<Eigen::Index>(red.in_rows.size());
    for (Eigen::Index i = 0; i < mg; ++i)
      d.z_in[red.in_rows[static_cast<std::size_t>(i)]] = sc.Eg[i] * zs[i];
    Eigen::Index r = mg;
    for (int k : lo_idx)
      d.z_lo[red.cols[static_cast<std::size_t>(k)]] = zs[r++] / sc.D[k];
    for (int k : hi_idx)
      d.z_hi[red.cols[static_cast<std::size_t>(k)]] = zs[r++] / sc.D[k];
    // Fixed columns take their reduced cost as bound multipliers.
    VectorXd g = p.Q * x + p.q;
    if (p.A_eq.rows() > 0)
      g -= p.A_eq.transpose() * d.y_eq;
    if (p.A_in.rows() > 0)
      g += p.A_in.transpose() * d.z_in;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (col_map[static_cast<std::size_t>(j)] < 0) {
        d.z_lo[j] = std::max(g[j], 0.0);
        d.z_hi[j] = std::max(-g[j], 0.0);
      }
    }
  };

  const SparseMat Qs = scale_matrix(red.Q, sc.D, sc.D);
  const SparseMat As = scale_matrix(red.A, sc.Ea, sc.D);
  const SparseMat Gs = scale_matrix(red.G, sc.Eg, sc.D);
  const VectorXd qs = (sc.D.array() * red.q.array()).matrix();
  const VectorXd bs = (sc.Ea.array() * red.b.array()).matrix();
  const VectorXd hs = (sc.Eg.array() * red.h.array()).matrix();
  const VectorXd los = (red.lo.array() / sc.D.array()).matrix();
  const VectorXd his = (red.hi.array() / sc.D.array()).matrix();

  InteriorPoint ipm(Qs, qs, As, bs, Gs, hs, los, his, cfg);
  std::vector<int> lo_idx, hi_idx;
  for (Eigen::Index k = 0; k < nr; ++k) {
    if (std::isfinite(red.lo[k]))
      lo_idx.push_back(static_cast<int>(k));
    if (std::isfinite(red.hi[k]))
      hi_idx.push_back(static_cast<int>(k));
  }

  // Convergence is judged on the unscaled, un-presolved problem.
  auto converged = [&](const VectorXd &xs, const VectorXd &ys, const VectorXd &zs,
                       const VectorXd &ss) {
    const auto mg = static_cast<Eigen::Index>(red.in_rows.size());
    double pres = 0.0;
    if (As.rows() > 0)
      pres = inf_norm(((As * xs - bs).array() / sc.Ea.array()).matrix());
    Eigen::Index r = 0;
    const VectorXd cx = ipm.C(xs);
    for (; r < mg; ++r)
      pres = std::max(pres, std::abs(cx[r] + ss[r] - hs[r]) / sc.Eg[r]);
    for (int k : lo_idx) {
      pres = std::max(pres, std::abs(cx[r] + ss[r] + los[k]) * sc.D[k]);
      ++r;
    }
    for (int k : hi_idx) {
      pres = std::max(pres, std::abs(cx[r] + ss[r] - his[k]) * sc.D[k]);
      ++r;
    }
    if (pres > feas_tol)
      return false;
    const VectorXd rd = Qs * xs + qs - As.transpose() * ys + ipm.Ct(zs);
    const double dres = inf_norm((rd.array() / sc.D.array()).matrix());
    if (dres > cfg.tolerance * qscale)
      return false;
    const double pobj = 0.5 * xs.dot(Qs * xs) + qs.dot(xs);
    const double gap = ss.dot(zs);
    return gap <= cfg.tolerance * std::max(1.0, std::abs(pobj + red.c0));
  };

  CoreResult core = ipm.run(converged);
  out.iterations = core.iterations;
  if (core.exit == CoreExit::FactorFailure) {
    out.status = QpStatus::NumericalFailure;
    for (int k : core.bad_pivots)
      out.culprit_columns.push_back(red.cols[static_cast<std::size_t>(k)]);
    out.message = "KKT factorization broke down after regularization retries";
    return out;
  }
  recover(core.x, core.y, core.z, lo_idx, hi_idx, out.x, out.duals);
  const Evaluated ev = evaluate(p, out.x, out.duals);
  out.objective = ev.objective;
  out.dual_objective = ev.dual_objective;
  out.residuals = ev.residuals;
  if (core.exit == CoreExit::Converged) {
    out.status = QpStatus::Optimal;
    return out;
  }

  out.status = core.exit == CoreExit::IterLimit ? QpStatus::IterLimit : QpStatus::NumericalFailure;
  if (!allow_phase1)
    return out;

  double violation = 0.0;
  QpSolution f = phase_one(p, cfg, violation);
  if (f.status == QpStatus::Optimal &&
      violation > std::max(cfg.infeasibility_tolerance * bscale, 10.0 * feas_tol)) {
    out.status = QpStatus::PrimalInfeasible;
    out.certificate.resize(p.A_eq.rows() + p.A_in.rows());
    out.certificate << f.duals.y_eq, f.duals.z_in;
    out.message = "minimum total constraint violation " + std::to_string(violation);
    return out;
  }

  // Feasible, so non-convergence comes from an unbounded objective or numerics.
  const double xn = inf_norm(out.x);
  if (xn > 1e8 && out.x.allFinite()) {
    const VectorXd ray = out.x / xn;
    bool ok = p.q.dot(ray) < 0.0 && inf_norm(p.Q * ray) <= 1e-6;
    if (p.A_eq.rows() > 0)
      ok = ok && inf_norm(p.A_eq * ray) <= 1e-6;
    if (p.A_in.rows() > 0)
      ok = ok && (p.A_in * ray).maxCoeff() <= 1e-6;
    for (Eigen::Index j = 0; j < n && ok; ++j) {
      if (std::isfinite(p.lo[j]) && ray[j] < -1e-6)
        ok = false;
      if (std::isfinite(p.hi[j]) && ray[j] > 1e-6)
        ok = false;
    }
    if (ok) {
      out.status = QpStatus::DualInfeasible;
      out.certificate = ray;
      out.message = "objective unbounded below along the certificate ray";
      return out;
    }
  }
  if (out.status == QpStatus::NumericalFailure)
    out.message = "iterates diverged on a feasible problem";
  return out;
}

} // namespace

std::string_view to_string(QpStatus s) {
  switch (s) {
  case QpStatus::Optimal:
    return "optimal";
  case QpStatus::PrimalInfeasible:
    return "primal_infeasible";
  case QpStatus::DualInfeasible:
    return "dual_infeasible";
  case QpStatus::IterLimit:
    return "iter_limit";
  case QpStatus::NumericalFailure:
    return "numerical_failure";
  }
  return "unknown";
}

void validate_qp(const QpProblem &p) {
  const Eigen::Index n = p.num_vars();
  auto need = [](bool ok, const std::string &what) {
    if (!ok)
      throw DimensionMismatch("QP dimension mismatch: " + what);
  };
  need(p.Q.rows() == n && p.Q.cols() == n, "Q must be n x n");
  need(p.A_eq.cols() == n && p.A_eq.rows() == p.b_eq.size(), "A_eq / b_eq");
  need(p.A_in.cols() == n && p.A_in.rows() == p.b_in.size(), "A_in / b_in");
  need(p.lo.size() == n && p.hi.size() == n, "bounds");

  const SparseMat asym = SparseMat(p.Q.transpose()) - p.Q;
  double qmax = 0.0;
  for (int k = 0; k < p.Q.outerSize(); ++k)
    for (SparseMat::InnerIterator it(p.Q, k); it; ++it)
      qmax = std::max(qmax, std::abs(it.value()));
  for (int k = 0; k < asym.outerSize(); ++k)
    for (SparseMat::InnerIterator it(asym, k); it; ++it)
      if (std::abs(it.value()) > 1e-12 * std::max(1.0, qmax))
        throw ValidationError("Q", "matrix is not symmetric");

  // Pivoted LDL' on the rows/columns that carry curvature.
  std::vector<int> active;
  for (int k = 0; k < p.Q.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(p.Q, k); it; ++it) {
      if (it.value() != 0.0) {
        active.push_back(k);
        break;
      }
    }
  }
  if (active.empty())
    return;
  const auto m = static_cast<Eigen::Index>(active.size());
  std::vector<int> pos(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < m; ++i)
    pos[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])] = static_cast<int>(i);
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < p.Q.outerSize(); ++k)
    for (SparseMat::InnerIterator it(p.Q, k); it; ++it)
      dense(pos[static_cast<std::size_t>(it.row())], pos[static_cast<std::size_t>(it.col())]) =
          it.value();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(dense);
  const double tol = 1e-10 * std::max(1.0, qmax);
  if (!ldlt.vectorD().allFinite() || (ldlt.vectorD().array() < -tol).any())
    throw ValidationError("Q", "matrix is not positive semidefinite");
}

QpSolution solve_qp(const QpProblem &problem, const QpConfig &config) {
  if (config.check_psd)
    validate_qp(problem);
  return solve_impl(problem, config, true);
}

QpProblem to_qp(const ProblemInstance &inst) {
  if (!inst.bilinear_terms.empty())
    throw UnsupportedVariant("instance still carries " + std::to_string(inst.bilinear_terms.size()) +
                             " bilinear terms");
  const auto n = static_cast<Eigen::Index>(inst.num_vars());
  QpProblem p;
  p.Q = inst.objective.Q;
  p.q = inst.objective.q;
  p.c0 = inst.objective.c0;
  auto rows = [n](const std::vector<LinearRow> &src, SparseMat &A, VectorXd &b) {
    Triplets t;
    b.resize(static_cast<Eigen::Index>(src.size()));
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (const auto &[j, a] : src[i].coeffs)
        t.emplace_back(static_cast<int>(i), j, a);
      b[static_cast<Eigen::Index>(i)] = src[i].rhs;
    }
    A.resize(static_cast<Eigen::Index>(src.size()), n);
    A.setFromTriplets(t.begin(), t.end());
  };
  rows(inst.eq_rows, p.A_eq, p.b_eq);
  rows(inst.ineq_rows, p.A_in, p.b_in);
  p.lo = Eigen::Map<const VectorXd>(inst.lo.data(), n);
  p.hi = Eigen::Map<const VectorXd>(inst.hi.data(), n);
  return p;
}

PriceMap extract_duals(const QpSolution &solution, const ProblemInstance &inst,
                       double base_power) {
  if (solution.status != QpStatus::Optimal)
    throw NotOptimal("prices need an optimal solution, status is " +
                     std::string(to_string(solution.status)));
  PriceMap prices;
  for (std::size_t i = 0; i < inst.eq_rows.size(); ++i) {
    const RowLabel &l = inst.eq_rows[i].label;
    const double y = solution.duals.y_eq[static_cast<Eigen::Index>(i)];
    if (l.tag == "11a" || l.tag == "1a")
      prices.heat[{l.entity, l.hour}] = y;
    else if (l.tag == "12a")
      prices.electric[{l.entity, l.hour}] = y / base_power;
  }
  // Load-node balances written as -(supply) <= -load.
  for (std::size_t i = 0; i < inst.ineq_rows.size(); ++i) {
    const RowLabel &l = inst.ineq_rows[i].label;
    if (l.tag == "11a" || l.tag == "1a")
      prices.heat[{l.entity, l.hour}] = solution.duals.z_in[static_cast<Eigen::Index>(i)];
  }
  return prices;
}

} // namespace dhsplan
