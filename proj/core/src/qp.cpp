#include "mpopf/qp.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mpopf {

namespace {

// Inequality system A x + s = b assembled from C rows plus finite bound
// rows; fixed variables (lo == hi) become extra equality rows so the
// inequality interior stays nonempty. Bound rows are singletons: rows
// >= orig_ineq_rows touch exactly bound_var[r] with coefficient +-1,
// which the factorizations exploit.
struct Folded {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::MatrixXd E;
  Eigen::VectorXd eb;
  int orig_eq_rows = 0;
  int orig_ineq_rows = 0;
  std::vector<int> bound_var;     // for rows beyond orig_ineq_rows
  std::vector<int> lower_row_of;  // var -> row in A, -1 if none
  std::vector<int> upper_row_of;
  std::vector<int> fixed_row_of;  // var -> row in E, -1 if none
};

void validate(const ConvexQP& qp) {
  const int n = qp.num_vars();
  auto fail = [](const std::string& what) { throw std::invalid_argument("solve_qp: " + what); };
  if (qp.H.rows() != n || qp.H.cols() != n) fail("H dimension mismatch");
  if (qp.lo.size() != n || qp.hi.size() != n) fail("bound dimension mismatch");
  if (qp.E.size() > 0 && qp.E.cols() != n) fail("E column count mismatch");
  if (qp.E.rows() != qp.eb.size()) fail("E/eb row mismatch");
  if (qp.C.size() > 0 && qp.C.cols() != n) fail("C column count mismatch");
  if (qp.C.rows() != qp.cb.size()) fail("C/cb row mismatch");
  if (!qp.c.allFinite() || !qp.H.allFinite()) fail("nonfinite objective data");
  if (qp.E.size() > 0 && (!qp.E.allFinite() || !qp.eb.allFinite())) fail("nonfinite equality data");
  if (qp.C.size() > 0 && !qp.C.allFinite()) fail("nonfinite inequality matrix");
  for (int i = 0; i < n; ++i) {
    if (std::isnan(qp.lo(i)) || std::isnan(qp.hi(i))) fail("NaN bound");
    if (qp.lo(i) > qp.hi(i)) fail("crossed bounds");
  }
}

Folded fold(const ConvexQP& qp) {
  const int n = qp.num_vars();
  const int mc = static_cast<int>(qp.C.rows());
  Folded f;
  f.orig_eq_rows = static_cast<int>(qp.E.rows());
  f.orig_ineq_rows = mc;
  f.lower_row_of.assign(n, -1);
  f.upper_row_of.assign(n, -1);
  f.fixed_row_of.assign(n, -1);

  int bound_rows = 0, fixed_rows = 0;
  for (int i = 0; i < n; ++i) {
    if (qp.lo(i) == qp.hi(i)) {
      ++fixed_rows;
    } else {
      if (std::isfinite(qp.lo(i))) ++bound_rows;
      if (std::isfinite(qp.hi(i))) ++bound_rows;
    }
  }

  f.A.setZero(mc + bound_rows, n);
  f.b.resize(mc + bound_rows);
  if (mc > 0) {
    f.A.topRows(mc) = qp.C;
    f.b.head(mc) = qp.cb;
  }
  int r = mc;
  for (int i = 0; i < n; ++i) {
    if (qp.lo(i) == qp.hi(i)) continue;
    if (std::isfinite(qp.lo(i))) {
      f.A(r, i) = -1.0;
      f.b(r) = -qp.lo(i);
      f.bound_var.push_back(i);
      f.lower_row_of[i] = r++;
    }
    if (std::isfinite(qp.hi(i))) {
      f.A(r, i) = 1.0;
      f.b(r) = qp.hi(i);
      f.bound_var.push_back(i);
      f.upper_row_of[i] = r++;
    }
  }

  f.E.setZero(f.orig_eq_rows + fixed_rows, n);
  f.eb.resize(f.orig_eq_rows + fixed_rows);
  if (f.orig_eq_rows > 0) {
    f.E.topRows(f.orig_eq_rows) = qp.E;
    f.eb.head(f.orig_eq_rows) = qp.eb;
  }
  r = f.orig_eq_rows;
  for (int i = 0; i < n; ++i) {
    if (qp.lo(i) == qp.hi(i)) {
      f.E(r, i) = 1.0;
      f.eb(r) = qp.lo(i);
      f.fixed_row_of[i] = r++;
    }
  }
  return f;
}

// Factors the reduced KKT matrix
//   [ H + dp I + A' W A   E' ]
//   [ E                  -dd I ]
// densely or sparsely depending on size.
class KktSolver {
 public:
  KktSolver(const Eigen::MatrixXd& H, const Folded& f, bool use_sparse)
      : H_(H), f_(f), sparse_(use_sparse) {
    n_ = static_cast<int>(H.rows());
    me_ = static_cast<int>(f.E.rows());
    if (sparse_) {
      Hs_ = H.sparseView(1.0, 1e-300);
      As_ = f.A.sparseView(1.0, 1e-300);
      Es_ = f.E.sparseView(1.0, 1e-300);
    }
  }

  bool factor(const Eigen::VectorXd& w, double dp, double dd) {
    const int dim = n_ + me_;
    if (sparse_) {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<size_t>(Hs_.nonZeros() + As_.nonZeros() * 4 + Es_.nonZeros() + dim));
      for (int k = 0; k < Hs_.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(Hs_, k); it; ++it) {
          trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
      }
      for (int i = 0; i < n_; ++i) trips.emplace_back(i, i, dp);
      // A' W A accumulated row by row of A
      Eigen::SparseMatrix<double, Eigen::RowMajor> Ar(As_);
      for (int r = 0; r < Ar.rows(); ++r) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator i1(Ar, r); i1; ++i1) {
          for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator i2(Ar, r); i2; ++i2) {
            trips.emplace_back(static_cast<int>(i1.col()), static_cast<int>(i2.col()),
                               w(r) * i1.value() * i2.value());
          }
        }
      }
      for (int k = 0; k < Es_.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(Es_, k); it; ++it) {
          trips.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
          trips.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()), it.value());
        }
      }
      for (int i = 0; i < me_; ++i) trips.emplace_back(n_ + i, n_ + i, -dd);
      Eigen::SparseMatrix<double> K(dim, dim);
      K.setFromTriplets(trips.begin(), trips.end());
      if (!pattern_done_) {
        sldlt_.analyzePattern(K);
        pattern_done_ = true;
      }
      sldlt_.factorize(K);
      return sldlt_.info() == Eigen::Success;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(dim, dim);
    K.topLeftCorner(n_, n_) = H_;
    K.topLeftCorner(n_, n_).diagonal().array() += dp;
    const int mg = f_.orig_ineq_rows;
    if (mg > 0) {
      K.topLeftCorner(n_, n_).noalias() +=
          f_.A.topRows(mg).transpose() * w.head(mg).asDiagonal() * f_.A.topRows(mg);
    }
    for (size_t k = 0; k < f_.bound_var.size(); ++k) {
      const int i = f_.bound_var[k];
      K(i, i) += w(mg + static_cast<int>(k));
    }
    if (me_ > 0) {
      K.topRightCorner(n_, me_) = f_.E.transpose();
      K.bottomLeftCorner(me_, n_) = f_.E;
      K.bottomRightCorner(me_, me_).diagonal().array() = -dd;
    }
    dldlt_.compute(K);
    return dldlt_.info() == Eigen::Success;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    return sparse_ ? Eigen::VectorXd(sldlt_.solve(rhs)) : Eigen::VectorXd(dldlt_.solve(rhs));
  }

 private:
  const Eigen::MatrixXd& H_;
  const Folded& f_;
  bool sparse_ = false;
  bool pattern_done_ = false;
  int n_ = 0, me_ = 0;
  Eigen::SparseMatrix<double> Hs_, As_, Es_;
  Eigen::LDLT<Eigen::MatrixXd> dldlt_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> sldlt_;
};

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (int i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  }
  return a;
}

// Active-set refinement of a converged interior point: rows with z > s are
// pinned as equalities and the reduced KKT system is re-solved, recovering
// machine-precision primal/dual values that the barrier path only approaches.
// Misidentified rows (negative multiplier or violated slack) are corrected
// over a few passes; if the set never settles the interior point is kept.
void polish(const ConvexQP& qp, const Eigen::MatrixXd& H, const Folded& f,
            const QpOptions& opts, Eigen::VectorXd& x, Eigen::VectorXd& y, Eigen::VectorXd& z,
            Eigen::VectorXd& s) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(f.A.rows());
  const int me = static_cast<int>(f.E.rows());
  const double hscale = std::max(1.0, H.size() > 0 ? H.cwiseAbs().maxCoeff() : 1.0);

  std::vector<char> active(static_cast<size_t>(m), 0);
  for (int i = 0; i < m; ++i) active[static_cast<size_t>(i)] = z(i) > s(i) ? 1 : 0;
  // a lower and an upper bound row of the same variable cannot both bind
  for (int i = 0; i < n; ++i) {
    const int lr = f.lower_row_of[static_cast<size_t>(i)];
    const int ur = f.upper_row_of[static_cast<size_t>(i)];
    if (lr >= 0 && ur >= 0 && active[static_cast<size_t>(lr)] && active[static_cast<size_t>(ur)]) {
      active[static_cast<size_t>(z(lr) >= z(ur) ? ur : lr)] = 0;
    }
  }

  for (int pass = 0; pass < 8; ++pass) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i) {
      if (active[static_cast<size_t>(i)]) act.push_back(i);
    }
    const int ma = static_cast<int>(act.size());

    Folded g;
    g.A.resize(0, n);
    g.b.resize(0);
    g.E.resize(me + ma, n);
    g.eb.resize(me + ma);
    if (me > 0) {
      g.E.topRows(me) = f.E;
      g.eb.head(me) = f.eb;
    }
    for (int k = 0; k < ma; ++k) {
      g.E.row(me + k) = f.A.row(act[static_cast<size_t>(k)]);
      g.eb(me + k) = f.b(act[static_cast<size_t>(k)]);
    }

    KktSolver kkt(H, g, n + me + ma > opts.sparse_threshold);
    Eigen::VectorXd rhs(n + me + ma);
    rhs.head(n) = -qp.c;
    rhs.tail(me + ma) = g.eb;

    Eigen::VectorXd xp, yp, zp;
    bool solved = false;
    double delta = 1e-12 * hscale;
    for (int attempt = 0; attempt < 4 && !solved; ++attempt, delta *= 1e3) {
      if (!kkt.factor(Eigen::VectorXd(), delta, delta)) continue;
      const Eigen::VectorXd xy = kkt.solve(rhs);
      if (!xy.allFinite()) continue;
      xp = xy.head(n);
      yp = xy.segment(n, me);
      zp = xy.tail(ma);
      const double xs = 1.0 + xp.cwiseAbs().maxCoeff();
      if ((H * xp + qp.c + g.E.transpose() * xy.tail(me + ma)).cwiseAbs().maxCoeff() <=
              1e-8 * hscale * xs &&
          (me + ma == 0 || (g.E * xp - g.eb).cwiseAbs().maxCoeff() <= 1e-8 * xs)) {
        solved = true;
      }
    }
    if (!solved) return;

    const double xs = 1.0 + xp.cwiseAbs().maxCoeff();
    bool changed = false;
    for (int k = 0; k < ma; ++k) {
      if (zp(k) < -1e-9 * (1.0 + zp.cwiseAbs().maxCoeff())) {
        active[static_cast<size_t>(act[static_cast<size_t>(k)])] = 0;
        changed = true;
      }
    }
    if (!changed && m > 0) {
      const Eigen::VectorXd viol = f.A * xp - f.b;
      for (int i = 0; i < m; ++i) {
        if (!active[static_cast<size_t>(i)] && viol(i) > 1e-9 * xs) {
          active[static_cast<size_t>(i)] = 1;
          changed = true;
        }
      }
    }
    if (!changed) {
      x = xp;
      y = yp;
      z.setZero(m);
      for (int k = 0; k < ma; ++k) z(act[static_cast<size_t>(k)]) = std::max(zp(k), 0.0);
      s = (f.b - f.A * x).cwiseMax(0.0);
      return;
    }
  }
}

QpSolution solve_ipm(const ConvexQP& qp, const QpOptions& opts);

// Feasibility check through an elastic program: every row gets a
// nonnegative slack that absorbs its violation, and the slack total is
// minimized. A strictly positive optimum certifies infeasibility.
bool elastics_detect_infeasible(const ConvexQP& qp, const QpOptions& opts) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(qp.E.rows());
  const int mc = static_cast<int>(qp.C.rows());
  ConvexQP p = ConvexQP::sized(n + 2 * me + mc);
  p.lo.head(n) = qp.lo;
  p.hi.head(n) = qp.hi;
  p.lo.tail(2 * me + mc).setZero();
  p.c.tail(2 * me + mc).setOnes();
  if (me > 0) {
    p.E.setZero(me, p.num_vars());
    p.E.leftCols(n) = qp.E;
    p.E.block(0, n, me, me) = Eigen::MatrixXd::Identity(me, me);
    p.E.block(0, n + me, me, me) = -Eigen::MatrixXd::Identity(me, me);
    p.eb = qp.eb;
  }
  if (mc > 0) {
    p.C.setZero(mc, p.num_vars());
    p.C.leftCols(n) = qp.C;
    p.C.rightCols(mc) = -Eigen::MatrixXd::Identity(mc, mc);
    p.cb = qp.cb;
  }
  QpOptions sub = opts;
  sub.max_iterations = std::max(opts.max_iterations, 100);
  const QpSolution sol = solve_ipm(p, sub);
  if (sol.status != QpStatus::Optimal) return false;  // inconclusive
  const double scale = 1.0 + (me > 0 ? qp.eb.cwiseAbs().maxCoeff() : 0.0) +
                       (mc > 0 ? qp.cb.cwiseAbs().maxCoeff() : 0.0);
  return sol.objective > 1e-7 * scale;
}

// Searches for a recession direction r with Er = 0, Cr <= 0, Hr = 0 and
// c'r < 0 inside the unit box restricted to the cone of the bounds.
bool recession_detect_unbounded(const ConvexQP& qp, const QpOptions& opts) {
  const int n = qp.num_vars();
  ConvexQP p = ConvexQP::sized(n);
  p.c = qp.c;
  for (int i = 0; i < n; ++i) {
    p.lo(i) = std::isfinite(qp.lo(i)) ? 0.0 : -1.0;
    p.hi(i) = std::isfinite(qp.hi(i)) ? 0.0 : 1.0;
  }
  std::vector<int> hrows;
  for (int i = 0; i < n; ++i) {
    if (qp.H.row(i).cwiseAbs().maxCoeff() > 0.0) hrows.push_back(i);
  }
  const int me = static_cast<int>(qp.E.rows());
  p.E.setZero(me + static_cast<int>(hrows.size()), n);
  p.eb.setZero(p.E.rows());
  if (me > 0) p.E.topRows(me) = qp.E;
  for (size_t k = 0; k < hrows.size(); ++k) p.E.row(me + static_cast<int>(k)) = qp.H.row(hrows[k]);
  if (qp.C.rows() > 0) {
    p.C = qp.C;
    p.cb.setZero(qp.C.rows());
  }
  QpOptions sub = opts;
  sub.tolerance = std::max(opts.tolerance, 1e-9);
  const QpSolution sol = solve_ipm(p, sub);
  return sol.status == QpStatus::Optimal && sol.objective < -1e-8;
}

QpSolution classify_failure(const ConvexQP& qp, const QpOptions& opts, QpSolution partial) {
  if (elastics_detect_infeasible(qp, opts)) {
    partial.status = QpStatus::Infeasible;
    partial.message = "elastic feasibility program has positive optimum";
    return partial;
  }
  if (recession_detect_unbounded(qp, opts)) {
    partial.status = QpStatus::Unbounded;
    partial.message = "improving recession direction found";
    return partial;
  }
  return partial;
}

// Equality-constrained (or unconstrained) case: one regularized KKT solve.
QpSolution solve_equality_only(const ConvexQP& qp, const Folded& f, const QpOptions& opts) {
  const int n = qp.num_vars();
  const int me = static_cast<int>(f.E.rows());
  QpSolution sol;
  const Eigen::MatrixXd H = 0.5 * (qp.H + qp.H.transpose());
  const double hscale = std::max(1.0, H.size() > 0 ? H.cwiseAbs().maxCoeff() : 1.0);
  KktSolver kkt(H, f, n + me > opts.sparse_threshold);
  Eigen::VectorXd rhs(n + me);
  rhs.head(n) = -qp.c;
  rhs.tail(me) = f.eb;
  double delta = 1e-10 * hscale;
  for (int attempt = 0; attempt < 6; ++attempt, delta *= 100.0) {
    if (!kkt.factor(Eigen::VectorXd(), delta, delta)) continue;
    const Eigen::VectorXd xy = kkt.solve(rhs);
    if (!xy.allFinite()) continue;
    const Eigen::VectorXd x = xy.head(n);
    const Eigen::VectorXd y = xy.tail(me);
    const double rd = (H * x + qp.c + f.E.transpose() * y).cwiseAbs().maxCoeff();
    const double rp = me > 0 ? (f.E * x - f.eb).cwiseAbs().maxCoeff() : 0.0;
    const double xs = 1.0 + x.cwiseAbs().maxCoeff();
    if (rd <= 1e-7 * hscale * xs && rp <= 1e-7 * xs) {
      sol.status = QpStatus::Optimal;
      sol.x = x;
      sol.objective = 0.5 * x.dot(H * x) + qp.c.dot(x);
      sol.y = y.head(f.orig_eq_rows);
      sol.z.resize(0);
      sol.zl.setZero(n);
      sol.zu.setZero(n);
      return sol;
    }
  }
  sol.x.setZero(n);
  sol.status = QpStatus::IterationLimit;
  return classify_failure(qp, opts, std::move(sol));
}

QpSolution solve_ipm(const ConvexQP& qp, const QpOptions& opts) {
  const int n = qp.num_vars();
  QpSolution sol;
  if (n == 0) {
    sol.status = QpStatus::Optimal;
    sol.x.resize(0);
    sol.y.resize(qp.E.rows());
    sol.y.setZero();
    sol.z.resize(qp.C.rows());
    sol.z.setZero();
    return sol;
  }
  for (int r = 0; r < qp.cb.size(); ++r) {
    if (qp.cb(r) == -kInf) {
      sol.status = QpStatus::Infeasible;
      sol.message = "inequality row with -inf right-hand side";
      sol.x.setZero(n);
      return sol;
    }
  }

  const Folded f = fold(qp);
  const int m = static_cast<int>(f.A.rows());
  const int me = static_cast<int>(f.E.rows());
  if (m == 0) return solve_equality_only(qp, f, opts);

  const Eigen::MatrixXd H = 0.5 * (qp.H + qp.H.transpose());
  const double hscale = std::max(1.0, H.cwiseAbs().maxCoeff());

  // Interior-ish starting point.
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    const double lo = qp.lo(i), hi = qp.hi(i);
    if (lo == hi) {
      x(i) = lo;
    } else if (std::isfinite(lo) && std::isfinite(hi)) {
      x(i) = 0.5 * (lo + hi);
    } else if (std::isfinite(lo)) {
      x(i) = lo + 1.0;
    } else if (std::isfinite(hi)) {
      x(i) = hi - 1.0;
    } else {
      x(i) = 0.0;
    }
  }
  Eigen::VectorXd s = f.b - f.A * x;
  for (int i = 0; i < m; ++i) s(i) = std::max(s(i), 1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);

  KktSolver kkt(H, f, n + me > opts.sparse_threshold);
  const double obj_scale = 1.0 + qp.c.cwiseAbs().maxCoeff();
  const double rhs_scale = 1.0 + std::max(me > 0 ? f.eb.cwiseAbs().maxCoeff() : 0.0,
                                          f.b.cwiseAbs().maxCoeff());

  // All residuals on one scale: the largest of primal, dual, and
  // complementarity violation, each relative to its natural magnitude.
  auto score_at = [&]() {
    const Eigen::VectorXd rd = H * x + qp.c + f.E.transpose() * y + f.A.transpose() * z;
    const double prim = std::max(me > 0 ? (f.E * x - f.eb).cwiseAbs().maxCoeff() : 0.0,
                                 (f.A * x + s - f.b).cwiseAbs().maxCoeff());
    const double mu = s.dot(z) / m;
    return std::max({prim / rhs_scale,
                     rd.cwiseAbs().maxCoeff() / (obj_scale * (1.0 + x.cwiseAbs().maxCoeff())),
                     mu / (1.0 + std::abs(0.5 * x.dot(H * x) + qp.c.dot(x)))});
  };
  auto converged = [&](double tol) { return score_at() <= tol; };

  // Highly degenerate constraint sets (stacks of almost-parallel rows) can
  // leave the dual residual bouncing among active rows long after mu and
  // the primal residual are at machine level. Remember the best iterate;
  // if nothing improves for a stretch, stop and fall back to it.
  struct Snapshot {
    Eigen::VectorXd x, s, z, y;
    double score = kInf;
    int iter = -1;
  } best;

  double delta_base = 1e-9 * hscale;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    sol.iterations = iter;
    const Eigen::VectorXd rd = H * x + qp.c + f.E.transpose() * y + f.A.transpose() * z;
    const Eigen::VectorXd rpe = me > 0 ? Eigen::VectorXd(f.E * x - f.eb) : Eigen::VectorXd();
    const Eigen::VectorXd rpi = f.A * x + s - f.b;

    const double score = score_at();
    if (score <= opts.tolerance) {
      sol.status = QpStatus::Optimal;
      break;
    }
    if (x.cwiseAbs().maxCoeff() > 1e10 || !x.allFinite()) {
      sol.status = QpStatus::IterationLimit;
      sol.message = "iterates diverged";
      break;
    }
    if (score < 0.999 * best.score) {
      best = Snapshot{x, s, z, y, score, iter};
    } else if (iter - best.iter >= 60) {
      sol.status = QpStatus::IterationLimit;
      sol.message = "progress stalled";
      break;
    }
    const double mu = s.dot(z) / m;

    // Capped barrier weights: degenerate active sets can crash a slack many
    // orders of magnitude before the duals settle, and an uncapped z/s then
    // poisons the KKT conditioning.
    const Eigen::VectorXd w = z.cwiseQuotient(s).cwiseMin(1e16);
    bool ok = false;
    double dp = delta_base, dd = delta_base;
    for (int attempt = 0; attempt < 5 && !ok; ++attempt, dp *= 100.0, dd *= 100.0) {
      ok = kkt.factor(w, dp, dd);
    }
    if (!ok) {
      sol.status = QpStatus::IterationLimit;
      sol.message = "KKT factorization failed";
      break;
    }

    auto solve_step = [&](const Eigen::VectorXd& rc) {
      Eigen::VectorXd rhs(n + me);
      rhs.head(n) = -rd - f.A.transpose() * ((z.cwiseProduct(rpi) - rc).cwiseQuotient(s));
      if (me > 0) rhs.tail(me) = -rpe;
      const Eigen::VectorXd dxy = kkt.solve(rhs);
      struct Dir {
        Eigen::VectorXd dx, dy, ds, dz;
      } d;
      d.dx = dxy.head(n);
      d.dy = me > 0 ? Eigen::VectorXd(dxy.tail(me)) : Eigen::VectorXd();
      d.ds = -rpi - f.A * d.dx;
      d.dz = w.cwiseProduct(f.A * d.dx) + (z.cwiseProduct(rpi) - rc).cwiseQuotient(s);
      return d;
    };

    // Affine-scaling direction, then centering parameter from its progress.
    const auto aff = solve_step(z.cwiseProduct(s));
    const double ap_aff = max_step(s, aff.ds);
    const double ad_aff = max_step(z, aff.dz);
    const double mu_aff = (s + ap_aff * aff.ds).dot(z + ad_aff * aff.dz) / m;
    double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    const Eigen::VectorXd rc =
        z.cwiseProduct(s) + aff.dz.cwiseProduct(aff.ds) - Eigen::VectorXd::Constant(m, sigma * mu);
    const auto dir = solve_step(rc);
    if (!dir.dx.allFinite() || !dir.ds.allFinite() || !dir.dz.allFinite()) {
      sol.status = QpStatus::IterationLimit;
      sol.message = "step direction not finite";
      break;
    }

    const double tau = 0.995;
    const double ap = std::min(1.0, tau * max_step(s, dir.ds));
    const double ad = std::min(1.0, tau * max_step(z, dir.dz));
    x += ap * dir.dx;
    s += ap * dir.ds;
    z += ad * dir.dz;
    if (me > 0) y += ad * dir.dy;
    // The floor is far below the primal tolerance, so it never masks a real
    // residual; it only stops underflow feeding the weight cap above.
    s = s.cwiseMax(1e-14 * rhs_scale);
  }

  if (sol.status != QpStatus::Optimal && best.iter >= 0 &&
      (!x.allFinite() || best.score < score_at())) {
    x = best.x;
    s = best.s;
    z = best.z;
    y = best.y;
  }
  if (sol.status != QpStatus::Optimal && x.allFinite() && converged(2e-6)) {
    sol.status = QpStatus::Optimal;
    sol.message = "accepted at relaxed tolerance";
  }
  if (sol.status == QpStatus::Optimal) polish(qp, H, f, opts, x, y, z, s);

  sol.x = x;
  sol.objective = 0.5 * x.dot(H * x) + qp.c.dot(x);
  sol.y = me > 0 ? Eigen::VectorXd(y.head(f.orig_eq_rows)) : Eigen::VectorXd();
  sol.z = z.head(f.orig_ineq_rows);
  sol.zl.setZero(n);
  sol.zu.setZero(n);
  for (int i = 0; i < n; ++i) {
    if (f.lower_row_of[i] >= 0) sol.zl(i) = z(f.lower_row_of[i]);
    if (f.upper_row_of[i] >= 0) sol.zu(i) = z(f.upper_row_of[i]);
    if (f.fixed_row_of[i] >= 0) {
      const double yf = y(f.fixed_row_of[i]);
      sol.zl(i) = std::max(-yf, 0.0);
      sol.zu(i) = std::max(yf, 0.0);
    }
  }
  return sol;
}

}  // namespace

ConvexQP ConvexQP::sized(int n) {
  ConvexQP qp;
  qp.H = Eigen::MatrixXd::Zero(n, n);
  qp.c = Eigen::VectorXd::Zero(n);
  qp.lo = Eigen::VectorXd::Constant(n, -kInf);
  qp.hi = Eigen::VectorXd::Constant(n, kInf);
  qp.E.resize(0, n);
  qp.eb.resize(0);
  qp.C.resize(0, n);
  qp.cb.resize(0);
  return qp;
}

QpSolution solve_qp(const ConvexQP& qp, const QpOptions& opts) {
  validate(qp);
  QpSolution sol = solve_ipm(qp, opts);
  if (sol.status == QpStatus::IterationLimit) sol = classify_failure(qp, opts, std::move(sol));
  return sol;
}

int QpBuilder::add_var(double lo, double hi, double linear_cost) {
  lo_.push_back(lo);
  hi_.push_back(hi);
  c_.push_back(linear_cost);
  return static_cast<int>(lo_.size()) - 1;
}

void QpBuilder::add_quad(int i, int j, double coeff) { quad_.emplace_back(i, j, coeff); }

void QpBuilder::add_linear(int i, double coeff) { c_.at(static_cast<size_t>(i)) += coeff; }

void QpBuilder::add_eq(const std::vector<std::pair<int, double>>& terms, double rhs) {
  eqs_.emplace_back(terms, rhs);
}

void QpBuilder::add_le(const std::vector<std::pair<int, double>>& terms, double rhs) {
  les_.emplace_back(terms, rhs);
}

void QpBuilder::add_ge(const std::vector<std::pair<int, double>>& terms, double lhs) {
  std::vector<std::pair<int, double>> neg(terms);
  for (auto& t : neg) t.second = -t.second;
  les_.emplace_back(std::move(neg), -lhs);
}

void QpBuilder::set_bounds(int i, double lo, double hi) {
  lo_.at(static_cast<size_t>(i)) = lo;
  hi_.at(static_cast<size_t>(i)) = hi;
}

ConvexQP QpBuilder::build() const {
  const int n = num_vars();
  ConvexQP qp = ConvexQP::sized(n);
  for (int i = 0; i < n; ++i) {
    qp.lo(i) = lo_[static_cast<size_t>(i)];
    qp.hi(i) = hi_[static_cast<size_t>(i)];
    qp.c(i) = c_[static_cast<size_t>(i)];
  }
  for (const auto& [i, j, v] : quad_) {
    if (i == j) {
      qp.H(i, i) += 2.0 * v;
    } else {
      qp.H(i, j) += v;
      qp.H(j, i) += v;
    }
  }
  qp.E.setZero(eqs_.size(), n);
  qp.eb.resize(eqs_.size());
  for (size_t r = 0; r < eqs_.size(); ++r) {
    for (const auto& [i, v] : eqs_[r].first) qp.E(static_cast<int>(r), i) += v;
    qp.eb(static_cast<int>(r)) = eqs_[r].second;
  }
  qp.C.setZero(les_.size(), n);
  qp.cb.resize(les_.size());
  for (size_t r = 0; r < les_.size(); ++r) {
    for (const auto& [i, v] : les_[r].first) qp.C(static_cast<int>(r), i) += v;
    qp.cb(static_cast<int>(r)) = les_[r].second;
  }
  return qp;
}

}  // namespace mpopf
