#ifndef ROBOMVO_QP_SOLVER_HPP
#define ROBOMVO_QP_SOLVER_HPP

#include <algorithm>
#include <vector>

#include "common.hpp"

namespace robomvo {

/// min 1/2 x'Qx + c'x  s.t.  A_eq x = b_eq, A_in x >= b_in, lower <= x <= upper.
struct QpProblem {
  Mat Q;
  Vec c;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;
  Vec lower;
  Vec upper;
  std::optional<Vec> x_start;
  int max_iter = 0;  // 0 picks a size-based default

  Eigen::Index size() const { return c.size(); }
};

struct QpSolution {
  Vec x;
  double objective = 0.0;
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;
  Vec nu_eq;     // L = f + nu'(A_eq x - b_eq)
  Vec lam_in;    // >= 0
  Vec lam_lower; // >= 0
  Vec lam_upper; // >= 0
  bool degenerate_hessian = false;
};

namespace detail {

struct ActiveSetResult {
  Vec x;
  Vec lam_eq;  // stationarity g = E'lam_eq + G'lam_in
  Vec lam_in;
  int iterations = 0;
  bool singular_reduced = false;
};

/// Primal active-set method started from a feasible point.
inline ActiveSetResult active_set_core(const Mat& Q, const Vec& c, const Mat& E, const Vec& e,
                                       const Mat& G, const Vec& h, Vec x, int max_iter) {
  const Eigen::Index n = c.size();
  const Eigen::Index me = E.rows();
  const Eigen::Index mi = G.rows();
  const double qscale = Q.size() > 0 ? Q.cwiseAbs().maxCoeff() : 0.0;
  const double curv_tol = 1e-11 * std::max(qscale, 1e-300);
  const int bland_after = static_cast<int>(3 * (n + mi));

  std::vector<char> in_w(static_cast<std::size_t>(mi), 0);
  std::vector<Eigen::Index> work;
  ActiveSetResult res;

  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const Eigen::Index k = me + static_cast<Eigen::Index>(work.size());
    Mat AW(k, n);
    if (me > 0) AW.topRows(me) = E;
    for (std::size_t j = 0; j < work.size(); ++j) AW.row(me + Eigen::Index(j)) = G.row(work[j]);

    Vec g = Q * x + c;
    Vec p = Vec::Zero(n);
    bool ray = false;

    Mat Z;
    if (k == 0) {
      Z = Mat::Identity(n, n);
    } else {
      Eigen::ColPivHouseholderQR<Mat> qr(AW.transpose());
      qr.setThreshold(1e-12);
      Eigen::Index rank = qr.rank();
      Mat Qf = qr.householderQ() * Mat::Identity(n, n);
      Z = Qf.rightCols(n - rank);
    }
    if (Z.cols() > 0) {
      Mat H = detail::symmetrize(Z.transpose() * Q * Z);
      Vec gz = Z.transpose() * g;
      Eigen::SelfAdjointEigenSolver<Mat> es(H);
      const Mat& U = es.eigenvectors();
      const Vec& ev = es.eigenvalues();
      Vec coef = U.transpose() * gz;
      Vec null_part = Vec::Zero(gz.size());
      Vec newton = Vec::Zero(gz.size());
      for (Eigen::Index j = 0; j < ev.size(); ++j) {
        if (ev(j) <= curv_tol) {
          null_part += coef(j) * U.col(j);
          res.singular_reduced = true;
        } else {
          newton -= (coef(j) / ev(j)) * U.col(j);
        }
      }
      const double gtol = 1e-13 * (1.0 + g.cwiseAbs().maxCoeff());
      if (null_part.size() > 0 && null_part.norm() > gtol) {
        p = -(Z * null_part);
        ray = true;
      } else {
        p = Z * newton;
      }
    }

    const double ptol = 1e-14 * (1.0 + x.cwiseAbs().maxCoeff());
    if (!ray && p.cwiseAbs().maxCoeff() <= ptol) {
      Vec lam = Vec::Zero(k);
      if (k > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(AW.transpose());
        lam = qr.solve(g);
      }
      const double ltol = 1e-13 * (1.0 + g.cwiseAbs().maxCoeff());
      Eigen::Index drop = -1;
      double most = -ltol;
      for (std::size_t j = 0; j < work.size(); ++j) {
        double l = lam(me + Eigen::Index(j));
        if (it >= bland_after) {
          if (l < -ltol && (drop < 0 || work[j] < work[drop])) drop = Eigen::Index(j);
        } else if (l < most) {
          most = l;
          drop = Eigen::Index(j);
        }
      }
      if (drop < 0) {
        res.x = x;
        res.lam_eq = lam.head(me);
        res.lam_in = Vec::Zero(mi);
        for (std::size_t j = 0; j < work.size(); ++j)
          res.lam_in(work[j]) = std::max(0.0, lam(me + Eigen::Index(j)));
        return res;
      }
      in_w[static_cast<std::size_t>(work[drop])] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    double alpha = ray ? kInf : 1.0;
    Eigen::Index block = -1;
    const double dtol = 1e-14 * (1.0 + p.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (in_w[static_cast<std::size_t>(i)]) continue;
      double gp = G.row(i).dot(p);
      if (gp < -dtol) {
        double step = std::max(0.0, (h(i) - G.row(i).dot(x)) / gp);
        if (step < alpha) {
          alpha = step;
          block = i;
        }
      }
    }
    if (!std::isfinite(alpha)) throw Error(ErrorCode::Unbounded, "objective unbounded below");
    x += alpha * p;
    if (block >= 0) {
      in_w[static_cast<std::size_t>(block)] = 1;
      work.push_back(block);
    }
  }
  throw Error(ErrorCode::MaxIterations, "active-set iteration limit reached");
}

/// Removes linearly dependent equality rows; throws if the system is inconsistent.
inline std::vector<Eigen::Index> independent_rows(const Mat& E, const Vec& e) {
  std::vector<Eigen::Index> keep;
  if (E.rows() == 0) return keep;
  Eigen::ColPivHouseholderQR<Mat> qr(E.transpose());
  qr.setThreshold(1e-12);
  Eigen::Index rank = qr.rank();
  for (Eigen::Index j = 0; j < rank; ++j) keep.push_back(qr.colsPermutation().indices()(j));
  std::sort(keep.begin(), keep.end());
  if (rank < E.rows()) {
    Vec sol = E.completeOrthogonalDecomposition().solve(e);
    double scale = 1.0 + e.cwiseAbs().maxCoeff();
    require((E * sol - e).cwiseAbs().maxCoeff() <= 1e-9 * scale, ErrorCode::Infeasible,
            "inconsistent equality constraints");
  }
  return keep;
}

}  // namespace detail

inline QpSolution solve_qp(const QpProblem& prob) {
  using detail::require;
  const Eigen::Index n = prob.size();
  require(n > 0, ErrorCode::InvalidInput, "empty QP");
  require(prob.Q.rows() == n && prob.Q.cols() == n, ErrorCode::DimensionMismatch, "Q size");
  detail::check_symmetric(prob.Q, 1e-10);
  require(prob.Q.allFinite() && prob.c.allFinite(), ErrorCode::InvalidInput, "non-finite QP data");
  if (prob.A_eq.rows() > 0)
    require(prob.A_eq.cols() == n && prob.b_eq.size() == prob.A_eq.rows(),
            ErrorCode::DimensionMismatch, "A_eq size");
  if (prob.A_in.rows() > 0)
    require(prob.A_in.cols() == n && prob.b_in.size() == prob.A_in.rows(),
            ErrorCode::DimensionMismatch, "A_in size");
  if (prob.lower.size()) require(prob.lower.size() == n, ErrorCode::DimensionMismatch, "lower size");
  if (prob.upper.size()) require(prob.upper.size() == n, ErrorCode::DimensionMismatch, "upper size");
  if (prob.lower.size() && prob.upper.size())
    require((prob.lower.array() <= prob.upper.array()).all(), ErrorCode::Infeasible,
            "lower bound exceeds upper bound");

  // Stack inequalities: general rows, finite lower bounds, finite upper bounds.
  struct Origin {
    int kind;  // 0 general, 1 lower, 2 upper
    Eigen::Index index;
  };
  std::vector<Origin> origin;
  std::vector<Vec> grows;
  std::vector<double> hvals;
  for (Eigen::Index i = 0; i < prob.A_in.rows(); ++i) {
    origin.push_back({0, i});
    grows.push_back(prob.A_in.row(i).transpose());
    hvals.push_back(prob.b_in(i));
  }
  for (Eigen::Index i = 0; i < prob.lower.size(); ++i) {
    if (!std::isfinite(prob.lower(i))) continue;
    origin.push_back({1, i});
    grows.push_back(Vec::Unit(n, i));
    hvals.push_back(prob.lower(i));
  }
  for (Eigen::Index i = 0; i < prob.upper.size(); ++i) {
    if (!std::isfinite(prob.upper(i))) continue;
    origin.push_back({2, i});
    grows.push_back(-Vec::Unit(n, i));
    hvals.push_back(-prob.upper(i));
  }
  const Eigen::Index mi = static_cast<Eigen::Index>(grows.size());
  Mat G(mi, n);
  Vec h(mi);
  for (Eigen::Index i = 0; i < mi; ++i) {
    G.row(i) = grows[static_cast<std::size_t>(i)].transpose();
    h(i) = hvals[static_cast<std::size_t>(i)];
  }

  std::vector<Eigen::Index> keep = detail::independent_rows(prob.A_eq, prob.b_eq);
  const Eigen::Index me = static_cast<Eigen::Index>(keep.size());
  Mat E(me, n);
  Vec e(me);
  for (Eigen::Index j = 0; j < me; ++j) {
    E.row(j) = prob.A_eq.row(keep[std::size_t(j)]);
    e(j) = prob.b_eq(keep[std::size_t(j)]);
  }

  const int max_iter = prob.max_iter > 0 ? prob.max_iter : static_cast<int>(100 * (n + mi) + 200);
  const double ftol = 1e-9 * (1.0 + (h.size() ? h.cwiseAbs().maxCoeff() : 0.0) +
                              (e.size() ? e.cwiseAbs().maxCoeff() : 0.0));

  auto feasible = [&](const Vec& x) {
    if (me > 0 && (E * x - e).cwiseAbs().maxCoeff() > ftol) return false;
    if (mi > 0 && (h - G * x).maxCoeff() > ftol) return false;
    return true;
  };

  // Phase 1.
  Vec x0;
  if (prob.x_start && prob.x_start->size() == n && feasible(*prob.x_start)) {
    x0 = *prob.x_start;
  } else {
    Vec xs = prob.x_start && prob.x_start->size() == n ? *prob.x_start : Vec::Zero(n);
    if (me > 0) {
      // closest point to xs on the affine set
      Vec r = E * xs - e;
      xs -= E.transpose() * (E * E.transpose()).ldlt().solve(r);
      require((E * xs - e).cwiseAbs().maxCoeff() <= ftol, ErrorCode::Infeasible,
              "equality constraints are infeasible");
    }
    if (feasible(xs)) {
      x0 = xs;
    } else {
      const Eigen::Index N = n + mi;
      Mat Q1 = Mat::Zero(N, N);
      Vec c1(N);
      c1 << Vec::Zero(n), Vec::Ones(mi);
      Mat E1(me, N);
      if (me > 0) E1 << E, Mat::Zero(me, mi);
      Mat G1(2 * mi, N);
      G1 << G, Mat::Identity(mi, mi), Mat::Zero(mi, n), Mat::Identity(mi, mi);
      Vec h1(2 * mi);
      h1 << h, Vec::Zero(mi);
      Vec start(N);
      start << xs, (h - G * xs).cwiseMax(0.0);
      auto ph1 = detail::active_set_core(Q1, c1, E1, e, G1, h1, start,
                                         static_cast<int>(100 * (N + 2 * mi) + 200));
      require(ph1.x.tail(mi).sum() <= ftol, ErrorCode::Infeasible, "constraint set is infeasible");
      x0 = ph1.x.head(n);
      // clean tiny residual violations from phase 1 round-off
      require(feasible(x0), ErrorCode::Infeasible, "constraint set is infeasible");
    }
  }

  auto core = detail::active_set_core(prob.Q, prob.c, E, e, G, h, x0, max_iter);

  QpSolution sol;
  sol.x = core.x;
  sol.iterations = core.iterations;
  sol.degenerate_hessian = core.singular_reduced;
  sol.objective = 0.5 * sol.x.dot(prob.Q * sol.x) + prob.c.dot(sol.x);
  sol.nu_eq = Vec::Zero(prob.A_eq.rows());
  for (Eigen::Index j = 0; j < me; ++j) sol.nu_eq(keep[std::size_t(j)]) = -core.lam_eq(j);
  sol.lam_in = Vec::Zero(prob.A_in.rows());
  sol.lam_lower = Vec::Zero(prob.lower.size());
  sol.lam_upper = Vec::Zero(prob.upper.size());
  for (Eigen::Index i = 0; i < mi; ++i) {
    const Origin& o = origin[std::size_t(i)];
    double l = core.lam_in(i);
    if (o.kind == 0) sol.lam_in(o.index) = l;
    else if (o.kind == 1) sol.lam_lower(o.index) = l;
    else sol.lam_upper(o.index) = l;
  }
  return sol;
}

/// Stationarity residual of a QP solution, for diagnostics and tests.
inline double kkt_residual(const QpProblem& p, const QpSolution& s) {
  Vec r = p.Q * s.x + p.c;
  if (p.A_eq.rows()) r += p.A_eq.transpose() * s.nu_eq;
  if (p.A_in.rows()) r -= p.A_in.transpose() * s.lam_in;
  if (p.lower.size()) r -= s.lam_lower;
  if (p.upper.size()) r += s.lam_upper;
  return r.cwiseAbs().maxCoeff();
}

/// Augmented problem in y = (x, d-, d+) for rho1 * ||Gamma1 (x - x0)||_1 with Gamma1 >= 0.
inline QpProblem augment_l1(const QpProblem& base, const Mat& gamma1, double rho1, const Vec& x0) {
  using detail::require;
  const Eigen::Index n = base.size();
  require(gamma1.rows() == n && gamma1.cols() == n && x0.size() == n, ErrorCode::DimensionMismatch,
          "augment_l1 dimensions");
  require((gamma1.array() >= 0.0).all(), ErrorCode::NegativeGammaEntries,
          "Gamma1 must be entrywise nonnegative; use the ADMM route");
  require(rho1 >= 0.0, ErrorCode::InvalidInput, "rho1 >= 0");
  QpProblem a;
  const Eigen::Index N = 3 * n;
  a.Q = Mat::Zero(N, N);
  a.Q.topLeftCorner(n, n) = base.Q;
  Vec w = rho1 * gamma1.transpose() * Vec::Ones(n);
  a.c.resize(N);
  a.c << base.c, w, w;

  const Eigen::Index me = base.A_eq.rows();
  a.A_eq = Mat::Zero(me + n, N);
  a.b_eq.resize(me + n);
  if (me) {
    a.A_eq.topLeftCorner(me, n) = base.A_eq;
    a.b_eq.head(me) = base.b_eq;
  }
  // x + d- - d+ = x0
  a.A_eq.block(me, 0, n, n) = Mat::Identity(n, n);
  a.A_eq.block(me, n, n, n) = Mat::Identity(n, n);
  a.A_eq.block(me, 2 * n, n, n) = -Mat::Identity(n, n);
  a.b_eq.tail(n) = x0;

  const Eigen::Index mi = base.A_in.rows();
  a.A_in = Mat::Zero(mi, N);
  if (mi) a.A_in.leftCols(n) = base.A_in;
  a.b_in = base.b_in;

  a.lower.resize(N);
  a.upper.resize(N);
  a.lower.head(n) = base.lower.size() ? base.lower : Vec::Constant(n, -kInf);
  a.upper.head(n) = base.upper.size() ? base.upper : Vec::Constant(n, kInf);
  a.lower.tail(2 * n).setZero();
  a.upper.tail(2 * n).setConstant(kInf);
  if (base.x_start && base.x_start->size() == n) {
    Vec y(N);
    const Vec& xs = *base.x_start;
    y << xs, (x0 - xs).cwiseMax(0.0), (xs - x0).cwiseMax(0.0);
    a.x_start = y;
  }
  a.max_iter = base.max_iter;
  return a;
}

/// QP in x for min 1/2 x'Qx - q'x over a ConstraintSet.
inline QpProblem make_qp(const Mat& Q, const Vec& q, const ConstraintSet& cs) {
  const Eigen::Index n = q.size();
  detail::check_constraints(cs, n);
  QpProblem p;
  p.Q = detail::symmetrize(Q);
  p.c = -q;
  detail::equality_system(cs, n, p.A_eq, p.b_eq);
  p.A_in = cs.ineq_A.rows() ? cs.ineq_A : Mat(0, n);
  p.b_in = cs.ineq_A.rows() ? cs.ineq_b : Vec(0);
  p.lower = cs.lower;
  p.upper = cs.upper;
  return p;
}

/// Converts a QP solution for make_qp into a SolveReport with split duals.
inline SolveReport to_report(const QpSolution& s, const ConstraintSet& cs) {
  SolveReport r;
  r.weights = s.x;
  r.objective = s.objective;
  r.status = s.status;
  r.iterations = s.iterations;
  r.jitter = s.degenerate_hessian;
  Duals d;
  Eigen::Index off = 0;
  if (cs.budget) {
    d.budget = s.nu_eq(0);
    off = 1;
  }
  d.eq = s.nu_eq.segment(off, s.nu_eq.size() - off);
  d.ineq = s.lam_in;
  d.lower = s.lam_lower;
  d.upper = s.lam_upper;
  r.duals = d;
  return r;
}

}  // namespace robomvo

#endif
