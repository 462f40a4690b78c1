#ifndef ROBOMVO_ADMM_ENGINE_HPP
#define ROBOMVO_ADMM_ENGINE_HPP

#include <functional>
#include <random>

#include "common.hpp"
#include "mvo_core.hpp"
#include "prox_ops.hpp"
#include "qp_solver.hpp"
#include "regularizers.hpp"

namespace robomvo {

struct AdmmParams {
  double phi0 = 1.0;
  double mu = 1e3;
  double tau_up = 2.0;
  double tau_down = 2.0;
  double eps_primal = 1e-10;
  double eps_dual = 1e-10;
  int max_iter = 10000;
  bool adaptive = true;
  bool strict = false;  // throw MaxIterations instead of reporting it
  int restarts = 5;
  std::uint64_t seed = 42;

  void validate() const {
    detail::require(phi0 > 0 && mu > 0 && eps_primal > 0 && eps_dual > 0 && max_iter > 0,
                    ErrorCode::InvalidInput, "ADMM parameters must be positive");
    detail::require(tau_up >= 1.0 && tau_down >= 1.0, ErrorCode::InvalidInput, "tau >= 1");
    detail::require(restarts >= 1, ErrorCode::InvalidInput, "restarts >= 1");
  }
};

struct AdmmState {
  Vec x, z, u;  // u is the scaled dual lambda / phi
  double phi = 1.0;
  double r_norm = kInf;
  double s_norm = kInf;
  int iter = 0;
  SolveStatus status = SolveStatus::MaxIter;
};

/// Returns phi after the residual-balancing rule.
inline double adaptive_penalty(double phi, double r_norm, double s_norm, const AdmmParams& p) {
  double r2 = r_norm * r_norm, s2 = s_norm * s_norm;
  if (r2 > p.mu * s2) return p.tau_up * phi;
  if (s2 > p.mu * r2) return phi / p.tau_down;
  return phi;
}

/// x_update(z, u, phi) = argmin f(x) + phi/2 ||Ax + Bz - c + u||^2
/// z_update(x, u, phi) = argmin g(z) + phi/2 ||Ax + Bz - c + u||^2
using AdmmXUpdate = std::function<Vec(const Vec& z, const Vec& u, double phi)>;
using AdmmZUpdate = std::function<Vec(const Vec& x, const Vec& u, double phi)>;

inline AdmmState admm_solve(const AdmmXUpdate& x_update, const AdmmZUpdate& z_update,
                            const Mat& A, const Mat& B, const Vec& c, const AdmmParams& params,
                            const Vec& z0, const Vec& u0 = Vec()) {
  params.validate();
  detail::require(A.rows() == c.size() && B.rows() == c.size() && z0.size() == B.cols(),
                  ErrorCode::DimensionMismatch, "ADMM coupling dimensions");
  AdmmState st;
  st.phi = params.phi0;
  st.z = z0;
  st.u = u0.size() ? u0 : Vec(Vec::Zero(c.size()));
  const Mat AtB = A.transpose() * B;
  for (st.iter = 1; st.iter <= params.max_iter; ++st.iter) {
    st.x = x_update(st.z, st.u, st.phi);
    Vec z_prev = st.z;
    st.z = z_update(st.x, st.u, st.phi);
    Vec r = A * st.x + B * st.z - c;
    st.u += r;
    st.r_norm = r.norm();
    st.s_norm = st.phi * (AtB * (st.z - z_prev)).norm();
    if (!std::isfinite(st.r_norm) || !std::isfinite(st.s_norm) || st.r_norm > 1e12 ||
        st.s_norm > 1e12) {
      st.status = SolveStatus::Diverged;
      throw Error(ErrorCode::NumericalDivergence, "ADMM residuals diverged");
    }
    if (st.r_norm <= params.eps_primal && st.s_norm <= params.eps_dual) {
      st.status = SolveStatus::Converged;
      return st;
    }
    if (params.adaptive) {
      double phi_new = adaptive_penalty(st.phi, st.r_norm, st.s_norm, params);
      if (phi_new != st.phi) {
        st.u *= st.phi / phi_new;
        st.phi = phi_new;
      }
    }
  }
  st.iter = params.max_iter;
  st.status = SolveStatus::MaxIter;
  if (params.strict) throw Error(ErrorCode::MaxIterations, "ADMM reached max_iter");
  return st;
}

/// 1/2 x'Qx - q'x + c0
struct Quadratic {
  Mat Q;
  Vec q;
  double c0 = 0.0;

  static Quadratic from_least_squares(const Mat& a1, const Vec& b1) {
    detail::require(a1.rows() == b1.size(), ErrorCode::DimensionMismatch, "A1/b1 sizes");
    return {a1.transpose() * a1, a1.transpose() * b1, 0.5 * b1.squaredNorm()};
  }
  static Quadratic from_mvo(const MvoInputs& in, double gamma) {
    in.validate();
    return {in.sigma, gamma * in.excess(), 0.0};
  }
  Eigen::Index size() const { return q.size(); }
  double value(const Vec& x) const { return 0.5 * x.dot(Q * x) - q.dot(x) + c0; }
  /// Adds rho/2 ||Gamma (x - x0)||^2.
  Quadratic plus_l2(const PenaltySpec& pen) const {
    const Eigen::Index n = size();
    pen.validate(n);
    detail::require(pen.kind == PenaltySpec::Kind::L2, ErrorCode::InvalidInput, "L2 penalty expected");
    Mat G = pen.gamma_or_identity(n);
    Vec a = pen.anchor_or_zero(n);
    Mat GtG = G.transpose() * G;
    return {Q + pen.rho * GtG, q + pen.rho * GtG * a, c0 + 0.5 * pen.rho * a.dot(GtG * a)};
  }
};

/// One g-term of the composite objective, applied to Gamma (x - anchor).
struct AdmmBlock {
  enum class Kind { Penalty, Sparse };
  Kind kind = Kind::Penalty;
  PenaltySpec penalty;  // L1 or Lp; the Gamma and anchor fields are used for both kinds
  int n1 = 0;

  static AdmmBlock from_penalty(PenaltySpec p) { return {Kind::Penalty, std::move(p), 0}; }
  static AdmmBlock sparse(int n1, Mat gamma = {}, Vec anchor = {}) {
    PenaltySpec p;
    p.gamma = std::move(gamma);
    p.anchor = std::move(anchor);
    return {Kind::Sparse, std::move(p), n1};
  }
};

struct CompositeProblem {
  Quadratic f;
  std::vector<AdmmBlock> blocks;
  ConstraintSet constraints;          // equalities go to the x-step, the rest is projected
  std::vector<ConvexSet> extra_sets;  // e.g. leverage balls
};

namespace detail {

struct CompositeLayout {
  Mat A;  // stacked Gamma_k and the identity block
  Vec c;
  std::vector<Eigen::Index> offset;
  bool has_set = false;
  Eigen::Index set_offset = 0;
  std::vector<ConvexSet> sets;
  Mat E;  // equality rows kept in the x-step
  Vec e;
};

inline CompositeLayout composite_layout(const CompositeProblem& pb) {
  const Eigen::Index n = pb.f.size();
  CompositeLayout L;
  const ConstraintSet& cs = pb.constraints;
  check_constraints(cs, n);
  Mat E;
  Vec e;
  equality_system(cs, n, E, e);
  auto keep = independent_rows(E, e);
  L.E.resize(static_cast<Eigen::Index>(keep.size()), n);
  L.e.resize(static_cast<Eigen::Index>(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i) {
    L.E.row(i) = E.row(keep[i]);
    L.e(i) = e(keep[i]);
  }
  if (cs.lower.size() || cs.upper.size()) {
    Vec lo = cs.lower.size() ? cs.lower : Vec(Vec::Constant(n, -kInf));
    Vec hi = cs.upper.size() ? cs.upper : Vec(Vec::Constant(n, kInf));
    L.sets.push_back(ConvexSet::box(lo, hi));
  }
  for (Eigen::Index i = 0; i < cs.ineq_A.rows(); ++i)
    L.sets.push_back(ConvexSet::halfspace(-cs.ineq_A.row(i).transpose(), -cs.ineq_b(i)));
  for (const auto& s : pb.extra_sets) L.sets.push_back(s);
  L.has_set = !L.sets.empty();

  Eigen::Index rows = 0;
  for (const auto& b : pb.blocks) {
    Mat G = b.penalty.gamma_or_identity(n);
    require(G.cols() == n, ErrorCode::DimensionMismatch, "block Gamma columns");
    L.offset.push_back(rows);
    rows += G.rows();
  }
  L.set_offset = rows;
  if (L.has_set) rows += n;
  require(rows > 0, ErrorCode::InvalidInput, "composite problem has no splitting block");
  L.A = Mat::Zero(rows, n);
  L.c = Vec::Zero(rows);
  for (size_t k = 0; k < pb.blocks.size(); ++k) {
    Mat G = pb.blocks[k].penalty.gamma_or_identity(n);
    L.A.middleRows(L.offset[k], G.rows()) = G;
    L.c.segment(L.offset[k], G.rows()) = G * pb.blocks[k].penalty.anchor_or_zero(n);
  }
  if (L.has_set) L.A.middleRows(L.set_offset, n).setIdentity();
  return L;
}

inline Vec project_sets(const Vec& v, const std::vector<ConvexSet>& sets) {
  if (sets.size() == 1) return project(v, sets[0]);
  return project(v, ConvexSet::intersection(sets));
}

inline double block_value(const AdmmBlock& b, const Vec& x) {
  if (b.kind == AdmmBlock::Kind::Sparse) return 0.0;
  return b.penalty.value(x);
}

}  // namespace detail

struct CompositeResult {
  SolveReport report;
  AdmmState state;
};

/// min f(x) + sum_k g_k(Gamma_k (x - a_k)) over the constraint set, by ADMM with the splitting
/// z_k = Gamma_k (x - a_k) and, when inequality-type constraints exist, z_set = x.
inline CompositeResult solve_composite(const CompositeProblem& pb, const AdmmParams& params,
                                       const Vec& x_start = Vec(), const AdmmState* warm = nullptr) {
  params.validate();
  const Eigen::Index n = pb.f.size();
  detail::require(pb.f.Q.rows() == n && pb.f.Q.cols() == n, ErrorCode::DimensionMismatch, "Q size");
  for (const auto& b : pb.blocks) {
    if (b.kind == AdmmBlock::Kind::Penalty) {
      b.penalty.validate(n);
      detail::require(b.penalty.order() >= 1.0, ErrorCode::NonConvexOrder, "p >= 1 required");
    } else {
      detail::require(b.n1 >= 1, ErrorCode::InvalidInput, "n1 >= 1");
    }
  }
  auto L = detail::composite_layout(pb);
  const Eigen::Index m = L.E.rows(), rows = L.A.rows();
  const Mat AtA = L.A.transpose() * L.A;

  double cached_phi = -1.0;
  Eigen::PartialPivLU<Mat> lu;
  AdmmXUpdate xup = [&](const Vec& z, const Vec& u, double phi) -> Vec {
    if (phi != cached_phi) {
      Mat K = Mat::Zero(n + m, n + m);
      K.topLeftCorner(n, n) = pb.f.Q + phi * AtA;
      if (m) {
        K.topRightCorner(n, m) = L.E.transpose();
        K.bottomLeftCorner(m, n) = L.E;
      }
      lu.compute(K);
      cached_phi = phi;
    }
    Vec rhs(n + m);
    rhs.head(n) = pb.f.q + phi * L.A.transpose() * (z + L.c - u);
    rhs.tail(m) = L.e;
    return lu.solve(rhs).head(n);
  };
  AdmmZUpdate zup = [&](const Vec& x, const Vec& u, double phi) -> Vec {
    Vec v = L.A * x - L.c + u;
    Vec z(rows);
    for (size_t k = 0; k < pb.blocks.size(); ++k) {
      const auto& b = pb.blocks[k];
      Eigen::Index len = (k + 1 < pb.blocks.size() ? L.offset[k + 1] : L.set_offset) - L.offset[k];
      Vec vk = v.segment(L.offset[k], len);
      if (b.kind == AdmmBlock::Kind::Sparse) {
        z.segment(L.offset[k], len) = project_cardinality(vk, b.n1, Vec::Constant(len, -kInf),
                                                          Vec::Constant(len, kInf));
      } else if (b.penalty.order() == 1.0) {
        z.segment(L.offset[k], len) = prox_l1(vk, b.penalty.rho / phi);
      } else {
        z.segment(L.offset[k], len) = prox_lp(vk, b.penalty.rho / phi, b.penalty.order());
      }
    }
    if (L.has_set) z.segment(L.set_offset, n) = detail::project_sets(v.segment(L.set_offset, n), L.sets);
    return z;
  };

  Vec xs = x_start.size() ? x_start : Vec(Vec::Zero(n));
  detail::require(xs.size() == n, ErrorCode::DimensionMismatch, "start size");
  Mat B = -Mat::Identity(rows, rows);
  CompositeResult out;
  if (warm && warm->z.size() == rows && warm->u.size() == rows && warm->phi > 0.0) {
    AdmmParams p = params;
    p.phi0 = warm->phi;
    out.state = admm_solve(xup, zup, L.A, B, L.c, p, warm->z, warm->u);
  } else {
    Vec z0 = zup(xs, Vec::Zero(rows), params.phi0);
    out.state = admm_solve(xup, zup, L.A, B, L.c, params, z0);
  }
  SolveReport& rep = out.report;
  rep.weights = out.state.x;
  rep.status = out.state.status;
  rep.iterations = out.state.iter;
  rep.r_norm = out.state.r_norm;
  rep.s_norm = out.state.s_norm;
  rep.objective = pb.f.value(rep.weights);
  for (const auto& b : pb.blocks) rep.objective += detail::block_value(b, rep.weights);
  return out;
}

namespace detail {

inline Quadratic fold_l2(const Quadratic& f, const PenaltySpec& l2) {
  if (l2.rho == 0.0) return f;
  return f.plus_l2(l2);
}

}  // namespace detail

/// min f(x) + rho2/2 ||Gamma2 (x - x0)||^2 over constraints and extra convex sets.
inline SolveReport solve_tikhonov_constrained(const Quadratic& f, const PenaltySpec& l2,
                                              const ConstraintSet& cs,
                                              const std::vector<ConvexSet>& sets = {},
                                              const AdmmParams& params = {}) {
  CompositeProblem pb{detail::fold_l2(f, l2), {}, cs, sets};
  auto L = detail::composite_layout(pb);
  if (!L.has_set) {
    // only equalities: the x-step is the solution
    auto sol = detail::solve_block_kkt(pb.f.Q, pb.f.q, L.E, L.e);
    SolveReport rep;
    rep.weights = sol.x;
    rep.objective = f.value(sol.x) + (l2.rho != 0.0 ? l2.value(sol.x) : 0.0);
    rep.iterations = 1;
    rep.r_norm = rep.s_norm = 0.0;
    return rep;
  }
  auto res = solve_composite(pb, params);
  res.report.objective = f.value(res.report.weights) + (l2.rho != 0.0 ? l2.value(res.report.weights) : 0.0);
  return res.report;
}

inline SolveReport solve_tikhonov_constrained(const Mat& a1, const Vec& b1, const PenaltySpec& l2,
                                              const ConstraintSet& cs,
                                              const std::vector<ConvexSet>& sets = {},
                                              const AdmmParams& params = {}) {
  return solve_tikhonov_constrained(Quadratic::from_least_squares(a1, b1), l2, cs, sets, params);
}

/// min f(x) + rho2/2 ||Gamma2 (x - x0)||^2 + (rho_p/p) ||Gamma_p (x - x0)||_p^p.
inline SolveReport solve_mixed_lp(const Quadratic& f, const PenaltySpec& l2, const PenaltySpec& lp,
                                  const ConstraintSet& cs, const std::vector<ConvexSet>& sets = {},
                                  const AdmmParams& params = {}, const Vec& x_start = Vec()) {
  detail::require(lp.order() >= 1.0, ErrorCode::NonConvexOrder, "p >= 1 required");
  Quadratic g = detail::fold_l2(f, l2);
  CompositeProblem pb{g, {AdmmBlock::from_penalty(lp)}, cs, sets};
  auto res = solve_composite(pb, params, x_start);
  const Vec& x = res.report.weights;
  res.report.objective = f.value(x) + (l2.rho != 0.0 ? l2.value(x) : 0.0) + lp.value(x);
  return res.report;
}

inline SolveReport solve_mixed_lp(const Mat& a1, const Vec& b1, const PenaltySpec& l2,
                                  const PenaltySpec& lp, const ConstraintSet& cs,
                                  const std::vector<ConvexSet>& sets = {},
                                  const AdmmParams& params = {}) {
  return solve_mixed_lp(Quadratic::from_least_squares(a1, b1), l2, lp, cs, sets, params);
}

namespace detail {

/// Exact minimizer of f over the constraints with Gamma1 (x - x0) zero off the support.
inline std::optional<QpSolution> polish_support(const Quadratic& f, const ConstraintSet& cs,
                                                const Mat& G, const Vec& x0,
                                                const std::vector<Eigen::Index>& off) {
  ConstraintSet c = cs;
  const Eigen::Index n = f.size();
  Eigen::Index m0 = c.eq_A.rows();
  Mat A(m0 + static_cast<Eigen::Index>(off.size()), n);
  Vec b(A.rows());
  if (m0) {
    A.topRows(m0) = c.eq_A;
    b.head(m0) = c.eq_b;
  }
  for (size_t i = 0; i < off.size(); ++i) {
    A.row(m0 + i) = G.row(off[i]);
    b(m0 + i) = G.row(off[i]).dot(x0);
  }
  c.eq_A = A;
  c.eq_b = b;
  try {
    auto sol = solve_qp(make_qp(f.Q, f.q, c));
    if (sol.status != SolveStatus::Converged) return std::nullopt;
    return sol;
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline Vec feasible_point(const Vec& target, const ConstraintSet& cs) {
  const Eigen::Index n = target.size();
  auto sol = solve_qp(make_qp(Mat::Identity(n, n), target, cs));
  return sol.x;
}

}  // namespace detail

/// min f(x) + rho2/2 ||Gamma2 (x - x0)||^2 with Gamma1 (x - x0) at most n1-sparse.
inline SolveReport solve_cardinality(const Quadratic& f, const PenaltySpec& l2, const Mat& gamma1,
                                     const Vec& x0, int n1, const ConstraintSet& cs,
                                     const AdmmParams& params = {}) {
  params.validate();
  const Eigen::Index n = f.size();
  Mat G = gamma1.size() ? gamma1 : Mat(Mat::Identity(n, n));
  Vec a = x0.size() ? x0 : Vec(Vec::Zero(n));
  detail::require(G.cols() == n && a.size() == n, ErrorCode::DimensionMismatch, "Gamma1/x0 size");
  detail::require(n1 >= 1, ErrorCode::InvalidInput, "n1 >= 1");
  Quadratic g = detail::fold_l2(f, l2);

  std::vector<Vec> starts;
  starts.push_back(a);
  Vec ew = Vec::Constant(n, (cs.budget ? *cs.budget : 1.0) / double(n));
  starts.push_back(ew);
  try {
    starts.push_back(solve_qp(make_qp(g.Q, g.q, cs)).x);
  } catch (const Error&) {
    starts.push_back(ew);
  }
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> N(0.0, 1.0);
  while (static_cast<int>(starts.size()) < params.restarts) {
    Vec r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = ew(i) + N(rng) / double(n);
    try {
      starts.push_back(detail::feasible_point(r, cs));
    } catch (const Error&) {
      starts.push_back(r);
    }
  }
  starts.resize(static_cast<size_t>(params.restarts));

  CompositeProblem pb{g, {AdmmBlock::sparse(n1, G, a)}, cs, {}};
  std::optional<SolveReport> best;
  int failures = 0;
  std::vector<std::string> notes;
  for (size_t k = 0; k < starts.size(); ++k) {
    try {
      AdmmParams p = params;
      p.strict = false;
      auto res = solve_composite(pb, p, starts[k]);
      // support from the sparse block
      Vec z = res.state.z.head(G.rows());
      std::vector<Eigen::Index> off;
      for (Eigen::Index i = 0; i < z.size(); ++i)
        if (z(i) == 0.0) off.push_back(i);
      auto pol = detail::polish_support(g, cs, G, a, off);
      notes.push_back("restart " + std::to_string(k) + ": admm " +
                      (res.state.status == SolveStatus::Converged ? "converged" : "max_iter") +
                      " in " + std::to_string(res.state.iter) + (pol ? ", polished" : ", polish failed"));
      if (!pol) {
        ++failures;
        continue;
      }
      SolveReport rep;
      rep.weights = pol->x;
      rep.objective = f.value(pol->x) + (l2.rho != 0.0 ? l2.value(pol->x) : 0.0);
      rep.iterations = res.state.iter;
      rep.r_norm = res.state.r_norm;
      rep.s_norm = res.state.s_norm;
      rep.status = SolveStatus::Converged;
      if (!best || rep.objective < best->objective - 1e-14) best = rep;
    } catch (const Error& e) {
      ++failures;
      notes.push_back("restart " + std::to_string(k) + ": " + e.what());
    }
  }
  detail::require(best.has_value(), ErrorCode::NoConvergence, "all cardinality restarts failed");
  best->notes = notes;
  return *best;
}

inline SolveReport solve_cardinality(const Mat& a1, const Vec& b1, const PenaltySpec& l2,
                                     const Mat& gamma1, const Vec& x0, int n1,
                                     const ConstraintSet& cs, const AdmmParams& params = {}) {
  return solve_cardinality(Quadratic::from_least_squares(a1, b1), l2, gamma1, x0, n1, cs, params);
}

}  // namespace robomvo

#endif
