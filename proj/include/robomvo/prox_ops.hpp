#ifndef ROBOMVO_PROX_OPS_HPP
#define ROBOMVO_PROX_OPS_HPP

#include <algorithm>
#include <memory>
#include <numeric>
#include <variant>
#include <vector>

#include "common.hpp"

namespace robomvo {

struct BoxSet {
  Vec lo, hi;
};
struct HyperplaneSet {  // a'x = b
  Vec a;
  double b = 0.0;
};
struct HalfspaceSet {  // a'x <= b
  Vec a;
  double b = 0.0;
};
struct AffineSet {  // Ax = b
  Mat A;
  Vec b;
};
struct L1Ball {
  double c = 1.0;
};
struct L2Ball {
  double c = 1.0;
};
struct LinfBall {
  double c = 1.0;
};
struct SimplexSet {  // x >= 0, 1'x = budget
  double budget = 1.0;
};
struct CardinalitySet {  // at most n1 nonzeros, then clipped to [lo, hi]
  int n1 = 1;
  Vec lo, hi;
};
struct ConvexSet;
struct IntersectionSet {
  std::vector<ConvexSet> sets;
};

struct ConvexSet {
  std::variant<BoxSet, HyperplaneSet, HalfspaceSet, AffineSet, L1Ball, L2Ball, LinfBall, SimplexSet,
               CardinalitySet, IntersectionSet>
      kind;

  static ConvexSet whole_space(Eigen::Index n) {
    return {BoxSet{Vec::Constant(n, -kInf), Vec::Constant(n, kInf)}};
  }
  static ConvexSet box(Vec lo, Vec hi) { return {BoxSet{std::move(lo), std::move(hi)}}; }
  static ConvexSet hyperplane(Vec a, double b) { return {HyperplaneSet{std::move(a), b}}; }
  static ConvexSet halfspace(Vec a, double b) { return {HalfspaceSet{std::move(a), b}}; }
  static ConvexSet affine(Mat A, Vec b) { return {AffineSet{std::move(A), std::move(b)}}; }
  static ConvexSet l1_ball(double c) { return {L1Ball{c}}; }
  static ConvexSet l2_ball(double c) { return {L2Ball{c}}; }
  static ConvexSet linf_ball(double c) { return {LinfBall{c}}; }
  static ConvexSet simplex(double budget = 1.0) { return {SimplexSet{budget}}; }
  static ConvexSet cardinality(int n1, Vec lo, Vec hi) {
    return {CardinalitySet{n1, std::move(lo), std::move(hi)}};
  }
  static ConvexSet intersection(std::vector<ConvexSet> sets) {
    return {IntersectionSet{std::move(sets)}};
  }
};

inline Vec prox_l1(const Vec& v, double lam) {
  detail::require(std::isfinite(lam) && lam >= 0.0, ErrorCode::InvalidInput, "lambda >= 0");
  return v.unaryExpr([lam](double x) {
    double m = std::abs(x) - lam;
    return m > 0.0 ? std::copysign(m, x) : 0.0;
  });
}

namespace detail {

// Root of lam x^(p-1) + x = a on [0, a].
inline double lp_root(double a, double lam, double p) {
  if (a == 0.0 || lam == 0.0) return a;
  auto f = [&](double x) { return lam * std::pow(x, p - 1.0) + x - a; };
  double hi = std::min(a, std::pow(a / lam, 1.0 / (p - 1.0)));
  double lo = 0.0;
  const double tol = 1e-14 * std::max(1.0, a);
  if (p >= 2.0) {
    double x = hi;
    for (int it = 0; it < 100; ++it) {
      double fx = f(x);
      if (std::abs(fx) <= tol) return x;
      double d = lam * (p - 1.0) * std::pow(x, p - 2.0) + 1.0;
      double nx = x - fx / d;
      if (!(nx > lo && nx <= hi)) break;
      x = nx;
    }
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if (fm > 0.0) hi = mid;
    else lo = mid;
    if (hi - lo <= 4e-16 * hi) break;
  }
  return std::abs(f(lo)) < std::abs(f(hi)) ? lo : hi;
}

}  // namespace detail

/// Proximal map of (lam/p)|x|^p, the odd inverse of lam x^(p-1) + x.
inline Vec prox_lp(const Vec& v, double lam, double p) {
  detail::require(p >= 1.0, ErrorCode::NonConvexOrder, "p < 1 has no unique proximal map");
  detail::require(std::isfinite(lam) && lam >= 0.0, ErrorCode::InvalidInput, "lambda >= 0");
  if (p == 1.0) return prox_l1(v, lam);
  if (p == 2.0) return v / (1.0 + lam);
  Vec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double a = std::abs(v(i));
    double x;
    if (p == 3.0 && lam > 0.0) x = (-0.5 + std::sqrt(0.25 + lam * a)) / lam;
    else x = detail::lp_root(a, lam, p);
    out(i) = std::copysign(x, v(i));
  }
  return out;
}

inline Vec project_simplex(const Vec& v, double budget = 1.0) {
  detail::require(budget >= 0.0, ErrorCode::EmptySet, "negative simplex budget");
  const Eigen::Index n = v.size();
  if (budget == 0.0) return Vec::Zero(n);
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cum += u[std::size_t(j)];
    double t = (cum - budget) / double(j + 1);
    if (u[std::size_t(j)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

inline Vec project_l1_ball(const Vec& v, double c) {
  detail::require(c > 0.0, ErrorCode::InvalidInput, "radius must be positive");
  if (v.lpNorm<1>() <= c) return v;
  Vec w = project_simplex(v.cwiseAbs(), c);
  return w.cwiseProduct(v.unaryExpr([](double x) { return x < 0.0 ? -1.0 : 1.0; }));
}

/// Bisection on the soft-threshold level; cross-check for the sort-based projection.
inline Vec project_l1_ball_bisection(const Vec& v, double c) {
  if (v.lpNorm<1>() <= c) return v;
  double lo = 0.0, hi = v.cwiseAbs().maxCoeff();
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (prox_l1(v, mid).lpNorm<1>() > c) lo = mid;
    else hi = mid;
  }
  return prox_l1(v, 0.5 * (lo + hi));
}

inline Vec project_cardinality(const Vec& v, int n1, const Vec& lo, const Vec& hi) {
  const Eigen::Index n = v.size();
  detail::require(n1 >= 1 && n1 <= n, ErrorCode::InvalidInput, "n1 must be in [1, n]");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(v(a)) > std::abs(v(b)); });
  Vec out = Vec::Zero(n);
  for (int k = 0; k < n1; ++k) out(idx[std::size_t(k)]) = v(idx[std::size_t(k)]);
  if (lo.size()) out = out.cwiseMax(lo);
  if (hi.size()) out = out.cwiseMin(hi);
  return out;
}

inline Vec project(const Vec& v, const ConvexSet& set);

namespace detail {

inline Vec dykstra(const Vec& v, const std::vector<ConvexSet>& sets, int max_sweeps = 500,
                   double tol = 1e-12) {
  if (sets.empty()) return v;
  if (sets.size() == 1) return project(v, sets[0]);
  std::vector<Vec> incr(sets.size(), Vec::Zero(v.size()));
  Vec x = v;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Vec prev = x;
    double change = 0.0;
    for (std::size_t k = 0; k < sets.size(); ++k) {
      Vec y = project(x + incr[k], sets[k]);
      Vec ni = x + incr[k] - y;
      change += (ni - incr[k]).squaredNorm();
      incr[k] = ni;
      x = y;
    }
    if ((x - prev).squaredNorm() <= tol * tol && change <= tol * tol) break;
  }
  return x;
}

}  // namespace detail

inline Vec project(const Vec& v, const ConvexSet& set) {
  using detail::require;
  const Eigen::Index n = v.size();
  return std::visit(
      [&](const auto& s) -> Vec {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxSet>) {
          require(s.lo.size() == n && s.hi.size() == n, ErrorCode::DimensionMismatch, "box size");
          return v.cwiseMax(s.lo).cwiseMin(s.hi);
        } else if constexpr (std::is_same_v<T, HyperplaneSet>) {
          double aa = s.a.squaredNorm();
          require(aa > 0.0, ErrorCode::EmptySet, "zero hyperplane normal");
          return v - ((s.a.dot(v) - s.b) / aa) * s.a;
        } else if constexpr (std::is_same_v<T, HalfspaceSet>) {
          double d = s.a.dot(v) - s.b;
          if (d <= 0.0) return v;
          double aa = s.a.squaredNorm();
          require(aa > 0.0, ErrorCode::EmptySet, "empty halfspace");
          return v - (d / aa) * s.a;
        } else if constexpr (std::is_same_v<T, AffineSet>) {
          Eigen::CompleteOrthogonalDecomposition<Mat> cod(s.A);
          Vec x = v - cod.solve(s.A * v - s.b);
          double scale = 1.0 + s.b.cwiseAbs().maxCoeff();
          require((s.A * x - s.b).cwiseAbs().maxCoeff() <= 1e-9 * scale, ErrorCode::EmptySet,
                  "inconsistent affine system");
          return x;
        } else if constexpr (std::is_same_v<T, L1Ball>) {
          return project_l1_ball(v, s.c);
        } else if constexpr (std::is_same_v<T, L2Ball>) {
          double nv = v.norm();
          return nv <= s.c ? v : Vec(v * (s.c / nv));
        } else if constexpr (std::is_same_v<T, LinfBall>) {
          return v.cwiseMax(-s.c).cwiseMin(s.c);
        } else if constexpr (std::is_same_v<T, SimplexSet>) {
          return project_simplex(v, s.budget);
        } else if constexpr (std::is_same_v<T, CardinalitySet>) {
          return project_cardinality(v, s.n1, s.lo, s.hi);
        } else {
          return detail::dykstra(v, s.sets);
        }
      },
      set.kind);
}

/// prox of lam * ||.||_p through the dual-ball projection.
inline Vec prox_norm_moreau(const Vec& v, double lam, double p) {
  detail::require(lam > 0.0, ErrorCode::InvalidInput, "lambda > 0");
  Vec w = v / lam;
  Vec proj;
  if (p == 1.0) proj = w.cwiseMax(-1.0).cwiseMin(1.0);
  else if (p == 2.0) proj = project(w, ConvexSet::l2_ball(1.0));
  else if (std::isinf(p)) proj = project_l1_ball(w, 1.0);
  else throw Error(ErrorCode::InvalidInput, "p must be 1, 2 or inf");
  return v - lam * proj;
}

/// Projection onto {a'x = b} intersected with a convex set through a 1-D root search.
inline Vec project_hyperplane_intersection(const Vec& v, const Vec& a, double b,
                                           const ConvexSet& inner) {
  auto h = [&](double lam) { return a.dot(project(Vec(v - lam * a), inner)); };
  const double tol = 1e-10;
  double h0 = h(0.0);
  if (std::abs(h0 - b) <= 1e-14) return project(v, inner);
  double lo, hi;
  double step = 1.0;
  if (h0 > b) {
    lo = 0.0;
    hi = step;
    int k = 0;
    while (h(hi) > b) {
      lo = hi;
      hi *= 2.0;
      if (++k > 200) throw Error(ErrorCode::EmptyIntersection, "root bracket failed");
    }
  } else {
    hi = 0.0;
    lo = -step;
    int k = 0;
    while (h(lo) < b) {
      hi = lo;
      lo *= 2.0;
      if (++k > 200) throw Error(ErrorCode::EmptyIntersection, "root bracket failed");
    }
  }
  // h is nonincreasing: h(lo) >= b >= h(hi)
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    mid = 0.5 * (lo + hi);
    double hm = h(mid);
    if (std::abs(hm - b) <= 1e-14 * (1.0 + std::abs(b))) break;
    if (hm > b) lo = mid;
    else hi = mid;
    if (hi - lo <= 1e-17 * (1.0 + std::abs(mid))) break;
  }
  Vec x = project(Vec(v - mid * a), inner);
  if (std::abs(a.dot(x) - b) > tol)
    throw Error(ErrorCode::EmptyIntersection, "hyperplane does not meet the set");
  return x;
}

}  // namespace robomvo

#endif
