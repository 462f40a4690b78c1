#ifndef ROBOMVO_MVO_CORE_HPP
#define ROBOMVO_MVO_CORE_HPP

#include <functional>
#include <vector>

#include "common.hpp"
#include "market_data.hpp"
#include "qp_solver.hpp"

namespace robomvo {

struct MvoInputs {
  Vec mu;
  Mat sigma;
  double r = 0.0;

  Eigen::Index size() const { return mu.size(); }
  Vec excess() const { return mu - Vec::Constant(mu.size(), r); }
  void validate() const {
    detail::require(mu.size() > 0, ErrorCode::InvalidInput, "empty mu");
    detail::require(sigma.rows() == mu.size() && sigma.cols() == mu.size(),
                    ErrorCode::DimensionMismatch, "mu/sigma sizes");
    detail::require(mu.allFinite() && sigma.allFinite(), ErrorCode::InvalidInput,
                    "non-finite moments");
    detail::check_symmetric(sigma, 1e-12);
  }
};

inline double portfolio_return(const Vec& x, const Vec& mu) { return x.dot(mu); }
inline double portfolio_vol(const Vec& x, const Mat& sigma) {
  return std::sqrt(std::max(0.0, x.dot(sigma * x)));
}
inline double tracking_error(const Vec& x, const Vec& bench, const Mat& sigma) {
  return portfolio_vol(x - bench, sigma);
}
inline double sharpe_ratio(const Vec& x, const MvoInputs& in) {
  double v = portfolio_vol(x, in.sigma);
  detail::require(v > 0.0, ErrorCode::ZeroVolatilityPortfolio, "zero volatility");
  return (x.dot(in.mu) - in.r * x.sum()) / v;
}

namespace detail {

inline void check_invertible_covariance(const Mat& sigma) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(sigma), Eigen::EigenvaluesOnly);
  double lmax = es.eigenvalues().maxCoeff();
  double lmin = es.eigenvalues().minCoeff();
  require(lmax > 0.0 && lmin >= 1e-12 * lmax, ErrorCode::SingularCovariance,
          "covariance matrix is singular");
}

inline Vec solve_spd(const Mat& sigma, const Vec& b) {
  check_invertible_covariance(sigma);
  Eigen::LDLT<Mat> ldlt(symmetrize(sigma));
  return ldlt.solve(b);
}

inline Mat inverse_spd(const Mat& sigma) {
  check_invertible_covariance(sigma);
  Eigen::LDLT<Mat> ldlt(symmetrize(sigma));
  return ldlt.solve(Mat::Identity(sigma.rows(), sigma.cols()));
}

}  // namespace detail

/// min 1/2 x'Sigma x - gamma x'(mu - r1) over the constraint set.
inline SolveReport solve_gamma_problem(const MvoInputs& in, double gamma,
                                       const ConstraintSet& cs = {}) {
  in.validate();
  detail::require(std::isfinite(gamma), ErrorCode::InvalidInput, "gamma must be finite");
  const Vec e = in.excess();
  SolveReport rep;
  rep.gamma = gamma;
  if (cs.empty()) {
    rep.weights = gamma * detail::solve_spd(in.sigma, e);
    rep.iterations = 1;
    rep.duals = Duals{};
  } else {
    QpProblem qp = make_qp(in.sigma, gamma * e, cs);
    rep = to_report(solve_qp(qp), cs);
    rep.gamma = gamma;
  }
  const Vec& x = rep.weights;
  rep.objective = 0.5 * x.dot(in.sigma * x) - gamma * x.dot(e);
  return rep;
}

struct Target {
  enum class Kind { ExpectedReturn, Volatility, TrackingError };
  Kind kind = Kind::Volatility;
  double value = 0.0;

  static Target volatility(double v) { return {Kind::Volatility, v}; }
  static Target expected_return(double v) { return {Kind::ExpectedReturn, v}; }
  static Target tracking_error(double v) { return {Kind::TrackingError, v}; }
};

struct GammaCalibration {
  double gamma = 0.0;
  SolveReport report;
  std::vector<std::pair<double, double>> samples;  // (gamma, measure) in evaluation order
};

struct BisectionOptions {
  double tol = 1e-6;
  int max_iter = 60;
  double gamma_max = 1e6;
  /// When the measure at gamma = 0 already exceeds the target, accept gamma = 0
  /// (inequality-type targets) instead of failing.
  bool accept_zero_above = false;
};

/// Bisection on gamma for a measure nondecreasing in gamma.
inline GammaCalibration bisect_gamma(const std::function<SolveReport(double)>& solve,
                                     const std::function<double(const Vec&)>& measure,
                                     double target, const BisectionOptions& opt = {}) {
  GammaCalibration out;
  auto eval = [&](double g, SolveReport& rep) {
    rep = solve(g);
    double m = measure(rep.weights);
    out.samples.emplace_back(g, m);
    return m;
  };
  SolveReport lo_rep;
  double m0 = eval(0.0, lo_rep);
  if (m0 >= target - opt.tol) {
    if (std::abs(m0 - target) <= opt.tol || opt.accept_zero_above) {
      out.gamma = 0.0;
      out.report = lo_rep;
      return out;
    }
    throw Error(ErrorCode::TargetUnreachable, "target below the gamma = 0 solution");
  }
  double lo = 0.0, hi = 1.0;
  SolveReport hi_rep;
  double mh = eval(hi, hi_rep);
  while (mh < target - opt.tol) {
    lo = hi;
    lo_rep = hi_rep;
    hi *= 2.0;
    if (hi > opt.gamma_max) throw Error(ErrorCode::TargetUnreachable, "target not bracketed");
    mh = eval(hi, hi_rep);
  }
  if (std::abs(mh - target) <= opt.tol) {
    out.gamma = hi;
    out.report = hi_rep;
    return out;
  }
  SolveReport mid_rep = hi_rep;
  double mid = hi;
  for (int it = 0; it < opt.max_iter; ++it) {
    mid = 0.5 * (lo + hi);
    double mm = eval(mid, mid_rep);
    if (std::abs(mm - target) <= opt.tol) break;
    if (mm < target) lo = mid;
    else hi = mid;
  }
  out.gamma = mid;
  out.report = mid_rep;
  return out;
}

inline GammaCalibration calibrate_gamma(const MvoInputs& in, const Target& target,
                                        const ConstraintSet& cs = {},
                                        const BisectionOptions& opt = {}) {
  in.validate();
  detail::require(target.kind != Target::Kind::TrackingError, ErrorCode::InvalidInput,
                  "tracking-error targets need a benchmark");
  const Vec e = in.excess();
  if (cs.empty()) {
    Vec w = detail::solve_spd(in.sigma, e);
    double q = e.dot(w);
    detail::require(q > 0.0, ErrorCode::TargetUnreachable, "no risk premium");
    GammaCalibration out;
    if (target.kind == Target::Kind::Volatility) {
      detail::require(target.value >= 0.0, ErrorCode::TargetUnreachable, "negative volatility");
      out.gamma = target.value / std::sqrt(q);
    } else {
      double denom = in.mu.dot(w);
      detail::require(std::abs(denom) > 0.0, ErrorCode::TargetUnreachable, "degenerate return");
      out.gamma = target.value / denom;
      detail::require(out.gamma >= 0.0, ErrorCode::TargetUnreachable, "negative gamma");
    }
    out.report = solve_gamma_problem(in, out.gamma, cs);
    return out;
  }
  auto solve = [&](double g) { return solve_gamma_problem(in, g, cs); };
  std::function<double(const Vec&)> measure;
  BisectionOptions o = opt;
  if (target.kind == Target::Kind::Volatility) {
    measure = [&](const Vec& x) { return portfolio_vol(x, in.sigma); };
  } else {
    measure = [&](const Vec& x) { return portfolio_return(x, in.mu); };
    o.accept_zero_above = true;
  }
  return bisect_gamma(solve, measure, target.value, o);
}

inline double max_sharpe_bound(const MvoInputs& in) {
  in.validate();
  Vec e = in.excess();
  return std::sqrt(std::max(0.0, e.dot(detail::solve_spd(in.sigma, e))));
}

inline Vec implied_returns(const Vec& x0, const Mat& sigma, double r, double sharpe) {
  detail::require(x0.size() == sigma.rows(), ErrorCode::DimensionMismatch, "x0/sigma sizes");
  Vec sx = sigma * x0;
  double var = x0.dot(sx);
  detail::require(var > 0.0, ErrorCode::ZeroVolatilityPortfolio, "portfolio has zero volatility");
  return Vec::Constant(x0.size(), r) + sharpe * sx / std::sqrt(var);
}

struct StevensAsset {
  double alpha = 0, r2 = 0, s = 0, mu_hat = 0, sigma_hat = 0, omega = 0;
  double y_star = 0, z_star = 0, x_star = 0;
  Vec beta;  // regression on the other n-1 assets, in their original order
};

struct StevensReport {
  double gamma = 0.0;
  std::vector<StevensAsset> assets;
};

/// Hedging-portfolio decomposition of the unconstrained Markowitz weights.
/// Without an explicit gamma, gamma = 1 / (1' Sigma^-1 (mu - r1)).
inline StevensReport stevens_decomposition(const MvoInputs& in,
                                           std::optional<double> gamma = std::nullopt) {
  in.validate();
  detail::check_invertible_covariance(in.sigma);
  const Eigen::Index n = in.size();
  const Vec e = in.excess();
  StevensReport rep;
  if (gamma) {
    rep.gamma = *gamma;
  } else {
    double s = detail::solve_spd(in.sigma, e).sum();
    detail::require(s != 0.0, ErrorCode::InvalidInput, "zero net exposure");
    rep.gamma = 1.0 / s;
  }
  const double g = rep.gamma;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> others;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    const Eigen::Index m = n - 1;
    Mat Soo(m, m);
    Vec soi(m), eo(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      soi(a) = in.sigma(others[a], i);
      eo(a) = e(others[a]);
      for (Eigen::Index b = 0; b < m; ++b) Soo(a, b) = in.sigma(others[a], others[b]);
    }
    StevensAsset sa;
    const double var = in.sigma(i, i);
    if (m > 0) {
      sa.beta = Eigen::LDLT<Mat>(Soo).solve(soi);
      sa.r2 = soi.dot(sa.beta) / var;
    } else {
      sa.beta = Vec(0);
      sa.r2 = 0.0;
    }
    detail::require(sa.r2 < 1.0 - 1e-10, ErrorCode::PerfectCollinearity,
                    "asset is spanned by the others");
    sa.mu_hat = m > 0 ? sa.beta.dot(eo) : 0.0;
    sa.alpha = e(i) - sa.mu_hat;
    const double s2 = var * (1.0 - sa.r2);
    const double hat2 = var - s2;
    sa.s = std::sqrt(s2);
    sa.sigma_hat = std::sqrt(std::max(0.0, hat2));
    sa.omega = sa.r2 / (1.0 - sa.r2);
    sa.y_star = g * e(i) / var;
    sa.z_star = hat2 > 0.0 ? g * sa.mu_hat / hat2 : 0.0;
    sa.x_star = g * sa.alpha / s2;
    rep.assets.push_back(std::move(sa));
  }
  return rep;
}

/// R^2 of one asset regressed on the n - 1 others under constant correlation.
inline double constant_correlation_r2(int n, double rho) {
  detail::require(n >= 2, ErrorCode::InvalidInput, "n >= 2");
  const double m = n - 1;
  detail::require(rho < 1.0 && rho > -1.0 / m, ErrorCode::InvalidCorrelation,
                  "correlation outside the positive-definite range");
  return m * rho * rho / (m * rho - (rho - 1.0));
}

struct ShrinkageResult {
  Mat sigma_tilde;
  Vec vol_tilde;
  Mat corr_tilde;
};

/// Implied covariance whose budget-only optimum equals the constrained one.
inline ShrinkageResult jagannathan_ma_shrinkage(const Mat& sigma, const ConstraintSet& cs,
                                                const SolveReport& sol) {
  const Eigen::Index n = sigma.rows();
  detail::require(sol.duals.has_value(), ErrorCode::MissingDuals, "solution carries no duals");
  const Duals& d = *sol.duals;
  Vec v = Vec::Zero(n);
  if (cs.ineq_A.rows()) {
    detail::require(d.ineq.size() == cs.ineq_A.rows(), ErrorCode::MissingDuals, "inequality duals");
    v += cs.ineq_A.transpose() * d.ineq;
  }
  if (cs.lower.size()) {
    detail::require(d.lower.size() == n, ErrorCode::MissingDuals, "lower-bound duals");
    v += d.lower;
  }
  if (cs.upper.size()) {
    detail::require(d.upper.size() == n, ErrorCode::MissingDuals, "upper-bound duals");
    v -= d.upper;
  }
  ShrinkageResult out;
  const Vec one = Vec::Ones(n);
  out.sigma_tilde = sigma - (v * one.transpose() + one * v.transpose());
  out.vol_tilde = out.sigma_tilde.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.corr_tilde = correlation_from_covariance(out.sigma_tilde);
  return out;
}

/// Stationary point of 1/2 x'Sigma x - q'x subject to equalities only (direct KKT).
inline Vec kkt_equality_solve(const Mat& sigma, const Vec& q, const Mat& A, const Vec& b) {
  const Eigen::Index n = q.size(), m = A.rows();
  Mat K = Mat::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = sigma;
  if (m) {
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
  }
  Vec rhs(n + m);
  rhs << q, b;
  Eigen::FullPivLU<Mat> lu(K);
  detail::require(lu.isInvertible(), ErrorCode::SingularKKT, "KKT matrix is singular");
  return lu.solve(rhs).head(n);
}

/// Tracking-error objective mapped to an MVO problem on shifted returns.
inline MvoInputs te_transform(const Vec& mu, const Mat& sigma, const Vec& bench, double gamma) {
  detail::require(bench.size() == mu.size(), ErrorCode::DimensionMismatch, "benchmark size");
  detail::require(gamma != 0.0, ErrorCode::InvalidInput, "gamma must be nonzero");
  MvoInputs out;
  out.mu = mu + sigma * bench / gamma;
  out.sigma = sigma;
  return out;
}

}  // namespace robomvo

#endif
