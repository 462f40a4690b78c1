#ifndef ROBOMVO_CALIBRATION_HPP
#define ROBOMVO_CALIBRATION_HPP

#include <algorithm>
#include <numeric>
#include <random>

#include "common.hpp"

namespace robomvo {

/// Tikhonov regression data: beta = S X'Y with S = (X'X + rho2 Gamma2 Gamma2')^-1.
struct RidgeRegressionData {
  Mat X;
  Vec Y;
  Mat gamma2;  // empty means identity

  Eigen::Index T() const { return X.rows(); }
  Eigen::Index K() const { return X.cols(); }
  Mat gram_penalty() const {
    return gamma2.size() ? Mat(gamma2 * gamma2.transpose()) : Mat(Mat::Identity(K(), K()));
  }
  void validate() const {
    detail::require(X.rows() == Y.size() && X.rows() > 0 && X.cols() > 0,
                    ErrorCode::DimensionMismatch, "X/Y sizes");
    detail::require(X.allFinite() && Y.allFinite(), ErrorCode::InvalidInput, "non-finite data");
    if (gamma2.size())
      detail::require(gamma2.rows() == K() && gamma2.cols() == K(), ErrorCode::DimensionMismatch,
                      "Gamma2 must be K x K");
  }
  std::vector<std::string> warnings() const {
    if (T() <= K()) return {"T <= K: cross-validation is poorly determined"};
    return {};
  }
};

namespace detail {

inline Mat ridge_inverse(const Mat& XtX, const Mat& P, double rho2) {
  Mat A = XtX + rho2 * P;
  Eigen::LDLT<Mat> ldlt(A);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive() &&
              ldlt.vectorD().minCoeff() > 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()),
          ErrorCode::SingularMatrix, "X'X + rho2 Gamma2 Gamma2' is singular");
  return ldlt.solve(Mat::Identity(A.rows(), A.cols()));
}

}  // namespace detail

inline Vec ridge_beta(const RidgeRegressionData& d, double rho2) {
  d.validate();
  return detail::ridge_inverse(d.X.transpose() * d.X, d.gram_penalty(), rho2) * (d.X.transpose() * d.Y);
}

/// Closed-form leave-one-out sum of squared prediction errors.
inline double press(const RidgeRegressionData& d, double rho2) {
  d.validate();
  detail::require(rho2 >= 0.0, ErrorCode::InvalidInput, "rho2 >= 0");
  Mat S = detail::ridge_inverse(d.X.transpose() * d.X, d.gram_penalty(), rho2);
  Vec beta = S * (d.X.transpose() * d.Y);
  double total = 0.0;
  for (Eigen::Index t = 0; t < d.T(); ++t) {
    Vec xt = d.X.row(t).transpose();
    double den = 1.0 - xt.dot(S * xt);
    detail::require(den > 1e-12, ErrorCode::LeverageSingularity, "leverage value equals one");
    double e = (d.Y(t) - xt.dot(beta)) / den;
    total += e * e;
  }
  return total;
}

/// trace L(rho2) = sum_t (1 + lambda_t / rho2)^-1, lambda_t eigenvalues of X (Gamma2 Gamma2')^-1 X'.
inline double trace_l(const RidgeRegressionData& d, double rho2) {
  d.validate();
  detail::require(rho2 > 0.0, ErrorCode::InvalidInput, "rho2 > 0 for the eigenvalue trace");
  Mat P = d.gram_penalty();
  Eigen::LDLT<Mat> ldlt(P);
  detail::require(ldlt.info() == Eigen::Success && ldlt.isPositive() &&
                      ldlt.vectorD().minCoeff() > 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()),
                  ErrorCode::SingularGamma, "Gamma2 Gamma2' is singular");
  Mat M = d.X * ldlt.solve(d.X.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  double tr = 0.0;
  for (Eigen::Index t = 0; t < es.eigenvalues().size(); ++t)
    tr += 1.0 / (1.0 + std::max(0.0, es.eigenvalues()(t)) / rho2);
  return tr;
}

inline double gcv(const RidgeRegressionData& d, double rho2) {
  double tr = trace_l(d, rho2);
  detail::require(tr > 0.0, ErrorCode::InvalidInput, "trace L must be positive");
  Vec beta = ridge_beta(d, rho2);
  double rss = (d.Y - d.X * beta).squaredNorm();
  double T = double(d.T());
  return T * T * rss / (tr * tr);
}

/// Deterministic permutation: Fisher-Yates driven by mt19937_64 with rejection sampling, so the
/// result does not depend on the standard library's distribution implementations.
inline std::vector<Eigen::Index> seeded_permutation(Eigen::Index T, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(T));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = static_cast<std::uint64_t>(T); i > 1; --i) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % i;
    std::uint64_t r;
    do r = rng(); while (r >= limit);
    std::swap(idx[i - 1], idx[r % i]);
  }
  return idx;
}

/// k groups of sizes differing by at most one, cut from the seeded permutation.
inline std::vector<std::vector<Eigen::Index>> kfold_groups(Eigen::Index T, int k, std::uint64_t seed) {
  detail::require(k >= 2 && k <= T, ErrorCode::InvalidInput, "2 <= k <= T");
  auto perm = seeded_permutation(T, seed);
  std::vector<std::vector<Eigen::Index>> groups(static_cast<size_t>(k));
  Eigen::Index base = T / k, extra = T % k, pos = 0;
  for (int j = 0; j < k; ++j) {
    Eigen::Index len = base + (j < extra ? 1 : 0);
    for (Eigen::Index i = 0; i < len; ++i) groups[j].push_back(perm[static_cast<size_t>(pos++)]);
  }
  return groups;
}

struct CvCurve {
  std::vector<double> grid;
  std::vector<double> error;
  double best = 0.0;
  size_t best_index = 0;
};

namespace detail {

/// Index of the minimum; ties go to the smallest grid value.
inline size_t argmin_lowest(const std::vector<double>& grid, const std::vector<double>& err) {
  std::vector<size_t> order(grid.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return grid[a] < grid[b]; });
  size_t best = order[0];
  for (size_t i : order)
    if (err[i] < err[best]) best = i;
  return best;
}

}  // namespace detail

inline CvCurve kfold_cv(const RidgeRegressionData& d, int k, const std::vector<double>& grid,
                        std::uint64_t shuffle_seed) {
  d.validate();
  detail::require(!grid.empty(), ErrorCode::GridEmpty, "empty grid");
  auto groups = kfold_groups(d.T(), k, shuffle_seed);
  const Mat P = d.gram_penalty();
  const Mat XtX = d.X.transpose() * d.X;
  const Vec XtY = d.X.transpose() * d.Y;
  CvCurve out;
  out.grid = grid;
  for (double rho2 : grid) {
    detail::require(rho2 >= 0.0, ErrorCode::InvalidInput, "rho2 >= 0");
    double sse = 0.0;
    for (const auto& g : groups) {
      Mat A = XtX;
      Vec b = XtY;
      for (Eigen::Index t : g) {
        A -= d.X.row(t).transpose() * d.X.row(t);
        b -= d.X.row(t).transpose() * d.Y(t);
      }
      Vec beta = detail::ridge_inverse(A, P, rho2) * b;
      for (Eigen::Index t : g) {
        double e = d.Y(t) - d.X.row(t).dot(beta);
        sse += e * e;
      }
    }
    out.error.push_back(sse / double(d.T()));
  }
  out.best_index = detail::argmin_lowest(out.grid, out.error);
  out.best = out.grid[out.best_index];
  return out;
}

/// Evaluates a criterion over a grid and picks the minimizer (lowest rho on ties).
template <class F>
CvCurve grid_search(const std::vector<double>& grid, F&& criterion) {
  detail::require(!grid.empty(), ErrorCode::GridEmpty, "empty grid");
  CvCurve out;
  out.grid = grid;
  for (double r : grid) out.error.push_back(criterion(r));
  out.best_index = detail::argmin_lowest(out.grid, out.error);
  out.best = out.grid[out.best_index];
  return out;
}

struct GridSpec {
  std::string param = "rho2";
  std::string scale = "log";
  double from = 1e-4;
  double to = 1.0;
  int points = 10;

  std::vector<double> values() const {
    detail::require(points >= 1, ErrorCode::GridEmpty, "grid needs at least one point");
    detail::require(scale == "log" || scale == "linear", ErrorCode::InvalidInput,
                    "grid scale must be log or linear");
    detail::require(from <= to && std::isfinite(from) && std::isfinite(to), ErrorCode::InvalidInput,
                    "grid bounds");
    if (scale == "log") detail::require(from > 0.0, ErrorCode::InvalidInput, "log grid needs from > 0");
    std::vector<double> v;
    for (int i = 0; i < points; ++i) {
      double t = points == 1 ? 0.0 : double(i) / double(points - 1);
      v.push_back(scale == "log" ? std::exp(std::log(from) + t * (std::log(to) - std::log(from)))
                                 : from + t * (to - from));
    }
    v.back() = to;
    v.front() = from;
    return v;
  }
};

/// sigma(x | bench) = sqrt(2 (1 - rho)) sigma(bench) for a portfolio with the benchmark's volatility.
inline double max_te_from_vol(double sigma_benchmark, double correlation) {
  detail::require(correlation >= -1.0 && correlation <= 1.0, ErrorCode::InvalidCorrelation,
                  "correlation must lie in [-1, 1]");
  detail::require(sigma_benchmark >= 0.0, ErrorCode::InvalidInput, "volatility >= 0");
  return std::sqrt(2.0 * (1.0 - correlation)) * sigma_benchmark;
}

enum class StdConvention { Population, Sample };
enum class MadConvention { AllPairs, DistinctPairs };  // divide by n^2 or n (n - 1)

struct ScoreSet {
  Vec scores;
  double sigma_plus = 0.0;
  double c = 1.0 / 3.0;
  StdConvention std_convention = StdConvention::Population;
  MadConvention mad_convention = MadConvention::AllPairs;

  void validate() const {
    detail::require(scores.size() >= 2, ErrorCode::InvalidInput, "at least two scores");
    for (Eigen::Index i = 0; i < scores.size(); ++i)
      detail::require(scores(i) == std::round(scores(i)) && std::abs(scores(i)) <= 3.0,
                      ErrorCode::InvalidInput, "grades are integers in [-3, 3]");
    detail::require(sigma_plus >= 0.0, ErrorCode::InvalidInput, "sigma_plus >= 0");
  }
};

inline double score_std(const Vec& s, StdConvention conv) {
  const double n = double(s.size());
  double ss = (s.array() - s.mean()).square().sum();
  return std::sqrt(ss / (conv == StdConvention::Population ? n : n - 1.0));
}

inline double score_mad(const Vec& s, MadConvention conv) {
  const double n = double(s.size());
  double tot = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.size(); ++j) tot += std::abs(s(i) - s(j));
  return tot / (conv == MadConvention::AllPairs ? n * n : n * (n - 1.0));
}

/// Rule of thumb c ((sigma(s) + mad(s)) / 2) sigma_plus.
inline double te_level_rule(const ScoreSet& s) {
  s.validate();
  double disp = 0.5 * (score_std(s.scores, s.std_convention) + score_mad(s.scores, s.mad_convention));
  return s.c * disp * s.sigma_plus;
}

}  // namespace robomvo

#endif
