#ifndef ROBOMVO_COMMON_HPP
#define ROBOMVO_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace robomvo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  DimensionMismatch,
  DegeneratePanel,
  InvalidInput,
  NotSymmetric,
  NotPositiveDefinite,
  SingularMatrix,
  SingularCovariance,
  SingularKKT,
  SingularGamma,
  SingularViewCovariance,
  PerfectCollinearity,
  InvalidCorrelation,
  ZeroVolatilityPortfolio,
  MissingDuals,
  Infeasible,
  Unbounded,
  MaxIterations,
  NumericalDivergence,
  NoConvergence,
  TargetUnreachable,
  NonConvexOrder,
  EmptySet,
  EmptyIntersection,
  AllSingularValuesFiltered,
  NegativeGammaEntries,
  LeverageSingularity,
  GridEmpty,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegeneratePanel: return "DegeneratePanel";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SingularKKT: return "SingularKKT";
    case ErrorCode::SingularGamma: return "SingularGamma";
    case ErrorCode::SingularViewCovariance: return "SingularViewCovariance";
    case ErrorCode::PerfectCollinearity: return "PerfectCollinearity";
    case ErrorCode::InvalidCorrelation: return "InvalidCorrelation";
    case ErrorCode::ZeroVolatilityPortfolio: return "ZeroVolatilityPortfolio";
    case ErrorCode::MissingDuals: return "MissingDuals";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::TargetUnreachable: return "TargetUnreachable";
    case ErrorCode::NonConvexOrder: return "NonConvexOrder";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::AllSingularValuesFiltered: return "AllSingularValuesFiltered";
    case ErrorCode::NegativeGammaEntries: return "NegativeGammaEntries";
    case ErrorCode::LeverageSingularity: return "LeverageSingularity";
    case ErrorCode::GridEmpty: return "GridEmpty";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class SolveStatus { Converged, MaxIter, Diverged, Failed };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIter: return "max_iter";
    case SolveStatus::Diverged: return "diverged";
    case SolveStatus::Failed: return "failed";
  }
  return "unknown";
}

/// Multipliers attached to a solution.
///
/// Equality multipliers follow L = f + nu'(Ax - b). Inequality and bound
/// multipliers are nonnegative with L = f - lambda'(Ax - b) for Ax >= b,
/// L = f - lambda_lo'(x - lo) - lambda_up'(up - x) for the box.
struct Duals {
  std::optional<double> budget;
  Vec eq;
  Vec ineq;
  Vec lower;
  Vec upper;
};

struct SolveReport {
  Vec weights;
  double objective = 0.0;
  double gamma = 0.0;
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;
  double r_norm = 0.0;
  double s_norm = 0.0;
  std::optional<Duals> duals;
  bool jitter = false;
  std::vector<std::string> notes;

  bool converged() const { return status == SolveStatus::Converged; }
};

/// Feasible set used by the MVO and QP layers. Empty members are absent.
struct ConstraintSet {
  std::optional<double> budget;
  Vec lower;  // size 0 or n, -inf allowed
  Vec upper;  // size 0 or n, +inf allowed
  Mat eq_A;
  Vec eq_b;
  Mat ineq_A;  // rows mean ineq_A x >= ineq_b
  Vec ineq_b;

  bool empty() const {
    return !budget && lower.size() == 0 && upper.size() == 0 && eq_A.rows() == 0 &&
           ineq_A.rows() == 0;
  }
  bool equality_only() const {
    return lower.size() == 0 && upper.size() == 0 && ineq_A.rows() == 0;
  }

  static ConstraintSet budget_only(double b = 1.0) {
    ConstraintSet c;
    c.budget = b;
    return c;
  }
  static ConstraintSet box(Eigen::Index n, double lo, double up, std::optional<double> b = 1.0) {
    ConstraintSet c;
    c.budget = b;
    c.lower = Vec::Constant(n, lo);
    c.upper = Vec::Constant(n, up);
    return c;
  }
};

namespace detail {

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void check_square(const Mat& m, const char* what) {
  require(m.rows() == m.cols(), ErrorCode::DimensionMismatch, std::string(what) + " must be square");
}

inline void check_symmetric(const Mat& m, double tol = 1e-12) {
  check_square(m, "matrix");
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale, ErrorCode::NotSymmetric,
          "matrix is not symmetric");
}

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Rows of the equality system implied by a constraint set (budget first).
inline void equality_system(const ConstraintSet& c, Eigen::Index n, Mat& A, Vec& b) {
  Eigen::Index m = (c.budget ? 1 : 0) + c.eq_A.rows();
  A.resize(m, n);
  b.resize(m);
  Eigen::Index r = 0;
  if (c.budget) {
    A.row(r).setOnes();
    b(r) = *c.budget;
    ++r;
  }
  if (c.eq_A.rows() > 0) {
    require(c.eq_A.cols() == n && c.eq_b.size() == c.eq_A.rows(), ErrorCode::DimensionMismatch,
            "equality constraint dimensions");
    A.bottomRows(c.eq_A.rows()) = c.eq_A;
    b.tail(c.eq_b.size()) = c.eq_b;
  }
}

inline void check_constraints(const ConstraintSet& c, Eigen::Index n) {
  if (c.lower.size() != 0)
    require(c.lower.size() == n, ErrorCode::DimensionMismatch, "lower bound length");
  if (c.upper.size() != 0)
    require(c.upper.size() == n, ErrorCode::DimensionMismatch, "upper bound length");
  if (c.lower.size() != 0 && c.upper.size() != 0)
    require((c.lower.array() <= c.upper.array()).all(), ErrorCode::Infeasible,
            "lower bound exceeds upper bound");
  if (c.eq_A.rows() > 0)
    require(c.eq_A.cols() == n && c.eq_b.size() == c.eq_A.rows(), ErrorCode::DimensionMismatch,
            "equality constraint dimensions");
  if (c.ineq_A.rows() > 0)
    require(c.ineq_A.cols() == n && c.ineq_b.size() == c.ineq_A.rows(),
            ErrorCode::DimensionMismatch, "inequality constraint dimensions");
}

/// Max violation of a constraint set at x.
inline double max_violation(const ConstraintSet& c, const Vec& x) {
  double v = 0.0;
  if (c.budget) v = std::max(v, std::abs(x.sum() - *c.budget));
  if (c.eq_A.rows() > 0) v = std::max(v, (c.eq_A * x - c.eq_b).cwiseAbs().maxCoeff());
  if (c.ineq_A.rows() > 0) v = std::max(v, (c.ineq_b - c.ineq_A * x).maxCoeff());
  for (Eigen::Index i = 0; i < c.lower.size(); ++i) v = std::max(v, c.lower(i) - x(i));
  for (Eigen::Index i = 0; i < c.upper.size(); ++i) v = std::max(v, x(i) - c.upper(i));
  return v;
}

}  // namespace detail
}  // namespace robomvo

#endif
