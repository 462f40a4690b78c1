#ifndef ROBOMVO_ROBO_PIPELINE_HPP
#define ROBOMVO_ROBO_PIPELINE_HPP

#include <fstream>
#include <sstream>

#include "admm_engine.hpp"
#include "mvo_core.hpp"
#include "qp_solver.hpp"
#include "regularizers.hpp"

namespace robomvo {

enum class RoboObjective { Mvo, TrackingError };

/// Where a penalty is centred.
enum class PenaltyAnchor { Strategic, Current, Zero, Explicit };

struct RoboPenalty {
  PenaltySpec spec;  // spec.anchor is only read for Explicit
  PenaltyAnchor anchor = PenaltyAnchor::Strategic;
};

/// Rebalancing problem: the objective plus L1/L2 penalties on the bets against the strategic and the
/// current portfolios, over budget, box and extra constraints.
struct RoboConfig {
  Vec strategic;
  Vec current;  // empty means the strategic portfolio
  RoboObjective objective = RoboObjective::TrackingError;
  std::vector<RoboPenalty> penalties;
  bool long_only = true;  // box [0, 1]
  double budget = 1.0;
  ConstraintSet extra;  // bounds, equalities and inequalities added to the budget/box
  std::vector<ConvexSet> extra_sets;
  double gamma = 0.0;
  double r = 0.0;
  AdmmParams admm;

  /// Turnover and bet penalties: rho1 L1 vs current, rho1_tilde L1 vs strategic, same for L2.
  static RoboConfig standard(Vec strategic, Vec current, double rho1_tilde, double rho1,
                             double rho2_tilde, double rho2) {
    RoboConfig c;
    c.strategic = std::move(strategic);
    c.current = std::move(current);
    c.penalties = {{PenaltySpec::l1(rho1_tilde), PenaltyAnchor::Strategic},
                   {PenaltySpec::l1(rho1), PenaltyAnchor::Current},
                   {PenaltySpec::l2(rho2_tilde), PenaltyAnchor::Strategic},
                   {PenaltySpec::l2(rho2), PenaltyAnchor::Current}};
    return c;
  }

  Vec current_or_strategic() const { return current.size() ? current : strategic; }

  void validate(Eigen::Index n) const {
    detail::require(strategic.size() == n, ErrorCode::DimensionMismatch, "strategic portfolio size");
    detail::require(current.size() == 0 || current.size() == n, ErrorCode::DimensionMismatch,
                    "current portfolio size");
    detail::require(std::isfinite(gamma) && gamma >= 0.0, ErrorCode::InvalidInput, "gamma >= 0");
    detail::require(std::isfinite(budget), ErrorCode::InvalidInput, "budget");
    detail::require(!extra.budget, ErrorCode::InvalidInput, "the budget is set by RoboConfig::budget");
    for (const Vec* v : {&strategic, &current}) {
      if (!v->size()) continue;
      detail::require(v->allFinite() && v->minCoeff() >= -1e-12 &&
                          std::abs(v->sum() - budget) <= 1e-8,
                      ErrorCode::InvalidInput, "strategic and current portfolios must lie on the simplex");
    }
    for (const auto& p : penalties) {
      p.spec.validate(n);
      if (p.anchor == PenaltyAnchor::Explicit)
        detail::require(p.spec.anchor.size() == n, ErrorCode::DimensionMismatch, "explicit anchor");
    }
    admm.validate();
  }
};

namespace detail {

inline PenaltySpec resolve_penalty(const RoboPenalty& p, const RoboConfig& c, Eigen::Index n) {
  PenaltySpec s = p.spec;
  switch (p.anchor) {
    case PenaltyAnchor::Strategic: s.anchor = c.strategic; break;
    case PenaltyAnchor::Current: s.anchor = c.current_or_strategic(); break;
    case PenaltyAnchor::Zero: s.anchor = Vec::Zero(n); break;
    case PenaltyAnchor::Explicit: break;
  }
  return s;
}

inline ConstraintSet robo_constraints(const RoboConfig& c, Eigen::Index n) {
  ConstraintSet cs = c.extra;
  cs.budget = c.budget;
  if (c.long_only) {
    Vec lo = Vec::Zero(n), up = Vec::Ones(n);
    if (cs.lower.size()) lo = lo.cwiseMax(cs.lower);
    if (cs.upper.size()) up = up.cwiseMin(cs.upper);
    cs.lower = lo;
    cs.upper = up;
  }
  return cs;
}

/// MVO: 1/2 x'Sx - g x'(mu - r). TE: 1/2 (x - b)'S(x - b) - g (x - b)'(mu - r).
inline Quadratic robo_objective(const RoboConfig& c, const Vec& mu, const Mat& sigma) {
  const Eigen::Index n = mu.size();
  Vec e = mu - Vec::Constant(n, c.r);
  if (c.objective == RoboObjective::Mvo) return {sigma, c.gamma * e, 0.0};
  const Vec& b = c.strategic;
  return {sigma, c.gamma * e + sigma * b, 0.5 * b.dot(sigma * b) + c.gamma * b.dot(e)};
}

struct RoboSolve {
  SolveReport report;
  std::optional<AdmmState> state;  // set when ADMM was used
};

inline RoboSolve rebalance_impl(const RoboConfig& c, const Vec& mu, const Mat& sigma,
                                const Vec& x_start, const AdmmState* warm) {
  const Eigen::Index n = mu.size();
  require(sigma.rows() == n && sigma.cols() == n, ErrorCode::DimensionMismatch, "mu/Sigma sizes");
  check_symmetric(sigma, 1e-10);
  c.validate(n);
  const Quadratic f0 = robo_objective(c, mu, sigma);
  Quadratic f = f0;
  std::vector<PenaltySpec> resolved;
  std::vector<AdmmBlock> blocks;
  for (const auto& p : c.penalties) {
    PenaltySpec s = resolve_penalty(p, c, n);
    resolved.push_back(s);
    if (s.rho == 0.0) continue;
    if (s.kind == PenaltySpec::Kind::L2) f = f.plus_l2(s);
    else blocks.push_back(AdmmBlock::from_penalty(s));
  }
  const ConstraintSet cs = robo_constraints(c, n);
  RoboSolve out;
  if (blocks.empty() && c.extra_sets.empty()) {
    QpProblem qp = make_qp(f.Q, f.q, cs);
    if (x_start.size() == n) qp.x_start = x_start;
    out.report = to_report(solve_qp(qp), cs);
  } else {
    CompositeProblem pb{f, blocks, cs, c.extra_sets};
    auto res = solve_composite(pb, c.admm, x_start, warm);
    out.report = res.report;
    out.state = res.state;
  }
  out.report.gamma = c.gamma;
  const Vec& x = out.report.weights;
  out.report.objective = f0.value(x);
  for (const auto& s : resolved)
    if (s.rho != 0.0) out.report.objective += s.value(x);
  return out;
}

}  // namespace detail

inline SolveReport rebalance(const RoboConfig& config, const Vec& mu, const Mat& sigma) {
  return detail::rebalance_impl(config, mu, sigma, Vec(), nullptr).report;
}

/// Smallest gamma whose rebalanced portfolio has tracking error te_target against the strategic one.
inline GammaCalibration te_target_to_gamma(const RoboConfig& config, const Vec& mu, const Mat& sigma,
                                           double te_target, const BisectionOptions& opt = {}) {
  detail::require(config.objective == RoboObjective::TrackingError, ErrorCode::InvalidInput,
                  "tracking-error targeting needs the tracking-error objective");
  detail::require(std::isfinite(te_target) && te_target >= 0.0, ErrorCode::TargetUnreachable,
                  "tracking-error target >= 0");
  RoboConfig c = config;
  auto solve = [&](double g) {
    c.gamma = g;
    SolveReport rep = rebalance(c, mu, sigma);
    detail::require(rep.converged(), ErrorCode::NoConvergence, "rebalance did not converge");
    return rep;
  };
  auto measure = [&](const Vec& x) { return tracking_error(x, config.strategic, sigma); };
  auto cal = bisect_gamma(solve, measure, te_target, opt);
  double te = measure(cal.report.weights);
  if (std::abs(te - te_target) > opt.tol)
    throw Error(ErrorCode::TargetUnreachable, "bisection stopped before reaching the target");
  return cal;
}

struct PathSpec {
  std::string param = "rho";       // "rho" or "gamma"
  std::vector<size_t> penalties;   // penalties whose rho is set; empty means all
  std::vector<double> grid;
};

struct PathTable {
  std::string param;
  std::vector<double> grid;
  Mat weights;  // grid x n, NaN rows for failed points
  std::vector<double> objective;
  std::vector<std::string> status;

  void write_csv(std::ostream& os, const std::vector<std::string>& assets) const {
    detail::require(assets.size() == size_t(weights.cols()), ErrorCode::DimensionMismatch,
                    "one name per asset");
    os << "param";
    for (const auto& a : assets) os << ',' << a;
    os << ",objective,status\n";
    os.precision(17);
    for (size_t i = 0; i < grid.size(); ++i) {
      os << grid[i];
      for (Eigen::Index j = 0; j < weights.cols(); ++j) os << ',' << weights(Eigen::Index(i), j);
      os << ',' << objective[i] << ',' << status[i] << '\n';
    }
  }
};

/// Solves the rebalancing problem along a grid, warm-starting each point from the previous one.
inline PathTable regularization_path(const RoboConfig& config, const Vec& mu, const Mat& sigma,
                                     const PathSpec& spec) {
  detail::require(!spec.grid.empty(), ErrorCode::GridEmpty, "empty grid");
  detail::require(std::is_sorted(spec.grid.begin(), spec.grid.end()), ErrorCode::InvalidInput,
                  "grid must be sorted");
  detail::require(spec.param == "rho" || spec.param == "gamma", ErrorCode::InvalidInput,
                  "path parameter must be rho or gamma");
  for (size_t k : spec.penalties)
    detail::require(k < config.penalties.size(), ErrorCode::InvalidInput, "penalty index");
  const Eigen::Index n = mu.size();
  PathTable t;
  t.param = spec.param;
  t.grid = spec.grid;
  t.weights = Mat::Constant(Eigen::Index(spec.grid.size()), n, std::numeric_limits<double>::quiet_NaN());
  Vec x_prev;
  std::optional<AdmmState> warm;
  for (size_t i = 0; i < spec.grid.size(); ++i) {
    RoboConfig c = config;
    const double v = spec.grid[i];
    if (spec.param == "gamma") {
      c.gamma = v;
    } else if (spec.penalties.empty()) {
      for (auto& p : c.penalties) p.spec.rho = v;
    } else {
      for (size_t k : spec.penalties) c.penalties[k].spec.rho = v;
    }
    try {
      auto res = detail::rebalance_impl(c, mu, sigma, x_prev, warm ? &*warm : nullptr);
      t.weights.row(Eigen::Index(i)) = res.report.weights.transpose();
      t.objective.push_back(res.report.objective);
      t.status.push_back(to_string(res.report.status));
      if (res.report.converged()) {
        x_prev = res.report.weights;
        warm = res.state;
      } else {
        x_prev = Vec();
        warm.reset();
      }
    } catch (const Error& e) {
      t.objective.push_back(std::numeric_limits<double>::quiet_NaN());
      t.status.push_back(std::string("failed:") + to_string(e.code()));
      x_prev = Vec();
      warm.reset();
    }
  }
  return t;
}

}  // namespace robomvo

#endif
