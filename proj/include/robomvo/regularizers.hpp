#ifndef ROBOMVO_REGULARIZERS_HPP
#define ROBOMVO_REGULARIZERS_HPP

#include "common.hpp"
#include "market_data.hpp"
#include "mvo_core.hpp"
#include "qp_solver.hpp"

namespace robomvo {

/// rho * penalty(Gamma (x - anchor)). For l2 the penalty is 1/2 ||.||_2^2, for lp it is
/// (1/p) ||.||_p^p and for l1 it is ||.||_1.
struct PenaltySpec {
  enum class Kind { L1, L2, Lp };
  Kind kind = Kind::L2;
  double p = 2.0;
  double rho = 0.0;
  Mat gamma;   // empty means identity
  Vec anchor;  // empty means zero

  static PenaltySpec l1(double rho, Mat gamma = {}, Vec anchor = {}) {
    return {Kind::L1, 1.0, rho, std::move(gamma), std::move(anchor)};
  }
  static PenaltySpec l2(double rho, Mat gamma = {}, Vec anchor = {}) {
    return {Kind::L2, 2.0, rho, std::move(gamma), std::move(anchor)};
  }
  static PenaltySpec lp(double p, double rho, Mat gamma = {}, Vec anchor = {}) {
    return {Kind::Lp, p, rho, std::move(gamma), std::move(anchor)};
  }

  double order() const { return kind == Kind::L1 ? 1.0 : (kind == Kind::L2 ? 2.0 : p); }
  Mat gamma_or_identity(Eigen::Index n) const {
    return gamma.size() ? gamma : Mat(Mat::Identity(n, n));
  }
  Vec anchor_or_zero(Eigen::Index n) const { return anchor.size() ? anchor : Vec(Vec::Zero(n)); }
  void validate(Eigen::Index n) const {
    detail::require(rho >= 0.0 && std::isfinite(rho), ErrorCode::InvalidInput, "rho >= 0");
    detail::require(order() > 0.0, ErrorCode::InvalidInput, "p > 0");
    if (gamma.size())
      detail::require(gamma.cols() == n, ErrorCode::DimensionMismatch, "Gamma columns");
    if (anchor.size()) detail::require(anchor.size() == n, ErrorCode::DimensionMismatch, "anchor");
  }
  double value(const Vec& x) const {
    const Eigen::Index n = x.size();
    Vec d = gamma_or_identity(n) * (x - anchor_or_zero(n));
    double q = order();
    if (q == 1.0) return rho * d.lpNorm<1>();
    if (q == 2.0) return 0.5 * rho * d.squaredNorm();
    return rho / q * d.cwiseAbs().array().pow(q).sum();
  }
};

struct FilterSpec {
  enum class Kind { None, Ridge, DiagRidge, HardThreshold };
  Kind kind = Kind::None;
  double rho = 0.0;
  Vec weights;  // DiagRidge: singular values of Gamma2 in the shared basis, default ones

  static FilterSpec none() { return {}; }
  static FilterSpec ridge(double rho) { return {Kind::Ridge, rho, {}}; }
  static FilterSpec diag_ridge(double rho, Vec w = {}) { return {Kind::DiagRidge, rho, std::move(w)}; }
  static FilterSpec hard_threshold(double rho) { return {Kind::HardThreshold, rho, {}}; }
};

/// How the Gram matrix A'A is regularized from the filter values.
enum class GramMode {
  InverseSquared,   // G^+ . G^+
  InverseOfSquare,  // G(s . s)^+
  InverseTimesS,    // G^+ . s
};

struct SvdParts {
  Mat U, V;
  Vec s;
};

/// Thin SVD keeping singular values above 1e-12 s_max.
inline SvdParts thin_svd(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  detail::require(s.size() > 0 && s(0) > 0.0, ErrorCode::InvalidInput, "zero matrix");
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > 1e-12 * s(0)) ++r;
  return {svd.matrixU().leftCols(r), svd.matrixV().leftCols(r), s.head(r)};
}

inline Vec filter_values(const Vec& s, const FilterSpec& f) {
  detail::require(f.rho >= 0.0, ErrorCode::InvalidInput, "filter rho >= 0");
  Vec g(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    double sk = s(k);
    switch (f.kind) {
      case FilterSpec::Kind::None: g(k) = 1.0 / sk; break;
      case FilterSpec::Kind::Ridge: g(k) = sk / (sk * sk + f.rho); break;
      case FilterSpec::Kind::DiagRidge: {
        double w = f.weights.size() ? f.weights(k) : 1.0;
        g(k) = sk / (sk * sk + f.rho * w * w);
        break;
      }
      case FilterSpec::Kind::HardThreshold: g(k) = std::abs(sk) >= f.rho ? 1.0 / sk : 0.0; break;
    }
  }
  detail::require((g.array() != 0.0).any(), ErrorCode::AllSingularValuesFiltered,
                  "filter removed every singular value");
  return g;
}

inline Vec pseudo_inverse_values(const Vec& g) {
  return g.unaryExpr([](double v) { return v != 0.0 ? 1.0 / v : 0.0; });
}

inline Vec gram_values(const Vec& s, const FilterSpec& f, GramMode mode) {
  Vec g = filter_values(s, f);
  switch (mode) {
    case GramMode::InverseSquared: {
      Vec gi = pseudo_inverse_values(g);
      return gi.cwiseProduct(gi);
    }
    case GramMode::InverseOfSquare: {
      FilterSpec f2 = f;
      if (f2.kind == FilterSpec::Kind::HardThreshold) f2.rho = f.rho * f.rho;
      return pseudo_inverse_values(filter_values(s.cwiseProduct(s), f2));
    }
    case GramMode::InverseTimesS: return pseudo_inverse_values(g).cwiseProduct(s);
  }
  return {};
}

struct SpectralResult {
  Mat pinv;  // V diag(G) U'
  Mat gram;  // V diag(s^2(rho)) V'
  Vec filter;
  Vec gram_diag;
  SvdParts svd;
};

inline SpectralResult spectral_filter(const Mat& a1, const FilterSpec& f,
                                      GramMode mode = GramMode::InverseSquared) {
  SpectralResult out;
  out.svd = thin_svd(a1);
  out.filter = filter_values(out.svd.s, f);
  out.gram_diag = gram_values(out.svd.s, f, mode);
  out.pinv = out.svd.V * out.filter.asDiagonal() * out.svd.U.transpose();
  out.gram = out.svd.V * out.gram_diag.asDiagonal() * out.svd.V.transpose();
  return out;
}

/// Condition number of the filtered pseudo-inverse over its nonzero filter values.
inline double filtered_condition_number(const Vec& g) {
  double mx = 0.0, mn = kInf;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    double a = std::abs(g(k));
    if (a == 0.0) continue;
    mx = std::max(mx, a);
    mn = std::min(mn, a);
  }
  detail::require(mx > 0.0, ErrorCode::AllSingularValuesFiltered, "no singular value left");
  return mx / mn;
}

struct LinearSolution {
  Vec x;
  Vec lambda;  // (A1'A1 + ...) x + A2' lambda = rhs
  double residual = 0.0;
};

namespace detail {

inline LinearSolution solve_block_kkt(const Mat& H, const Vec& rhs, const Mat& A2, const Vec& b2) {
  const Eigen::Index n = rhs.size(), m = A2.rows();
  Mat K = Mat::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = H;
  if (m) {
    require(A2.cols() == n && b2.size() == m, ErrorCode::DimensionMismatch, "A2 size");
    K.topRightCorner(n, m) = A2.transpose();
    K.bottomLeftCorner(m, n) = A2;
  }
  Vec r(n + m);
  r << rhs, b2;
  Eigen::FullPivLU<Mat> lu(K);
  lu.setThreshold(1e-13);
  require(lu.isInvertible(), ErrorCode::SingularKKT, "KKT matrix is singular");
  Vec sol = lu.solve(r);
  LinearSolution out;
  out.x = sol.head(n);
  out.lambda = sol.tail(m);
  out.residual = (K * sol - r).cwiseAbs().maxCoeff();
  require(out.residual <= 1e-10 * (1.0 + r.cwiseAbs().maxCoeff() + K.cwiseAbs().maxCoeff()),
          ErrorCode::SingularKKT, "KKT system solved inaccurately");
  return out;
}

}  // namespace detail

/// min 1/2 ||A1 x - b1||^2 + rho/2 ||Gamma2 (x - x0)||^2  s.t.  A2 x = b2.
inline LinearSolution tikhonov_solve(const Mat& a1, const Vec& b1, const PenaltySpec& pen,
                                     const Mat& A2 = Mat(), const Vec& b2 = Vec()) {
  const Eigen::Index n = a1.cols();
  detail::require(a1.rows() == b1.size(), ErrorCode::DimensionMismatch, "A1/b1 sizes");
  pen.validate(n);
  detail::require(pen.kind == PenaltySpec::Kind::L2, ErrorCode::InvalidInput, "L2 penalty required");
  const Mat G = pen.gamma_or_identity(n);
  const Vec x0 = pen.anchor_or_zero(n);
  if (A2.rows() == 0) {
    // stacked least squares gives the minimum-norm solution when rank deficient
    Mat S(a1.rows() + G.rows(), n);
    S << a1, std::sqrt(pen.rho) * G;
    Vec t(S.rows());
    t << b1, std::sqrt(pen.rho) * G * x0;
    LinearSolution out;
    out.x = S.completeOrthogonalDecomposition().solve(t);
    out.lambda = Vec(0);
    out.residual = (S.transpose() * (S * out.x - t)).cwiseAbs().maxCoeff();
    return out;
  }
  Mat GtG = G.transpose() * G;
  Mat H = a1.transpose() * a1 + pen.rho * GtG;
  Vec rhs = a1.transpose() * b1 + pen.rho * GtG * x0;
  return detail::solve_block_kkt(H, rhs, A2, b2);
}

/// Spectrally filtered normal equations with the matching filtered right-hand side.
inline LinearSolution filtered_normal_solve(const Mat& a1, const Vec& b1, const FilterSpec& f,
                                            const Mat& A2 = Mat(), const Vec& b2 = Vec(),
                                            GramMode mode = GramMode::InverseSquared) {
  detail::require(a1.rows() == b1.size(), ErrorCode::DimensionMismatch, "A1/b1 sizes");
  auto sp = spectral_filter(a1, f, mode);
  if (A2.rows() == 0) {
    LinearSolution out;
    out.x = sp.pinv * b1;
    out.lambda = Vec(0);
    return out;
  }
  Vec w = sp.gram_diag.cwiseProduct(sp.filter);
  Vec rhs = sp.svd.V * (w.asDiagonal() * (sp.svd.U.transpose() * b1));
  return detail::solve_block_kkt(sp.gram, rhs, A2, b2);
}

/// Filtered moments for the MVO objective, using A1 = Sigma^(1/2).
inline MvoInputs filtered_mvo_inputs(const MvoInputs& in, const FilterSpec& f,
                                     GramMode mode = GramMode::InverseSquared) {
  in.validate();
  auto ed = eigen_decompose(ensure_psd(in.sigma));
  Eigen::Index r = 0;
  while (r < ed.lambda.size() && ed.lambda(r) > 1e-24 * ed.lambda(0)) ++r;
  Mat V = ed.V.leftCols(r);
  Vec s = ed.lambda.head(r).cwiseSqrt();
  Vec g = filter_values(s, f);
  Vec s2 = gram_values(s, f, mode);
  MvoInputs out;
  out.r = in.r;
  out.sigma = detail::symmetrize(V * s2.asDiagonal() * V.transpose());
  Vec scale = s2.cwiseProduct(g).cwiseQuotient(s);
  Vec e = in.excess();
  out.mu = V * (scale.asDiagonal() * (V.transpose() * e)) + Vec::Constant(e.size(), in.r);
  return out;
}

/// Ridge-regularized MVO: min 1/2 x'Sigma x - gamma x'mu + rho2/2 ||x - x0||^2.
inline SolveReport ridge_mvo(const MvoInputs& in, double gamma, double rho2, const Vec& x0,
                             const ConstraintSet& cs = {}) {
  in.validate();
  detail::require(rho2 >= 0.0, ErrorCode::InvalidInput, "rho2 >= 0");
  const Eigen::Index n = in.size();
  Vec a = x0.size() ? x0 : Vec(Vec::Zero(n));
  detail::require(a.size() == n, ErrorCode::DimensionMismatch, "x0 size");
  Mat S = in.sigma + rho2 * Mat::Identity(n, n);
  Vec q = gamma * in.excess() + rho2 * a;
  SolveReport rep;
  if (cs.empty()) {
    rep.weights = detail::solve_spd(S, q);
    rep.duals = Duals{};
    rep.iterations = 1;
  } else {
    rep = to_report(solve_qp(make_qp(S, q, cs)), cs);
  }
  rep.gamma = gamma;
  const Vec& x = rep.weights;
  rep.objective = 0.5 * x.dot(in.sigma * x) - gamma * x.dot(in.excess()) +
                  0.5 * rho2 * (x - a).squaredNorm();
  return rep;
}

/// omega(rho2) = (I + rho2 Sigma^-1)^-1 of the two-portfolio ridge identity.
inline Mat ridge_omega(const Mat& sigma, double rho2) {
  const Eigen::Index n = sigma.rows();
  return (Mat::Identity(n, n) + rho2 * detail::inverse_spd(sigma)).inverse();
}

struct VolCorr {
  Vec vol;
  Mat corr;
};

enum class ShrinkMode { Identity, DiagSigma };

inline VolCorr shrunk_correlation(const Mat& sigma, double rho2, ShrinkMode mode) {
  detail::require(rho2 >= 0.0, ErrorCode::InvalidInput, "rho2 >= 0");
  detail::check_symmetric(sigma, 1e-12);
  VolCorr out;
  Mat c = correlation_from_covariance(sigma);
  if (mode == ShrinkMode::Identity) {
    const Eigen::Index n = sigma.rows();
    Mat s = sigma + rho2 * Mat::Identity(n, n);
    out.vol = s.diagonal().cwiseSqrt();
    out.corr = correlation_from_covariance(s);
  } else {
    out.vol = sigma.diagonal().cwiseSqrt();
    out.corr = c / (1.0 + rho2);
    out.corr.diagonal().setOnes();
  }
  return out;
}

/// Shrinkage target alpha Sigma + (1 - alpha) Phi written as a Tikhonov penalty.
inline PenaltySpec ledoit_wolf_to_tikhonov(double alpha, const Mat& phi) {
  detail::require(alpha > 0.0 && alpha <= 1.0, ErrorCode::InvalidInput, "alpha in (0, 1]");
  detail::check_symmetric(phi, 1e-12);
  Eigen::LLT<Mat> llt(phi);
  detail::require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite,
                  "shrinkage target must be positive definite");
  Mat upper = llt.matrixU();
  return PenaltySpec::l2((1.0 - alpha) / alpha, upper, Vec::Zero(phi.rows()));
}

}  // namespace robomvo

#endif
