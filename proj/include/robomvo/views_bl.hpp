#ifndef ROBOMVO_VIEWS_BL_HPP
#define ROBOMVO_VIEWS_BL_HPP

#include "common.hpp"
#include "mvo_core.hpp"

namespace robomvo {

/// Views P R = Q + eps with eps ~ N(0, sigma_eps).
struct ViewSet {
  Mat P;
  Vec Q;
  Mat sigma_eps;

  void validate(Eigen::Index n) const {
    detail::require(P.cols() == n && P.rows() == Q.size() && sigma_eps.rows() == Q.size() &&
                        sigma_eps.cols() == Q.size() && Q.size() > 0,
                    ErrorCode::DimensionMismatch, "view dimensions");
    detail::check_symmetric(sigma_eps, 1e-10);
  }
};

struct BlPosterior {
  Vec mu_bar;
  Mat sigma_bar;            // Sigma_m - Sigma_m P' (P Sigma_m P' + Sigma_eps)^-1 P Sigma_m
  Mat sigma_bar_precision;  // (Sigma_m^-1 + P' Sigma_eps^-1 P)^-1
};

inline BlPosterior bl_conditional(const Vec& mu_tilde, const Mat& sigma_m, const ViewSet& v) {
  const Eigen::Index n = mu_tilde.size();
  detail::require(sigma_m.rows() == n && sigma_m.cols() == n, ErrorCode::DimensionMismatch,
                  "Sigma_m size");
  detail::check_symmetric(sigma_m, 1e-10);
  v.validate(n);
  Mat M = v.P * sigma_m * v.P.transpose() + v.sigma_eps;
  Eigen::FullPivLU<Mat> lu(M);
  lu.setThreshold(1e-13);
  detail::require(lu.isInvertible(), ErrorCode::SingularViewCovariance,
                  "P Sigma_m P' + Sigma_eps is singular");
  Mat SPt = sigma_m * v.P.transpose();
  BlPosterior out;
  out.mu_bar = mu_tilde + SPt * lu.solve(v.Q - v.P * mu_tilde);
  out.sigma_bar = detail::symmetrize(sigma_m - SPt * lu.solve(SPt.transpose()));

  Eigen::LLT<Mat> lm(sigma_m), le(v.sigma_eps);
  if (lm.info() == Eigen::Success && le.info() == Eigen::Success) {
    Mat prec = lm.solve(Mat::Identity(n, n)) + v.P.transpose() * le.solve(v.P);
    out.sigma_bar_precision = detail::symmetrize(prec.inverse());
  }
  return out;
}

/// Grade scale size card(S) gives the range index n_s = (card(S) - 1) / 2.
inline double range_index(int card_scale) {
  detail::require(card_scale >= 3 && card_scale % 2 == 1, ErrorCode::InvalidInput,
                  "grade scale must have an odd number >= 3 of grades");
  return 0.5 * (card_scale - 1);
}

struct GradeViews {
  Vec scores;
  double delta = 1.0;
  double tau = 1.0;
  int card_scale = 7;

  double n_s() const { return range_index(card_scale); }
};

struct GradeReturns {
  Vec mu_tilde;  // implied by the strategic portfolio
  Vec mu_breve;  // manager's views
  Vec mu;        // blend tau/(1+tau) mu_tilde + 1/(1+tau) mu_breve
};

inline GradeReturns grades_to_expected_returns(const Vec& strategic, const Mat& sigma, double r,
                                               double sharpe, const GradeViews& g) {
  const Eigen::Index n = strategic.size();
  detail::require(g.scores.size() == n, ErrorCode::DimensionMismatch, "one grade per asset");
  detail::require(g.tau > 0.0, ErrorCode::InvalidInput, "tau > 0");
  const double ns = g.n_s();
  for (Eigen::Index i = 0; i < n; ++i)
    detail::require(std::abs(g.scores(i)) <= ns, ErrorCode::InvalidInput, "grade outside the scale");
  Vec vol = sigma.diagonal().cwiseSqrt();
  detail::require((vol.array() > 0.0).all(), ErrorCode::InvalidInput, "volatilities must be positive");
  GradeReturns out;
  out.mu_tilde = implied_returns(strategic, sigma, r, sharpe);
  out.mu_breve = out.mu_tilde + g.delta * (g.scores / ns).cwiseProduct(vol);
  const double w = g.tau / (g.tau + 1.0);
  out.mu = w * out.mu_tilde + (1.0 - w) * out.mu_breve;
  for (Eigen::Index i = 0; i < n; ++i)
    if (g.scores(i) == 0.0) out.mu(i) = out.mu_tilde(i);
  return out;
}

/// Absolute views P = I, Q = mu_breve, Sigma_eps = tau Sigma.
inline ViewSet absolute_views(const Vec& mu_breve, const Mat& sigma, double tau) {
  detail::require(tau > 0.0, ErrorCode::InvalidInput, "tau > 0");
  const Eigen::Index n = mu_breve.size();
  return {Mat::Identity(n, n), mu_breve, tau * sigma};
}

enum class SigmaChoice { Empirical, BlConditional };

}  // namespace robomvo

#endif
