#ifndef ROBOMVO_MARKET_DATA_HPP
#define ROBOMVO_MARKET_DATA_HPP

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"

namespace robomvo {

struct ReturnPanel {
  Mat returns;  // T x n, decimal returns
  std::vector<std::string> assets;
  std::vector<std::string> dates;

  Eigen::Index periods() const { return returns.rows(); }
  Eigen::Index size() const { return returns.cols(); }

  void validate() const {
    detail::require(returns.rows() >= 2, ErrorCode::DegeneratePanel, "panel needs T >= 2");
    detail::require(returns.cols() >= 1, ErrorCode::DegeneratePanel, "panel needs n >= 1");
    detail::require(returns.allFinite(), ErrorCode::InvalidInput, "non-finite return");
    detail::require(assets.empty() || static_cast<Eigen::Index>(assets.size()) == returns.cols(),
                    ErrorCode::DimensionMismatch, "asset labels");
    if (!dates.empty()) {
      detail::require(static_cast<Eigen::Index>(dates.size()) == returns.rows(),
                      ErrorCode::DimensionMismatch, "date labels");
      for (std::size_t t = 1; t < dates.size(); ++t)
        detail::require(dates[t - 1] < dates[t], ErrorCode::InvalidInput,
                        "dates must be strictly increasing");
    }
  }
};

struct WeightScheme {
  enum class Kind { Uniform, Ewma, Explicit };
  Kind kind = Kind::Uniform;
  double decay = 0.97;
  Vec explicit_weights;

  static WeightScheme uniform() { return {}; }
  static WeightScheme ewma(double lambda) {
    WeightScheme w;
    w.kind = Kind::Ewma;
    w.decay = lambda;
    return w;
  }
  static WeightScheme from_weights(Vec w) {
    WeightScheme s;
    s.kind = Kind::Explicit;
    s.explicit_weights = std::move(w);
    return s;
  }

  std::string name() const {
    switch (kind) {
      case Kind::Uniform: return "uniform";
      case Kind::Ewma: return "ewma:" + std::to_string(decay);
      case Kind::Explicit: return "explicit";
    }
    return "uniform";
  }

  /// Normalized observation weights, oldest first.
  Vec weights(Eigen::Index T) const {
    Vec w;
    switch (kind) {
      case Kind::Uniform:
        w = Vec::Constant(T, 1.0);
        break;
      case Kind::Ewma:
        detail::require(decay > 0.0 && decay < 1.0, ErrorCode::InvalidInput, "ewma decay in (0,1)");
        w.resize(T);
        for (Eigen::Index t = 0; t < T; ++t) w(t) = std::pow(decay, double(T - 1 - t));
        break;
      case Kind::Explicit:
        detail::require(explicit_weights.size() == T, ErrorCode::DimensionMismatch,
                        "weights length must equal T");
        w = explicit_weights;
        break;
    }
    detail::require(w.allFinite() && (w.array() >= 0.0).all(), ErrorCode::InvalidInput,
                    "weights must be nonnegative");
    double s = w.sum();
    detail::require(s > 0.0, ErrorCode::InvalidInput, "weights sum to zero");
    return w / s;
  }
};

struct MomentEstimates {
  Vec mu;
  Mat sigma;
  WeightScheme scheme;
  std::vector<std::string> assets;
};

/// Sigma = R' C' D_w C R with C = I - 1 w', the centered form.
inline Mat covariance_centered_form(const Mat& R, const Vec& w) {
  const Eigen::Index T = R.rows();
  Mat C = Mat::Identity(T, T) - Vec::Ones(T) * w.transpose();
  Mat s = R.transpose() * C.transpose() * w.asDiagonal() * C * R;
  return detail::symmetrize(s);
}

/// Sigma = R' (D_w - w w') R.
inline Mat covariance_weight_form(const Mat& R, const Vec& w) {
  Mat W = Mat(w.asDiagonal()) - w * w.transpose();
  return detail::symmetrize(R.transpose() * W * R);
}

inline MomentEstimates estimate_moments(const ReturnPanel& panel,
                                        const WeightScheme& scheme = WeightScheme::uniform()) {
  panel.validate();
  Vec w = scheme.weights(panel.periods());
  MomentEstimates m;
  m.mu = panel.returns.transpose() * w;
  m.sigma = covariance_weight_form(panel.returns, w);
  m.scheme = scheme;
  m.assets = panel.assets;
  return m;
}

struct EigenDecomposition {
  Mat V;       // columns are eigenvectors
  Vec lambda;  // descending
};

inline EigenDecomposition eigen_decompose(const Mat& sigma) {
  detail::check_symmetric(sigma, 1e-10);
  Eigen::SelfAdjointEigenSolver<Mat> es(detail::symmetrize(sigma));
  detail::require(es.info() == Eigen::Success, ErrorCode::NumericalDivergence, "eigensolver failed");
  const Eigen::Index n = sigma.rows();
  EigenDecomposition out;
  out.V.resize(n, n);
  out.lambda.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index src = n - 1 - k;
    out.lambda(k) = es.eigenvalues()(src);
    Vec v = es.eigenvectors().col(src);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v(i)) > 1e-14) {
        if (v(i) < 0) v = -v;
        break;
      }
    }
    out.V.col(k) = v;
  }
  return out;
}

/// Share of each eigenvalue in the trace, in the order of eigen_decompose.
inline Vec eigen_share(const Vec& lambda) { return lambda / lambda.sum(); }

/// Clip tiny negative eigenvalues; reject clearly indefinite inputs.
inline Mat ensure_psd(const Mat& sigma) {
  auto ed = eigen_decompose(sigma);
  double lmax = std::max(ed.lambda.maxCoeff(), 0.0);
  double lmin = ed.lambda.minCoeff();
  if (lmin >= 0.0) return detail::symmetrize(sigma);
  detail::require(lmin >= -1e-10 * lmax, ErrorCode::NotPositiveDefinite,
                  "covariance is not positive semi-definite");
  Vec l = ed.lambda.cwiseMax(0.0);
  return detail::symmetrize(ed.V * l.asDiagonal() * ed.V.transpose());
}

inline double condition_number_from_singular_values(const Vec& s) {
  detail::require(s.size() > 0, ErrorCode::InvalidInput, "empty spectrum");
  double smax = s.cwiseAbs().maxCoeff();
  double smin = s.cwiseAbs().minCoeff();
  detail::require(smax > 0.0, ErrorCode::InvalidInput, "zero matrix");
  detail::require(smin >= 1e-300, ErrorCode::SingularMatrix, "smallest singular value is zero");
  return smax / smin;
}

inline double condition_number(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return condition_number_from_singular_values(svd.singularValues());
}

inline Mat correlation_from_covariance(const Mat& sigma) {
  Vec vol = sigma.diagonal().cwiseSqrt();
  Vec inv = vol.unaryExpr([](double v) { return v > 0.0 ? 1.0 / v : 0.0; });
  return inv.asDiagonal() * sigma * inv.asDiagonal();
}

inline Mat covariance_from(const Vec& vol, const Mat& corr) {
  detail::require(corr.rows() == vol.size() && corr.cols() == vol.size(),
                  ErrorCode::DimensionMismatch, "vol/correlation sizes");
  return vol.asDiagonal() * corr * vol.asDiagonal();
}

/// Builds a full symmetric matrix from its lower triangle given row by row.
inline Mat from_lower_triangle(const std::vector<std::vector<double>>& rows) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    detail::require(static_cast<Eigen::Index>(rows[i].size()) == i + 1,
                    ErrorCode::DimensionMismatch, "lower triangle row length");
    for (Eigen::Index j = 0; j <= i; ++j) m(i, j) = m(j, i) = rows[i][j];
  }
  return m;
}

}  // namespace robomvo

#endif
