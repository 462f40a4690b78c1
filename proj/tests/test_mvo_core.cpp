#include <gtest/gtest.h>

#include <random>

#include <robomvo/mvo_core.hpp>

#include "fixtures.hpp"

using namespace robomvo;

namespace {

void expect_pct(const Vec& got, const Vec& want_pct, double tol_pp, const char* what) {
  ASSERT_EQ(got.size(), want_pct.size()) << what;
  for (Eigen::Index i = 0; i < got.size(); ++i)
    EXPECT_NEAR(got(i) * 100.0, want_pct(i), tol_pp) << what << " [" << i << "]";
}

MvoInputs with_corr(const MvoInputs& base, int i, int j, double rho) {
  MvoInputs in = base;
  Vec vol = in.sigma.diagonal().cwiseSqrt();
  in.sigma(i, j) = in.sigma(j, i) = rho * vol(i) * vol(j);
  return in;
}

MvoInputs with_vol(const MvoInputs& base, int i, double v) {
  Vec vol = base.sigma.diagonal().cwiseSqrt();
  Mat c = correlation_from_covariance(base.sigma);
  vol(i) = v;
  MvoInputs in = base;
  in.sigma = covariance_from(vol, c);
  return in;
}

// Constant correlation matrix C4(rho).
MvoInputs with_c4(const MvoInputs& base, double rho) {
  Mat c = Mat::Constant(4, 4, rho);
  c.diagonal().setOnes();
  MvoInputs in = base;
  in.sigma = covariance_from(base.sigma.diagonal().cwiseSqrt(), c);
  return in;
}

}  // namespace

TEST(GammaProblem, HedgingExampleWeights) {
  auto rep = solve_gamma_problem(fx::example1(), 0.2578, ConstraintSet::budget_only());
  expect_pct(rep.weights, fx::vec({36.00, 26.39, 27.67, 9.94}), 0.02, "x");
}

TEST(GammaProblem, GlobalMinimumVariance) {
  auto rep = solve_gamma_problem(fx::example1(), 0.0, ConstraintSet::budget_only());
  expect_pct(rep.weights, fx::vec({65.57, 29.06, 13.61, -8.24}), 0.02, "gmv");
}

TEST(GammaProblem, ZeroExcessReturnGivesZero) {
  MvoInputs in;
  in.sigma = Mat::Identity(3, 3);
  in.r = 0.02;
  in.mu = Vec::Constant(3, 0.02);
  auto rep = solve_gamma_problem(in, 3.0);
  EXPECT_LE(rep.weights.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GammaProblem, UnconstrainedIsLinearInGamma) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    MvoInputs in;
    in.sigma = fx::random_spd(rng, 5);
    in.mu = fx::random_vec(rng, 5, 0.05);
    auto a = solve_gamma_problem(in, 0.7).weights;
    auto b = solve_gamma_problem(in, 1.4).weights;
    EXPECT_LE((b - 2.0 * a).cwiseAbs().maxCoeff(), 1e-10 * (1 + b.cwiseAbs().maxCoeff()));
  }
}

TEST(GammaProblem, SingularCovarianceRejected) {
  MvoInputs in;
  in.sigma = Mat::Ones(2, 2);
  in.mu = fx::vec({0.1, 0.2});
  try {
    solve_gamma_problem(in, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularCovariance);
  }
}

TEST(CalibrateGamma, VolTargetBaseCase) {
  auto cal = calibrate_gamma(fx::example1(), Target::volatility(0.15), ConstraintSet::budget_only());
  expect_pct(cal.report.weights, fx::vec({26.30, 25.52, 32.28, 15.90}), 0.02, "table 1");
  EXPECT_NEAR(portfolio_vol(cal.report.weights, fx::example1().sigma), 0.15, 1e-6);
}

TEST(CalibrateGamma, VolTargetPerturbations) {
  const auto base = fx::example1();
  const auto cs = ConstraintSet::budget_only();
  struct Case {
    MvoInputs in;
    Vec want;
    const char* name;
  };
  MvoInputs mu2 = base;
  mu2.mu(1) = 0.05;
  MvoInputs combo = with_c4(with_vol(base, 2, 0.21), 0.70);
  combo.mu(1) = 0.07;
  std::vector<Case> cases = {
      {with_vol(base, 2, 0.19), fx::vec({21.48, 22.90, 39.10, 16.52}), "sigma3=19%"},
      {with_vol(base, 2, 0.21), fx::vec({30.20, 27.79, 26.48, 15.53}), "sigma3=21%"},
      {with_c4(base, 0.30), fx::vec({7.03, 24.23, 37.53, 31.21}), "C4(30%)"},
      {with_c4(base, 0.70), fx::vec({54.59, 26.81, 22.38, -3.78}), "C4(70%)"},
      {mu2, fx::vec({54.72, -2.43, 35.38, 12.34}), "mu2=5%"},
      {combo, fx::vec({70.75, 13.95, 16.57, -1.27}), "combined"},
  };
  for (const auto& c : cases) {
    auto cal = calibrate_gamma(c.in, Target::volatility(0.15), cs);
    expect_pct(cal.report.weights, c.want, 0.05, c.name);
  }
}

TEST(CalibrateGamma, BisectionSamplesAreMonotone) {
  auto in = fx::saa9();
  auto cs = ConstraintSet::box(9, 0.0, 1.0);
  auto cal = calibrate_gamma(in, Target::volatility(0.07), cs);
  auto s = cal.samples;
  std::sort(s.begin(), s.end());
  for (std::size_t k = 1; k < s.size(); ++k) EXPECT_GE(s[k].second, s[k - 1].second - 1e-12);
}

TEST(CalibrateGamma, UnconstrainedClosedForms) {
  auto in = fx::example1();
  auto v = calibrate_gamma(in, Target::volatility(0.2));
  EXPECT_NEAR(portfolio_vol(v.report.weights, in.sigma), 0.2, 1e-12);
  auto m = calibrate_gamma(in, Target::expected_return(0.09));
  EXPECT_NEAR(m.report.weights.dot(in.mu), 0.09, 1e-12);
}

TEST(CalibrateGamma, UnreachableTargets) {
  auto in = fx::example1();
  try {
    calibrate_gamma(in, Target::volatility(0.05), ConstraintSet::budget_only());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TargetUnreachable);
  }
  try {
    calibrate_gamma(in, Target::volatility(0.5), ConstraintSet::box(4, 0.0, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TargetUnreachable);
  }
}

TEST(CalibrateGamma, StrategicAllocationColumns) {
  auto in = fx::saa9();
  auto c0 = calibrate_gamma(in, Target::volatility(0.07), ConstraintSet::box(9, 0.0, 1.0));
  expect_pct(c0.report.weights, fx::vec({28.39, 0, 0, 69.64, 0, 0, 0, 1.17, 0.79}), 0.05, "#0");
  const Vec& x0 = c0.report.weights;
  EXPECT_NEAR(x0.dot(in.mu) * 100, 8.63, 0.05);
  EXPECT_NEAR(portfolio_vol(x0, in.sigma) * 100, 7.00, 0.05);
  MvoInputs rf = in;
  rf.r = 0.03;
  EXPECT_NEAR(sharpe_ratio(x0, rf) * 100, 80.49, 0.05);

  auto c1 = calibrate_gamma(in, Target::volatility(0.07), ConstraintSet::box(9, 0.0, 0.25));
  expect_pct(c1.report.weights, fx::vec({25, 15.90, 0, 25, 10.70, 0, 0, 21.27, 2.13}), 0.05, "#1");
  const Vec& x1 = c1.report.weights;
  EXPECT_NEAR(x1.dot(in.mu) * 100, 7.77, 0.05);
  EXPECT_NEAR(portfolio_vol(x1, in.sigma) * 100, 7.00, 0.05);
  EXPECT_NEAR(sharpe_ratio(x1, rf) * 100, 68.08, 0.05);
}

TEST(MaxSharpe, Basics) {
  MvoInputs in;
  in.sigma = Mat::Identity(2, 2);
  in.mu = fx::vec({3, 4});
  EXPECT_NEAR(max_sharpe_bound(in), 5.0, 1e-14);
  MvoInputs one;
  one.mu = fx::vec({0.08});
  one.sigma = Mat::Constant(1, 1, 0.04);
  one.r = 0.02;
  EXPECT_NEAR(max_sharpe_bound(one), 0.3, 1e-14);
}

TEST(MaxSharpe, BoundsEverySolverOutput) {
  auto in = fx::example1();
  double bound = max_sharpe_bound(in);
  auto x = solve_gamma_problem(in, 0.2578, ConstraintSet::budget_only()).weights;
  EXPECT_LE(sharpe_ratio(x, in), bound + 1e-8);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    double g = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    auto y = solve_gamma_problem(in, g, ConstraintSet::box(4, -0.5, 1.0)).weights;
    EXPECT_LE(sharpe_ratio(y, in), bound + 1e-8);
  }
}

TEST(ImpliedReturns, EqualWeightTenAssets) {
  Vec x0 = Vec::Constant(10, 0.1);
  Vec mu = implied_returns(x0, fx::bl10_sigma(), 0.0, 0.5);
  expect_pct(mu, fx::vec({2.57, 0.96, 3.02, 1.02, 4.09, 2.88, 5.76, 6.35, 6.76, 7.18}), 0.01, "mu");
}

TEST(ImpliedReturns, DiagonalUnitPortfolio) {
  Vec vol = fx::vec({0.1, 0.2, 0.3});
  Mat s = vol.array().square().matrix().asDiagonal();
  Vec mu = implied_returns(Vec::Unit(3, 1), s, 0.01, 0.4);
  EXPECT_NEAR(mu(1), 0.01 + 0.4 * 0.2, 1e-15);
  EXPECT_NEAR(mu(0), 0.01, 1e-15);
  EXPECT_NEAR(mu(2), 0.01, 1e-15);
  EXPECT_THROW(implied_returns(Vec::Zero(3), s, 0.0, 0.4), Error);
}

TEST(ImpliedReturns, RoundTrip) {
  auto in = fx::example1();
  in.r = 0.01;
  Vec x = solve_gamma_problem(in, 0.3).weights;
  double sr = sharpe_ratio(x, in);
  MvoInputs back = in;
  back.mu = implied_returns(x, in.sigma, in.r, sr);
  Vec y = solve_gamma_problem(back, 1.0).weights;
  Vec ratio = y.cwiseQuotient(x);
  EXPECT_LE(ratio.maxCoeff() - ratio.minCoeff(), 1e-10 * std::abs(ratio(0)));
}

namespace {

struct StevensRow {
  double alpha, r2, mu_hat, sigma_hat, s, omega, y, z, x;
};

void expect_stevens(const StevensReport& rep, const std::vector<StevensRow>& rows,
                    const std::vector<std::vector<double>>& betas, double tol, double omega_tol,
                    const char* what) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rep.assets[i];
    const auto& w = rows[i];
    EXPECT_NEAR(a.alpha * 100, w.alpha, tol) << what << " alpha " << i;
    EXPECT_NEAR(a.r2 * 100, w.r2, tol) << what << " r2 " << i;
    EXPECT_NEAR(a.mu_hat * 100, w.mu_hat, tol) << what << " mu_hat " << i;
    EXPECT_NEAR(a.sigma_hat * 100, w.sigma_hat, tol) << what << " sigma_hat " << i;
    EXPECT_NEAR(a.s * 100, w.s, tol) << what << " s " << i;
    EXPECT_NEAR(a.omega * 100, w.omega, omega_tol) << what << " omega " << i;
    EXPECT_NEAR(a.y_star * 100, w.y, tol) << what << " y " << i;
    EXPECT_NEAR(a.z_star * 100, w.z, tol) << what << " z " << i;
    EXPECT_NEAR(a.x_star * 100, w.x, tol) << what << " x " << i;
    for (std::size_t j = 0; j < betas[i].size(); ++j)
      EXPECT_NEAR(a.beta(Eigen::Index(j)), betas[i][j], 0.002) << what << " beta " << i << j;
  }
}

}  // namespace

TEST(HedgingDecomposition, ExampleOne) {
  auto rep = stevens_decomposition(fx::example1());
  EXPECT_NEAR(rep.gamma, 0.2578, 5e-5);
  expect_stevens(rep,
                 {{1.70, 45.83, 5.30, 10.16, 11.04, 84.62, 80.22, 132.48, 36.00},
                  {2.06, 37.77, 5.94, 11.06, 14.20, 60.68, 63.67, 125.09, 26.39},
                  {2.85, 33.52, 6.15, 11.58, 16.31, 50.43, 58.02, 118.19, 27.67},
                  {1.41, 41.50, 8.59, 16.11, 19.12, 70.94, 41.26, 85.40, 9.94}},
                 {{.139, .187, .250}, {.230, .268, .191}, {.409, .354, .045}, {.750, .347, .063}},
                 0.01, 0.01, "example-1");
}

TEST(HedgingDecomposition, HighCorrelationVariant) {
  auto in = with_corr(fx::example1(), 2, 3, 0.95);
  auto rep = stevens_decomposition(in);
  expect_stevens(rep,
                 {{3.16, 47.41, 3.84, 10.33, 10.88, 90.16, 60.73, 70.30, 52.10},
                  {2.23, 33.70, 5.77, 10.45, 14.66, 50.82, 48.20, 103.08, 20.31},
                  {1.66, 91.34, 7.34, 19.11, 5.89, 1054.10, 43.92, 39.22, 93.44},
                  {-1.61, 92.37, 11.61, 24.03, 6.90, 1211.48, 31.23, 39.25, -65.85}},
                 {{.244, -.595, .724}, {.443, .470, -.157}, {-.174, .076, .795}, {.292, -.035, 1.094}},
                 0.01, 0.5, "rho34=95%");
}

TEST(HedgingDecomposition, LowReturnVariant) {
  auto in = fx::example1();
  in.mu(0) = 0.03;
  auto rep = stevens_decomposition(in);
  auto ref = stevens_decomposition(fx::example1());
  std::vector<StevensRow> rows;
  std::vector<std::vector<double>> betas;
  const double alpha[] = {-2.30, 2.98, 4.49, 4.41}, mu_hat[] = {5.30, 5.02, 4.51, 5.59};
  const double y[] = {53.59, 99.25, 90.44, 64.31}, z[] = {206.52, 164.80, 135.19, 86.63};
  const double x[] = {-75.81, 59.46, 67.87, 48.48};
  for (int i = 0; i < 4; ++i) {
    const auto& a = ref.assets[std::size_t(i)];
    rows.push_back({alpha[i], a.r2 * 100, mu_hat[i], a.sigma_hat * 100, a.s * 100, a.omega * 100,
                    y[i], z[i], x[i]});
    betas.emplace_back(a.beta.data(), a.beta.data() + a.beta.size());
  }
  expect_stevens(rep, rows, betas, 0.01, 0.01, "mu1=3%");
  EXPECT_NEAR(ref.assets[0].r2 * 100, 45.83, 0.01);
}

TEST(HedgingDecomposition, IndependentAssets) {
  MvoInputs in;
  in.mu = fx::vec({0.05, 0.07, 0.09});
  Vec vol = fx::vec({0.1, 0.2, 0.15});
  in.sigma = vol.array().square().matrix().asDiagonal();
  auto rep = stevens_decomposition(in, 0.5);
  for (int i = 0; i < 3; ++i) {
    const auto& a = rep.assets[std::size_t(i)];
    EXPECT_LE(a.beta.cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(a.alpha, in.mu(i), 1e-15);
    EXPECT_NEAR(a.r2, 0.0, 1e-15);
    EXPECT_NEAR(a.x_star, 0.5 * in.mu(i) / (vol(i) * vol(i)), 1e-12);
  }
}

TEST(HedgingDecomposition, IdentitiesOnRandomInstances) {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 100; ++k) {
    Eigen::Index n = 3 + k % 6;
    MvoInputs in;
    in.sigma = fx::random_spd(rng, n, 0.05) * 0.04;
    in.mu = fx::random_vec(rng, n, 0.05);
    auto rep = stevens_decomposition(in, 0.4);
    Mat P = in.sigma.inverse();
    Vec xu = 0.4 * P * in.mu;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& a = rep.assets[std::size_t(i)];
      double var = in.sigma(i, i);
      EXPECT_NEAR(in.mu(i), a.mu_hat + a.alpha, 1e-10);
      EXPECT_NEAR(var, a.sigma_hat * a.sigma_hat + a.s * a.s, 1e-10);
      EXPECT_NEAR(a.omega, a.r2 / (1 - a.r2), 1e-10 * (1 + a.omega));
      EXPECT_NEAR(a.x_star, a.y_star + a.omega * (a.y_star - a.z_star),
                  1e-10 * (1 + std::abs(a.x_star)));
      EXPECT_NEAR(P(i, i), 1.0 / (var * (1 - a.r2)), 1e-8 * P(i, i));
      EXPECT_NEAR(a.x_star, xu(i), 1e-9 * (1 + std::abs(xu(i))));
    }
  }
}

TEST(HedgingDecomposition, PerfectCollinearity) {
  MvoInputs in;
  in.mu = fx::vec({0.05, 0.06});
  in.sigma = Mat::Constant(2, 2, 0.04);
  in.sigma(1, 1) += 1e-13;
  EXPECT_THROW(stevens_decomposition(in, 1.0), Error);
}

TEST(ConstantCorrelation, Values) {
  EXPECT_NEAR(constant_correlation_r2(2, 0.5), 0.25, 1e-15);
  EXPECT_EQ(constant_correlation_r2(7, 0.0), 0.0);
  EXPECT_THROW(constant_correlation_r2(4, -0.5), Error);
  MvoInputs in;
  in.mu = Vec::Constant(4, 0.05);
  in.sigma = Mat::Constant(4, 4, 0.5);
  in.sigma.diagonal().setOnes();
  auto rep = stevens_decomposition(in, 1.0);
  for (const auto& a : rep.assets) EXPECT_NEAR(a.r2, constant_correlation_r2(4, 0.5), 1e-12);
}

TEST(BoundShrinkage, MinimumVarianceBox) {
  auto in = fx::example1();
  auto cs = ConstraintSet::box(4, 0.10, 0.40);
  auto rep = solve_gamma_problem(in, 0.0, cs);
  expect_pct(rep.weights, fx::vec({40.00, 31.18, 18.82, 10.00}), 0.02, "x");
  EXPECT_NEAR(rep.duals->lower(3) * 1e4, 48.89, 0.5);
  EXPECT_NEAR(rep.duals->upper(0) * 1e4, 28.58, 0.5);
  auto sh = jagannathan_ma_shrinkage(in.sigma, cs, rep);
  expect_pct(sh.vol_tilde, fx::vec({16.80, 18.00, 20.00, 22.96}), 0.02, "vol");
  const double c[][3] = {{0, 1, 54.10}, {0, 2, 53.16}, {0, 3, 53.07},
                         {1, 2, 50.00}, {1, 3, 42.61}, {2, 3, 32.90}};
  for (const auto& e : c)
    EXPECT_NEAR(sh.corr_tilde(int(e[0]), int(e[1])) * 100, e[2], 0.02);
  Vec back = kkt_equality_solve(sh.sigma_tilde, Vec::Zero(4), Mat::Ones(1, 4), fx::vec({1}));
  EXPECT_LE((back - rep.weights).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(BoundShrinkage, ReturnTargetBox) {
  auto in = fx::example1();
  auto cs = ConstraintSet::box(4, 0.10, 0.40);
  auto cal = calibrate_gamma(in, Target::expected_return(0.09), cs);
  expect_pct(cal.report.weights, fx::vec({10, 15, 40, 35}), 0.05, "x");
  auto sh = jagannathan_ma_shrinkage(in.sigma, cs, cal.report);
  expect_pct(sh.vol_tilde, fx::vec({12.06, 18.00, 20.59, 25.00}), 0.05, "vol");
  const double c[][3] = {{0, 1, 43.87}, {0, 2, 49.20}, {0, 3, 61.43},
                         {1, 2, 51.79}, {1, 3, 50.00}, {2, 3, 41.18}};
  for (const auto& e : c)
    EXPECT_NEAR(sh.corr_tilde(int(e[0]), int(e[1])) * 100, e[2], 0.05);
  Vec back = kkt_equality_solve(sh.sigma_tilde, cal.gamma * in.mu, Mat::Ones(1, 4), fx::vec({1}));
  EXPECT_LE((back - cal.report.weights).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(BoundShrinkage, RoundTripOnRandomBoxes) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 30; ++k) {
    const Eigen::Index n = 5;
    MvoInputs in;
    in.sigma = fx::random_spd(rng, n, 0.05) * 0.04;
    in.mu = fx::random_vec(rng, n, 0.05);
    auto cs = ConstraintSet::box(n, 0.0, 0.35);
    auto rep = solve_gamma_problem(in, 0.1, cs);
    auto sh = jagannathan_ma_shrinkage(in.sigma, cs, rep);
    Vec back = kkt_equality_solve(sh.sigma_tilde, 0.1 * in.mu, Mat::Ones(1, n), fx::vec({1}));
    EXPECT_LE((back - rep.weights).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(BoundShrinkage, NoActiveConstraintsAndMissingDuals) {
  auto in = fx::example1();
  auto cs = ConstraintSet::box(4, -5.0, 5.0);
  auto rep = solve_gamma_problem(in, 0.2, cs);
  auto sh = jagannathan_ma_shrinkage(in.sigma, cs, rep);
  EXPECT_EQ((sh.sigma_tilde - in.sigma).cwiseAbs().maxCoeff(), 0.0);
  SolveReport bare;
  bare.weights = rep.weights;
  EXPECT_THROW(jagannathan_ma_shrinkage(in.sigma, cs, bare), Error);
}

TEST(TeTransform, ObjectiveIdentityAndSolverPaths) {
  std::mt19937_64 rng(12);
  auto in = fx::example1();
  Vec b = fx::pct({25, 25, 25, 25});
  const double g = 0.3;
  auto t = te_transform(in.mu, in.sigma, b, g);
  auto lhs = [&](const Vec& x) {
    Vec d = x - b;
    return 0.5 * d.dot(in.sigma * d) - g * d.dot(in.mu);
  };
  auto rhs = [&](const Vec& x) { return 0.5 * x.dot(in.sigma * x) - g * x.dot(t.mu); };
  Vec x0 = fx::random_vec(rng, 4);
  double c0 = lhs(x0) - rhs(x0);
  for (int k = 0; k < 10; ++k) {
    Vec x = fx::random_vec(rng, 4);
    EXPECT_NEAR(lhs(x) - rhs(x), c0, 1e-12);
  }
  auto via = solve_gamma_problem(t, g, ConstraintSet::budget_only()).weights;
  auto direct = make_qp(in.sigma, g * in.mu + in.sigma * b, ConstraintSet::budget_only());
  EXPECT_LE((solve_qp(direct).x - via).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(te_transform(in.mu, in.sigma, Vec::Zero(4), g).mu.isApprox(in.mu));
  EXPECT_THROW(te_transform(in.mu, in.sigma, b, 0.0), Error);
}
