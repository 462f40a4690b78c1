#ifndef ROBOMVO_TEST_FIXTURES_HPP
#define ROBOMVO_TEST_FIXTURES_HPP

#include <random>

#include <robomvo/market_data.hpp>
#include <robomvo/mvo_core.hpp>

namespace fx {

using robomvo::Mat;
using robomvo::Vec;

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

inline Vec pct(std::initializer_list<double> v) { return vec(v) / 100.0; }

inline Mat example1_corr() {
  Mat c(4, 4);
  c << 1.0, 0.5, 0.5, 0.6,
       0.5, 1.0, 0.5, 0.5,
       0.5, 0.5, 1.0, 0.4,
       0.6, 0.5, 0.4, 1.0;
  return c;
}

inline robomvo::MvoInputs example1() {
  robomvo::MvoInputs in;
  in.mu = pct({7, 8, 9, 10});
  in.sigma = robomvo::covariance_from(pct({15, 18, 20, 25}), example1_corr());
  return in;
}

inline robomvo::MvoInputs example2() {
  Mat c(4, 4);
  c << 1.0, 0.7, 0.1, -0.2,
       0.7, 1.0, 0.1, -0.2,
       0.1, 0.1, 1.0, -0.7,
      -0.2, -0.2, -0.7, 1.0;
  robomvo::MvoInputs in;
  in.mu = pct({4, 5, 9, 10});
  in.sigma = robomvo::covariance_from(pct({15, 18, 20, 25}), c);
  return in;
}

inline Vec example2_x0() { return pct({40, 30, 20, 10}); }

/// Nine asset classes of the robo-advisor illustration.
inline robomvo::MvoInputs saa9() {
  robomvo::MvoInputs in;
  in.mu = pct({4.2, 3.8, 5.3, 10.4, 9.2, 8.6, 5.3, 11.0, 8.8});
  Mat c = robomvo::from_lower_triangle({
      {100},
      {80, 100},
      {60, 40, 100},
      {-20, -20, 50, 100},
      {-10, -20, 30, 60, 100},
      {-20, -10, 20, 60, 90, 100},
      {-20, -20, 20, 50, 70, 60, 100},
      {-20, -20, 30, 60, 70, 70, 70, 100},
      {0, 0, 10, 20, 20, 20, 30, 30, 100}}) / 100.0;
  in.sigma = robomvo::covariance_from(pct({5, 5, 7, 10, 15, 15, 15, 18, 30}), c);
  in.r = 0.0;
  return in;
}

/// Ten-asset universe of the view-blending illustration.
inline Vec bl10_vol() { return pct({9.2, 7.0, 9.4, 7.6, 10.1, 7.6, 16.1, 20.5, 24.3, 17.8}); }

inline Mat bl10_sigma() {
  Mat c = robomvo::from_lower_triangle({
      {100},
      {17.7, 100},
      {98.1, 19.4, 100},
      {16.5, 99.5, 18.1, 100},
      {71.1, 2.4, 76.3, 2.1, 100},
      {85.9, 12.7, 87.6, 11.8, 89.1, 100},
      {34.5, 0.7, 38.1, 1.3, 68.8, 57.8, 100},
      {-13.2, 2.8, -4.0, 3.6, 41.0, 18.2, 59.5, 100},
      {20.3, 2.0, 27.6, 0.8, 21.6, 25.3, 8.0, 15.6, 100},
      {16.6, 10.2, 26.0, 10.5, 57.2, 44.6, 54.3, 67.7, 42.9, 100}}) / 100.0;
  return robomvo::covariance_from(bl10_vol(), c);
}

/// Random symmetric positive definite matrix with controlled conditioning.
inline Mat random_spd(std::mt19937_64& rng, Eigen::Index n, double ridge = 0.1) {
  std::normal_distribution<double> N(0.0, 1.0);
  Mat a(n + 2, n);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = N(rng);
  Mat s = a.transpose() * a / double(n + 2) + ridge * Mat::Identity(n, n);
  return 0.5 * (s + s.transpose());
}

inline Vec random_vec(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = N(rng);
  return v;
}

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = N(rng);
  return m;
}

}  // namespace fx

#endif
