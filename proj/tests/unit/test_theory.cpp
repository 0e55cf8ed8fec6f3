#include "generators.hpp"
#include "uqf/theory.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace uqf;
using namespace uqf::theory;

namespace {

// Continuous eq2_lhs, evaluated independently of the library.
double lhs_real(double n, double k, double dy) {
  const double km1 = (k - 1) * (k - 1);
  return n * n * n * k * k * dy * dy / (6 * km1) + n * n * k * k * k * dy * dy / (12 * km1);
}

double bisect_root(double k, double dy, double sigma) {
  double lo = 0, hi = 1;
  while (lhs_real(hi, k, dy) < sigma * sigma) hi *= 2;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (lhs_real(mid, k, dy) < sigma * sigma ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("closed-form examples") {
  // 25²·0.0016/12 + 25·25·0.0016/48 = 0.083333 + 0.020833
  CHECK(underfit_error(LengthscaleParams<double>{25, 5, 0.04, 0}) ==
        doctest::Approx(std::sqrt(1.0 / 12 + 1.0 / 48)).epsilon(1e-14));
  CHECK(underfit_error(LengthscaleParams<double>{25, 5, 0.04, 0}) == doctest::Approx(0.32275).epsilon(1e-4));
  CHECK(underfit_error(LengthscaleParams<double>{25, 5, 0.0, 1}) == 0.0);
  CHECK(noise_error(LengthscaleParams<double>{25, 5, 0, 1}) == doctest::Approx(1 / std::sqrt(20.0)));
  CHECK(noise_error(LengthscaleParams<double>{25, 5, 0, 0}) == 0.0);
  CHECK(eq2_lhs<double>(2, 5, 1.0) == doctest::Approx(4.6875).epsilon(1e-15));
  CHECK(eq2_lhs<double>(0, 5, 1.0) == 0.0);
  CHECK(eq2_lhs<float>(2, 5, 1.0f) == doctest::Approx(4.6875f));
  CHECK_THROWS_AS(eq2_lhs<double>(2, 1, 1.0), ConfigError);
  CHECK_THROWS_AS(underfit_error(LengthscaleParams<double>{2, 1, 1, 1}), ConfigError);
}

TEST_CASE("property: homogeneity and square-root laws") {
  testing::Gen g(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = g.integer(1, 500), k = g.integer(2, 20);
    const double dy = g.uniform(1e-3, 2), sigma = g.uniform(0, 3), c = g.uniform(0.1, 10);
    const LengthscaleParams<double> p{n, k, dy, sigma};
    CHECK(underfit_error(LengthscaleParams<double>{n, k, c * dy, sigma}) ==
          doctest::Approx(c * underfit_error(p)).epsilon(1e-12));
    CHECK(eq2_lhs(n, k, c * dy) == doctest::Approx(c * c * eq2_lhs(n, k, dy)).epsilon(1e-12));
    CHECK(noise_error(LengthscaleParams<double>{4 * n, k, dy, sigma}) ==
          doctest::Approx(noise_error(p) / 2).epsilon(1e-12));
    CHECK(eq2_lhs(n, k, dy) == doctest::Approx(lhs_real(double(n), double(k), dy)).epsilon(1e-12));
  }
}

TEST_CASE("property: optimal_n agrees with the continuous root within one") {
  testing::Gen g(2);
  for (int trial = 0; trial < 300; ++trial) {
    const Index k = g.integer(2, 10);
    const double dy = std::pow(10.0, g.uniform(-3, 0)), sigma = std::pow(10.0, g.uniform(-1, 1));
    const double root = bisect_root(double(k), dy, sigma);
    if (root < 1) continue;
    const Index n = optimal_n(k, dy, sigma);
    CHECK(std::abs(double(n) - root) <= 1.0);
    // Integer-scan minimum brackets the stationarity condition.
    CHECK(eq2_lhs(n - 1, k, dy) <= sigma * sigma + 1e-12);
    CHECK(eq2_lhs(n + 1, k, dy) >= sigma * sigma - 1e-12);
  }
}

TEST_CASE("optimal_n edge cases and monotonicity") {
  CHECK(optimal_n<double>(5, 0.01, 1e-9) == 1);
  // sigma² = eq2_lhs(25) puts the optimum at 25.
  const double dy = 0.01, sigma = std::sqrt(eq2_lhs<double>(25, 5, dy));
  const Index n = optimal_n(5, dy, sigma);
  CHECK(n >= 23);
  CHECK(n <= 27);
  Index prev = 0;
  for (double s = 0.1; s < 5; s *= 1.5) {
    const Index cur = optimal_n(5, dy, s);
    CHECK(cur >= prev);
    prev = cur;
  }
  CHECK(optimal_n(5, dy, 2.0) > optimal_n(5, dy, 1.0));
  CHECK_THROWS_AS(optimal_n(5, dy, 1.0, 0), ConfigError);
}

TEST_CASE("fit_line recovers an exact line and reports standard errors") {
  Vector x(5), y(5);
  x << 0, 1, 2, 3, 4;
  y = 2 * x.array() + 1;
  auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2));
  CHECK(f.intercept == doctest::Approx(1));
  CHECK(f.slope_se == doctest::Approx(0).scale(1));
  y(2) += 1;
  f = fit_line(x, y);
  // Residuals after removing the symmetric bump: least squares by hand.
  const double xm = 2, ym = y.mean();
  double sxy = 0, sxx = 0;
  for (Index i = 0; i < 5; ++i) sxy += (x(i) - xm) * (y(i) - ym), sxx += (x(i) - xm) * (x(i) - xm);
  const double slope = sxy / sxx, icpt = ym - slope * xm;
  double rss = 0;
  for (Index i = 0; i < 5; ++i) rss += std::pow(y(i) - slope * x(i) - icpt, 2);
  CHECK(f.slope == doctest::Approx(slope));
  CHECK(f.slope_se == doctest::Approx(std::sqrt(rss / 3 / sxx)));
  CHECK(f.intercept_se == doctest::Approx(std::sqrt(rss / 3 * (1.0 / 5 + xm * xm / sxx))));
  CHECK_THROWS_AS(fit_line(Vector::Zero(2), Vector::Zero(2)), ConfigError);
  CHECK_THROWS_AS(fit_line(Vector::Ones(4), Vector::Zero(4)), ConfigError);
}

TEST_CASE("small lengthscale run writes a table") {
  LengthscaleConfig cfg;
  cfg.n_points = 200;
  cfg.n_trees = 20;
  cfg.candidates = {1, 2, 4, 8, 16, 32};
  cfg.seed = 3;
  const auto res = lengthscale_experiment({0.0, 0.5, 1.0, 2.0}, cfg);
  CHECK(res.delta_y == doctest::Approx(10.0 / 199));
  REQUIRE(res.rows.size() == 4);
  CHECK(res.rows[0].n_opt <= 2);
  CHECK(res.rows[0].lhs == doctest::Approx(eq2_lhs<double>(res.rows[0].n_opt, 5, 1.0)));
  CHECK(res.rows[2].ratio_sq == doctest::Approx(std::pow(1.0 / res.delta_y, 2)));
  for (std::size_t i = 1; i < res.rows.size(); ++i) CHECK(res.rows[i].n_opt >= res.rows[0].n_opt);
  const auto dir = testing::scratch_dir("theory");
  write_lengthscale_csv(res, dir / "l.csv");
  std::ifstream in(dir / "l.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "sigma,n_opt,lhs,ratio_sq");
}
