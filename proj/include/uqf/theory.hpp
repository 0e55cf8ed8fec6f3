#pragma once

#include "uqf/core.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

namespace uqf::theory {

// Averaging-lengthscale law for a leaf of n points on a linear trend with
// increments delta_y and white noise sigma, scored by k-fold CV.

template <typename Scalar = double>
struct LengthscaleParams {
  Index n = 1;  // min_samples_leaf
  Index k = 5;  // folds
  Scalar delta_y = 0;
  Scalar sigma = 0;
};

namespace detail {
inline void require_folds(Index k) {
  if (k < 2) throw ConfigError("lengthscale law needs k >= 2 folds");
}
}  // namespace detail

/// Underfitting contribution: sqrt(n² dY² / 12 + n k² dY² / (12 (k-1))).
template <typename Scalar>
Scalar underfit_error(const LengthscaleParams<Scalar>& p) {
  detail::require_folds(p.k);
  const Scalar n = static_cast<Scalar>(p.n), k = static_cast<Scalar>(p.k), d2 = p.delta_y * p.delta_y;
  return std::sqrt(n * n * d2 / Scalar(12) + n * k * k * d2 / (Scalar(12) * (k - Scalar(1))));
}

/// Noise contribution: sigma / sqrt(n (k-1) / k).
template <typename Scalar>
Scalar noise_error(const LengthscaleParams<Scalar>& p) {
  detail::require_folds(p.k);
  const Scalar n = static_cast<Scalar>(p.n), k = static_cast<Scalar>(p.k);
  return p.sigma / std::sqrt(n * (k - Scalar(1)) / k);
}

/// n³k²dY²/(6(k-1)²) + n²k³dY²/(12(k-1)²); equals sigma² at the optimum.
template <typename Scalar>
Scalar eq2_lhs(Index n, Index k, Scalar delta_y) {
  detail::require_folds(k);
  const Scalar nn = static_cast<Scalar>(n), kk = static_cast<Scalar>(k);
  const Scalar km1 = (kk - Scalar(1)) * (kk - Scalar(1));
  const Scalar d2 = delta_y * delta_y;
  return nn * nn * nn * kk * kk * d2 / (Scalar(6) * km1) + nn * nn * kk * kk * kk * d2 / (Scalar(12) * km1);
}

/// Total squared CV error whose stationarity condition in n is exactly
/// eq2_lhs(n) = sigma²: a leaf of n training-fold points spans
/// n k dY / (k-1), giving n²k²dY²/(12(k-1)²) + n k³dY²/(12(k-1)²) + sigma²/n.
template <typename Scalar>
Scalar total_squared_error(const LengthscaleParams<Scalar>& p) {
  detail::require_folds(p.k);
  const Scalar n = static_cast<Scalar>(p.n), k = static_cast<Scalar>(p.k);
  const Scalar km1 = (k - Scalar(1)) * (k - Scalar(1));
  const Scalar d2 = p.delta_y * p.delta_y;
  return n * n * k * k * d2 / (Scalar(12) * km1) + n * k * k * k * d2 / (Scalar(12) * km1) + p.sigma * p.sigma / n;
}

/// Smallest n in [1, n_max] minimizing total_squared_error (exact scan).
template <typename Scalar>
Index optimal_n(Index k, Scalar delta_y, Scalar sigma, Index n_max = 100000) {
  detail::require_folds(k);
  if (n_max < 1) throw ConfigError("n_max must be positive");
  Index best = 1;
  Scalar best_err = total_squared_error(LengthscaleParams<Scalar>{1, k, delta_y, sigma});
  for (Index n = 2; n <= n_max; ++n) {
    const Scalar e = total_squared_error(LengthscaleParams<Scalar>{n, k, delta_y, sigma});
    if (e < best_err) {
      best = n;
      best_err = e;
    } else if (e > best_err) {
      break;  // convex in n
    }
  }
  return best;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
};

/// Ordinary least squares y = a x + c with standard errors.
LineFit fit_line(const Vector& x, const Vector& y);

struct LengthscaleConfig {
  Index n_points = 1000;
  double x_min = 0.0;
  double x_max = 10.0;
  Index k = 5;
  Index n_trees = 125;
  std::vector<Index> candidates;  // empty: 1..150
  std::uint64_t seed = 0;
  Index repeats = 1;  // datasets per sigma, each with its own seed
};

struct LengthscaleRow {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  Index n_opt = 0;
  double ratio_sq = 0.0;  // (sigma / delta_y)²
  double lhs = 0.0;       // eq2_lhs(n_opt, k, 1)
};

struct LengthscaleResult {
  double delta_y = 0.0;
  std::vector<LengthscaleRow> rows;
  LineFit fit;  // lhs against ratio_sq
};

/// Delta Y of the unit-slope linear trend on the configured grid.
double linear_delta_y(const LengthscaleConfig& config);

/// For each sigma: draw Y ~ N(X, sigma²), tune min_samples_leaf by k-fold
/// CV MSE, record eq2_lhs at the tuned n, then fit a line through all points.
LengthscaleResult lengthscale_experiment(const std::vector<double>& sigmas, const LengthscaleConfig& config);

/// Columns sigma,n_opt,lhs,ratio_sq.
void write_lengthscale_csv(const LengthscaleResult& result, const std::filesystem::path& path);

}  // namespace uqf::theory
