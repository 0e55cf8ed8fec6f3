#pragma once

#include "uqf/core.hpp"
#include "uqf/forest.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace uqf {

enum class MetricKind { r2, mse };

struct Metric {
  MetricKind kind = MetricKind::r2;
  double value = 0.0;
};

/// Coefficient of determination, 1 - SS_res / SS_tot. Throws MetricError
/// when y_true is constant, where R² is undefined.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar r2(const Eigen::MatrixBase<DerivedA>& y_true, const Eigen::MatrixBase<DerivedB>& y_pred) {
  using Scalar = typename DerivedA::Scalar;
  if (y_true.size() != y_pred.size()) throw MetricError("r2: length mismatch");
  if (y_true.size() == 0) throw MetricError("r2: empty input");
  const Scalar mean = y_true.mean();
  const Scalar ss_tot = (y_true.array() - mean).square().sum();
  if (!(ss_tot > Scalar(0))) throw MetricError("r2: constant y_true, coefficient of determination undefined");
  const Scalar ss_res = (y_true - y_pred).squaredNorm();
  return Scalar(1) - ss_res / ss_tot;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar mse(const Eigen::MatrixBase<DerivedA>& y_true, const Eigen::MatrixBase<DerivedB>& y_pred) {
  if (y_true.size() != y_pred.size()) throw MetricError("mse: length mismatch");
  if (y_true.size() == 0) throw MetricError("mse: empty input");
  return (y_true - y_pred).squaredNorm() / static_cast<typename DerivedA::Scalar>(y_true.size());
}

double score(MetricKind kind, const Vector& y_true, const Vector& y_pred);

/// True when `a` is a strictly better score than `b` under `kind`.
inline bool better(MetricKind kind, double a, double b) { return kind == MetricKind::r2 ? a > b : a < b; }

struct CvScheme {
  enum class Kind { kfold, blocking };
  Kind kind = Kind::kfold;
  Index k = 5;  // ignored for blocking, which always uses three blocks
};

/// Shuffle 0..n-1 once with `seed` and cut into k near-equal folds (the
/// first n % k folds get one extra row).
std::vector<std::vector<Index>> kfold_partition(Index n, Index k, std::uint64_t seed);

struct BlockSplit {
  std::vector<Index> train;       // middle block
  std::vector<Index> validation;  // outer blocks, in X order
};

/// Three contiguous blocks along `blocking_feature`; the outer blocks have
/// floor(n/3) rows each and the middle block takes the remainder.
BlockSplit blocking_split(const Vector& blocking_feature);

/// Forest fits inside CV clamp min_samples_leaf to the fold's training rows,
/// which reduces every tree to a single leaf rather than failing.
ForestHyperparams clamp_leaf(ForestHyperparams hp, Index training_rows);

double kfold_cv(const Matrix& x, const Vector& targets, const ForestHyperparams& hp, Index k, MetricKind metric,
                std::uint64_t seed);

double blocking_cv(const Matrix& x, const Vector& targets, const ForestHyperparams& hp, MetricKind metric,
                   Index blocking_feature = 0);

struct TuningResult {
  Index best_min_samples_leaf = 0;
  double cv_score = 0.0;
  MetricKind objective = MetricKind::r2;
  std::vector<std::pair<Index, double>> score_table;
};

/// Grid search: evaluate(candidate) returns a CV score; the best score wins,
/// ties go to the larger leaf size. Candidates whose evaluation throws a
/// uqf::Error are left out of the table.
TuningResult tune_leaf_size(const std::vector<Index>& candidates, MetricKind objective,
                            const std::function<double(Index)>& evaluate);

TuningResult tune_min_samples_leaf(const Matrix& x, const Vector& targets, const CvScheme& scheme,
                                   const std::vector<Index>& candidates, MetricKind objective,
                                   const ForestHyperparams& base, std::uint64_t seed);

/// 1..n for n <= 200, otherwise ~40 geometrically spaced integers in [1, n].
std::vector<Index> default_candidates(Index n);

void write_score_table(const TuningResult& result, const std::filesystem::path& path);

std::string to_string(MetricKind kind);
MetricKind parse_metric(std::string_view name);

}  // namespace uqf
