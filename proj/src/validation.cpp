#include "uqf/validation.hpp"

#include "uqf/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace uqf {

double score(MetricKind kind, const Vector& y_true, const Vector& y_pred) {
  return kind == MetricKind::r2 ? r2(y_true, y_pred) : mse(y_true, y_pred);
}

std::vector<std::vector<Index>> kfold_partition(Index n, Index k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold CV needs k >= 2");
  if (n < k) throw ConfigError("k-fold CV needs at least k rows (" + std::to_string(n) + " < " + std::to_string(k) + ")");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  Index pos = 0;
  for (Index f = 0; f < k; ++f) {
    const Index size = n / k + (f < n % k ? 1 : 0);
    folds[static_cast<std::size_t>(f)].assign(perm.begin() + pos, perm.begin() + pos + size);
    pos += size;
  }
  return folds;
}

BlockSplit blocking_split(const Vector& blocking_feature) {
  const Index n = blocking_feature.size();
  if (n < 3) throw ConfigError("blocking CV needs at least 3 rows");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return blocking_feature(a) < blocking_feature(b); });
  const Index outer = n / 3;
  BlockSplit s;
  s.train.assign(order.begin() + outer, order.end() - outer);
  s.validation.assign(order.begin(), order.begin() + outer);
  s.validation.insert(s.validation.end(), order.end() - outer, order.end());
  return s;
}

ForestHyperparams clamp_leaf(ForestHyperparams hp, Index training_rows) {
  hp.min_samples_leaf = std::min(hp.min_samples_leaf, training_rows);
  return hp;
}

namespace {

Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

Vector take(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
  return out;
}

double fit_and_score(const Matrix& x, const Vector& t, const std::vector<Index>& train,
                     const std::vector<Index>& valid, const ForestHyperparams& hp, MetricKind metric) {
  const Matrix xt = take_rows(x, train);
  const Vector tt = take(t, train);
  auto model = fit_forest(xt, tt, clamp_leaf(hp, xt.rows()));
  const Matrix xv = take_rows(x, valid);
  return score(metric, take(t, valid), predict_forest_rows(model, xv).mean);
}

}  // namespace

double kfold_cv(const Matrix& x, const Vector& targets, const ForestHyperparams& hp, Index k, MetricKind metric,
                std::uint64_t seed) {
  if (x.rows() != targets.size()) throw ConfigError("feature and target row counts differ");
  const auto folds = kfold_partition(x.rows(), k, seed);
  double total = 0.0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].empty()) throw ConfigError("empty fold");
    std::vector<Index> train;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    total += fit_and_score(x, targets, train, folds[f], hp, metric);
  }
  return total / static_cast<double>(folds.size());
}

double blocking_cv(const Matrix& x, const Vector& targets, const ForestHyperparams& hp, MetricKind metric,
                   Index blocking_feature) {
  if (x.rows() != targets.size()) throw ConfigError("feature and target row counts differ");
  if (blocking_feature < 0 || blocking_feature >= x.cols()) throw ConfigError("blocking feature out of range");
  const auto split = blocking_split(x.col(blocking_feature));
  return fit_and_score(x, targets, split.train, split.validation, hp, metric);
}

TuningResult tune_leaf_size(const std::vector<Index>& candidates, MetricKind objective,
                            const std::function<double(Index)>& evaluate) {
  if (candidates.empty()) throw TuningError("no candidate leaf sizes");
  TuningResult result;
  result.objective = objective;
  bool have = false;
  std::string last_error;
  for (Index c : candidates) {
    double s = 0.0;
    try {
      s = evaluate(c);
    } catch (const Error& e) {
      last_error = e.what();
      continue;
    }
    if (!std::isfinite(s)) continue;
    result.score_table.emplace_back(c, s);
    if (!have || better(objective, s, result.cv_score) ||
        (s == result.cv_score && c > result.best_min_samples_leaf)) {
      have = true;
      result.best_min_samples_leaf = c;
      result.cv_score = s;
    }
  }
  if (!have) throw TuningError("every candidate failed" + (last_error.empty() ? "" : ": " + last_error));
  return result;
}

TuningResult tune_min_samples_leaf(const Matrix& x, const Vector& targets, const CvScheme& scheme,
                                   const std::vector<Index>& candidates, MetricKind objective,
                                   const ForestHyperparams& base, std::uint64_t seed) {
  for (Index c : candidates)
    if (c < 1 || c > x.rows()) throw ConfigError("candidate leaf size " + std::to_string(c) + " outside [1, rows]");
  return tune_leaf_size(candidates, objective, [&](Index c) {
    ForestHyperparams hp = base;
    hp.min_samples_leaf = c;
    return scheme.kind == CvScheme::Kind::kfold ? kfold_cv(x, targets, hp, scheme.k, objective, seed)
                                                : blocking_cv(x, targets, hp, objective);
  });
}

std::vector<Index> default_candidates(Index n) {
  std::vector<Index> out;
  if (n <= 200) {
    for (Index i = 1; i <= n; ++i) out.push_back(i);
    return out;
  }
  std::set<Index> grid;
  constexpr int steps = 40;
  for (int i = 0; i < steps; ++i) {
    const double v = std::pow(static_cast<double>(n), static_cast<double>(i) / (steps - 1));
    grid.insert(std::clamp<Index>(static_cast<Index>(std::lround(v)), 1, n));
  }
  return {grid.begin(), grid.end()};
}

void write_score_table(const TuningResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "min_samples_leaf," << to_string(result.objective) << '\n';
  for (const auto& [c, s] : result.score_table) out << c << ',' << text::format_double(s) << '\n';
}

std::string to_string(MetricKind kind) { return kind == MetricKind::r2 ? "r2" : "mse"; }

MetricKind parse_metric(std::string_view name) {
  if (name == "r2") return MetricKind::r2;
  if (name == "mse") return MetricKind::mse;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

}  // namespace uqf
