#include "uqf/forest.hpp"

#include "uqf/text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

namespace uqf {

ForestModel::ForestModel(std::vector<RegressionTree> trees, ForestHyperparams hp, Index n_features,
                         Vector importances)
    : trees_(std::move(trees)), hp_(hp), n_features_(n_features), importances_(std::move(importances)) {}

std::span<const std::int32_t> ForestModel::out_of_bag(Index tree) const {
  if (oob_.empty()) throw QueryError("model carries no out-of-bag metadata");
  return oob_.at(static_cast<std::size_t>(tree));
}

std::uint64_t tree_seed(std::uint64_t master_seed, Index index) {
  return mix_seed(master_seed, static_cast<std::uint64_t>(index));
}

std::vector<std::uint32_t> bootstrap_counts(Index n_rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick(0, n_rows - 1);
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(n_rows), 0);
  for (Index i = 0; i < n_rows; ++i) ++counts[static_cast<std::size_t>(pick(rng))];
  return counts;
}

namespace {

Vector normalized(const Vector& raw) {
  const double total = raw.sum();
  if (!(total > 0.0)) return Vector::Constant(raw.size(), 1.0 / static_cast<double>(raw.size()));
  return raw / total;
}

template <typename Fn>
void for_each_tree(Index n_trees, Fn&& fn) {
  const auto hw = static_cast<Index>(std::max(1u, std::thread::hardware_concurrency()));
  const Index workers = std::min(hw, n_trees);
  if (workers <= 1) {
    for (Index i = 0; i < n_trees; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (Index w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (Index i = w; i < n_trees; i += workers) fn(i);
    });
}

}  // namespace

ForestModel fit_forest(const Matrix& x, const Vector& targets, const ForestHyperparams& hp) {
  if (hp.n_trees < 1) throw FitError("n_trees must be at least 1");
  if (hp.min_samples_leaf < 1) throw FitError("min_samples_leaf must be at least 1");
  if (x.rows() != targets.size()) throw FitError("feature and target row counts differ");
  if (x.rows() < hp.min_samples_leaf)
    throw FitError("fewer training rows (" + std::to_string(x.rows()) + ") than min_samples_leaf (" +
                   std::to_string(hp.min_samples_leaf) + ")");

  const auto sorted = detail::sort_columns(x);
  const auto n_trees = static_cast<std::size_t>(hp.n_trees);
  std::vector<RegressionTree> trees(n_trees);
  std::vector<std::vector<std::int32_t>> oob(n_trees);
  const TreeHyperparams thp{hp.min_samples_leaf};

  for_each_tree(hp.n_trees, [&](Index i) {
    const auto counts = bootstrap_counts(x.rows(), tree_seed(hp.seed, i));
    auto& out = oob[static_cast<std::size_t>(i)];
    for (std::size_t r = 0; r < counts.size(); ++r)
      if (counts[r] == 0) out.push_back(static_cast<std::int32_t>(r));
    trees[static_cast<std::size_t>(i)] = detail::fit_tree_presorted(x, targets, thp, counts, sorted);
  });

  Vector raw = Vector::Zero(x.cols());
  for (const auto& t : trees) raw += t.split_gain();
  raw /= static_cast<double>(hp.n_trees);

  ForestModel model(std::move(trees), hp, x.cols(), normalized(raw));
  model.oob_ = std::move(oob);
  return model;
}

Matrix tree_predictions(const ForestModel& model, const Matrix& queries, Index n_trees) {
  if (queries.cols() != model.n_features())
    throw QueryError("queries have " + std::to_string(queries.cols()) + " features, model expects " +
                     std::to_string(model.n_features()));
  const auto trees = model.trees();
  const Index used = n_trees < 0 ? static_cast<Index>(trees.size())
                                 : std::min<Index>(n_trees, static_cast<Index>(trees.size()));
  Matrix out(used, queries.rows());
  for (Index t = 0; t < used; ++t)
    for (Index q = 0; q < queries.rows(); ++q) out(t, q) = trees[static_cast<std::size_t>(t)].predict_row(queries, q);
  return out;
}

EnsemblePrediction summarize(const Matrix& per_tree) {
  EnsemblePrediction p{Vector(per_tree.cols()), Vector(per_tree.cols())};
  const auto n = static_cast<double>(per_tree.rows());
  for (Index q = 0; q < per_tree.cols(); ++q) {
    auto col = per_tree.col(q);
    if (col.minCoeff() == col.maxCoeff()) {
      p.mean(q) = col(0);
      p.std(q) = 0.0;
      continue;
    }
    const double mean = col.sum() / n;
    p.mean(q) = mean;
    p.std(q) = std::sqrt((col.array() - mean).square().sum() / n);
  }
  return p;
}

EnsemblePrediction predict_forest_rows(const ForestModel& model, const Matrix& queries) {
  return summarize(tree_predictions(model, queries));
}

PredictionWithUncertainty predict_forest(const ForestModel& model, const Vector& x_query) {
  if (x_query.size() != model.n_features())
    throw QueryError("query has " + std::to_string(x_query.size()) + " features, model expects " +
                     std::to_string(model.n_features()));
  const Matrix row = x_query.transpose();
  auto p = predict_forest_rows(model, row);
  return {p.mean(0), p.std(0)};
}

EnsemblePrediction predict_out_of_bag(const ForestModel& model, const Matrix& training_x) {
  if (!model.has_out_of_bag()) throw QueryError("model carries no out-of-bag metadata");
  const Matrix all = tree_predictions(model, training_x);
  EnsemblePrediction full = summarize(all);

  const Index n = training_x.rows();
  std::vector<std::vector<double>> per_row(static_cast<std::size_t>(n));
  for (Index t = 0; t < all.rows(); ++t)
    for (auto r : model.out_of_bag(t)) {
      if (r >= n) throw QueryError("training matrix smaller than the fitted one");
      per_row[static_cast<std::size_t>(r)].push_back(all(t, r));
    }

  for (Index r = 0; r < n; ++r) {
    const auto& v = per_row[static_cast<std::size_t>(r)];
    if (v.empty()) continue;
    Matrix col = Eigen::Map<const Matrix>(v.data(), static_cast<Index>(v.size()), 1);
    auto s = summarize(col);
    full.mean(r) = s.mean(0);
    full.std(r) = s.std(0);
  }
  return full;
}

const Vector& feature_importances(const ForestModel& model) { return model.importances(); }

void save_forest(const ForestModel& model, std::ostream& out) {
  const auto& hp = model.hyperparams();
  out << "uqf-forest 1\n";
  out << "n_trees " << hp.n_trees << '\n';
  out << "min_samples_leaf " << hp.min_samples_leaf << '\n';
  out << "seed " << hp.seed << '\n';
  out << "n_features " << model.n_features() << '\n';
  out << "importances";
  for (Index f = 0; f < model.importances().size(); ++f) out << ' ' << text::format_double(model.importances()(f));
  out << '\n';
  for (const auto& t : model.trees()) save_tree(t, out);
  out << "end-forest\n";
}

namespace {

std::vector<std::string> fields_of(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("unexpected end of forest, expected '" + key + "'");
  std::istringstream ss(line);
  std::vector<std::string> f;
  for (std::string s; ss >> s;) f.push_back(s);
  if (f.empty() || f[0] != key) throw FormatError("expected '" + key + "', got '" + line + "'");
  return f;
}

template <typename Int>
Int single_int(std::istream& in, const std::string& key) {
  auto f = fields_of(in, key);
  if (f.size() != 2) throw FormatError("malformed '" + key + "' line");
  auto v = text::parse_int<Int>(f[1]);
  if (!v) throw FormatError("bad integer for '" + key + "'");
  return *v;
}

}  // namespace

ForestModel load_forest(std::istream& in) {
  auto header = fields_of(in, "uqf-forest");
  if (header.size() != 2 || header[1] != "1") throw FormatError("unsupported forest format version");
  ForestHyperparams hp;
  hp.n_trees = single_int<Index>(in, "n_trees");
  hp.min_samples_leaf = single_int<Index>(in, "min_samples_leaf");
  hp.seed = single_int<std::uint64_t>(in, "seed");
  const auto n_features = single_int<Index>(in, "n_features");
  if (hp.n_trees < 1 || n_features < 1) throw FormatError("forest header out of range");

  auto imp = fields_of(in, "importances");
  if (static_cast<Index>(imp.size()) != n_features + 1) throw FormatError("importance length mismatch");
  Vector importances(n_features);
  for (Index f = 0; f < n_features; ++f) {
    auto v = text::parse_double(imp[static_cast<std::size_t>(f + 1)]);
    if (!v) throw FormatError("bad importance value");
    importances(f) = *v;
  }

  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(hp.n_trees));
  for (Index t = 0; t < hp.n_trees; ++t) {
    trees.push_back(load_tree(in));
    if (trees.back().n_features() != n_features) throw FormatError("tree feature count mismatch");
  }
  fields_of(in, "end-forest");
  return ForestModel(std::move(trees), hp, n_features, std::move(importances));
}

}  // namespace uqf
