#pragma once

#include "uqf/core.hpp"
#include "uqf/tree.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace uqf {

struct ForestHyperparams {
  Index n_trees = 125;
  Index min_samples_leaf = 1;
  std::uint64_t seed = 0;
};

struct PredictionWithUncertainty {
  double mean = 0.0;
  double std = 0.0;  // population std across trees
};

struct EnsemblePrediction {
  Vector mean;
  Vector std;
};

/// Bootstrap ensemble of regression trees. Every tree sees N rows drawn with
/// replacement from the training set; no per-split feature subsampling.
class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<RegressionTree> trees, ForestHyperparams hp, Index n_features, Vector importances);

  std::span<const RegressionTree> trees() const { return trees_; }
  const ForestHyperparams& hyperparams() const { return hp_; }
  Index n_features() const { return n_features_; }
  const Vector& importances() const { return importances_; }

  /// Training rows left out of tree `i`'s bootstrap draw. Only populated by
  /// fit_forest; a loaded model has no training metadata.
  std::span<const std::int32_t> out_of_bag(Index tree) const;
  bool has_out_of_bag() const { return !oob_.empty(); }

 private:
  friend ForestModel fit_forest(const Matrix&, const Vector&, const ForestHyperparams&);

  std::vector<RegressionTree> trees_;
  ForestHyperparams hp_;
  Index n_features_ = 0;
  Vector importances_;
  std::vector<std::vector<std::int32_t>> oob_;
};

/// Seed of tree `index`'s bootstrap stream. Depends only on (seed, index), so
/// growing the ensemble never reshuffles earlier trees.
std::uint64_t tree_seed(std::uint64_t master_seed, Index index);

/// Bootstrap multiplicities for one tree.
std::vector<std::uint32_t> bootstrap_counts(Index n_rows, std::uint64_t seed);

ForestModel fit_forest(const Matrix& x, const Vector& targets, const ForestHyperparams& hp);

PredictionWithUncertainty predict_forest(const ForestModel& model, const Vector& x_query);
EnsemblePrediction predict_forest_rows(const ForestModel& model, const Matrix& queries);

/// Per-tree predictions, one row per tree and one column per query. The
/// optional `n_trees` keeps only the first trees of the ensemble.
Matrix tree_predictions(const ForestModel& model, const Matrix& queries, Index n_trees = -1);

/// Mean and std per column of a tree-prediction matrix.
EnsemblePrediction summarize(const Matrix& per_tree);

/// Out-of-bag mean/std for each training row; rows that were in every
/// bootstrap draw fall back to the full-ensemble prediction.
EnsemblePrediction predict_out_of_bag(const ForestModel& model, const Matrix& training_x);

const Vector& feature_importances(const ForestModel& model);

void save_forest(const ForestModel& model, std::ostream& out);
ForestModel load_forest(std::istream& in);

}  // namespace uqf
