#pragma once

#include "uqf/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace uqf {

struct TreeHyperparams {
  /// Minimum number of distinct training rows per leaf. Bootstrap copies of a
  /// row weight the leaf mean and split scores but count once here.
  Index min_samples_leaf = 1;
};

/// CART regression tree stored as a pre-order node array. The left child of
/// an internal node is the next node; the right child index is stored.
class RegressionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // < 0 marks a leaf
    std::int32_t right = -1;
    double threshold = 0.0;
    double value = 0.0;  // mean of the targets routed here
    double count = 0.0;  // total sample weight routed here

    bool is_leaf() const { return feature < 0; }
  };

  RegressionTree() = default;
  RegressionTree(std::vector<Node> nodes, Index n_features, Vector split_gain);

  std::span<const Node> nodes() const { return nodes_; }
  Index n_features() const { return n_features_; }
  Index leaf_count() const;

  /// Weighted squared-error reduction attributed to each feature.
  const Vector& split_gain() const { return split_gain_; }

  /// Index of the leaf node reached by row `row` of `x`; no dimension check.
  Index leaf_of(const Matrix& x, Index row) const {
    Index i = 0;
    while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      i = x(row, n.feature) <= n.threshold ? i + 1 : n.right;
    }
    return i;
  }
  double predict_row(const Matrix& x, Index row) const {
    return nodes_[static_cast<std::size_t>(leaf_of(x, row))].value;
  }

 private:
  std::vector<Node> nodes_;
  Index n_features_ = 0;
  Vector split_gain_;
};

/// Greedy variance-reduction CART fit. `sample_weights` holds integer
/// multiplicities (bootstrap counts); empty means every row counts once and
/// rows with weight zero are ignored.
RegressionTree fit_tree(const Matrix& x, const Vector& targets, const TreeHyperparams& hp,
                        std::span<const std::uint32_t> sample_weights = {});

double predict_tree(const RegressionTree& tree, const Vector& x_query);

void save_tree(const RegressionTree& tree, std::ostream& out);
RegressionTree load_tree(std::istream& in);

namespace detail {

/// Row order of each feature column, ascending by (value, row index).
std::vector<std::vector<std::int32_t>> sort_columns(const Matrix& x);

/// fit_tree with column orders precomputed by sort_columns on the same x.
RegressionTree fit_tree_presorted(const Matrix& x, const Vector& targets, const TreeHyperparams& hp,
                                  std::span<const std::uint32_t> sample_weights,
                                  const std::vector<std::vector<std::int32_t>>& sorted_columns);

}  // namespace detail

}  // namespace uqf
