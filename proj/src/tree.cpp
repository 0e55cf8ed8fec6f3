#include "uqf/tree.hpp"

#include "uqf/text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace uqf {

RegressionTree::RegressionTree(std::vector<Node> nodes, Index n_features, Vector split_gain)
    : nodes_(std::move(nodes)), n_features_(n_features), split_gain_(std::move(split_gain)) {}

Index RegressionTree::leaf_count() const {
  return std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); });
}

namespace detail {

std::vector<std::vector<std::int32_t>> sort_columns(const Matrix& x) {
  std::vector<std::vector<std::int32_t>> orders(static_cast<std::size_t>(x.cols()));
  for (Index f = 0; f < x.cols(); ++f) {
    auto& o = orders[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(x.rows()));
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](std::int32_t a, std::int32_t b) { return x(a, f) < x(b, f); });
  }
  return orders;
}

namespace {

class Builder {
 public:
  Builder(const Matrix& x, const Vector& t, std::span<const std::uint32_t> w, Index min_leaf,
          std::vector<std::vector<std::int32_t>> order)
      : x_(x), t_(t), w_(w), min_leaf_(static_cast<double>(min_leaf)), order_(std::move(order)) {
    const auto n = order_.empty() ? std::size_t{0} : order_[0].size();
    suffix_m2_.resize(n + 1);
    scratch_.resize(n);
    goes_left_.assign(static_cast<std::size_t>(x.rows()), 0);
    gain_ = Vector::Zero(x.cols());
  }

  RegressionTree build() {
    grow(0, order_[0].size());
    return RegressionTree(std::move(nodes_), x_.cols(), std::move(gain_));
  }

 private:
  double weight(std::int32_t row) const { return w_.empty() ? 1.0 : static_cast<double>(w_[static_cast<std::size_t>(row)]); }

  struct Split {
    Index feature = -1;
    double threshold = 0.0;
    double sse = 0.0;
  };

  void grow(std::size_t begin, std::size_t end) {
    const auto& rows = order_[0];
    double total_w = 0.0, sum = 0.0;
    double lo = t_(rows[begin]), hi = lo;
    for (std::size_t p = begin; p < end; ++p) {
      const auto r = rows[p];
      const double w = weight(r);
      total_w += w;
      sum += w * t_(r);
      lo = std::min(lo, t_(r));
      hi = std::max(hi, t_(r));
    }
    const double mean = sum / total_w;
    double sse = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
      const double d = t_(rows[p]) - mean;
      sse += weight(rows[p]) * d * d;
    }

    const auto self = nodes_.size();
    RegressionTree::Node node;
    node.value = mean;
    node.count = total_w;
    nodes_.push_back(node);

    if (lo == hi || static_cast<double>(end - begin) < 2.0 * min_leaf_) return;
    const Split best = find_split(begin, end, sse);
    if (best.feature < 0) return;

    gain_(best.feature) += std::max(0.0, sse - best.sse);
    const auto f = static_cast<std::size_t>(best.feature);
    for (std::size_t p = begin; p < end; ++p) {
      const auto r = order_[f][p];
      goes_left_[static_cast<std::size_t>(r)] = x_(r, best.feature) <= best.threshold;
    }
    std::size_t mid = begin;
    for (auto& col : order_) mid = partition(col, begin, end);

    nodes_[self].feature = static_cast<std::int32_t>(best.feature);
    nodes_[self].threshold = best.threshold;
    grow(begin, mid);
    nodes_[self].right = static_cast<std::int32_t>(nodes_.size());
    grow(mid, end);
  }

  // Stable partition of one column segment by goes_left_; returns the split point.
  std::size_t partition(std::vector<std::int32_t>& col, std::size_t begin, std::size_t end) {
    std::size_t left = begin, right = 0;
    for (std::size_t p = begin; p < end; ++p) {
      const auto r = col[p];
      if (goes_left_[static_cast<std::size_t>(r)])
        col[left++] = r;
      else
        scratch_[right++] = r;
    }
    std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(right),
              col.begin() + static_cast<std::ptrdiff_t>(left));
    return left;
  }

  Split find_split(std::size_t begin, std::size_t end, double node_sse) {
    Split best;
    best.sse = node_sse;
    bool found = false;
    // Near-ties keep the earlier (lower feature, lower threshold) candidate,
    // so decisions survive affine rescaling of the targets.
    const double tie = 1e-12 * node_sse;

    for (Index f = 0; f < x_.cols(); ++f) {
      const auto& col = order_[static_cast<std::size_t>(f)];
      // Weighted Welford from the right: suffix_m2_[p] covers [p, end).
      double w_acc = 0.0, mean = 0.0, m2 = 0.0;
      suffix_m2_[end - begin] = 0.0;
      for (std::size_t p = end; p-- > begin;) {
        const auto r = col[p];
        const double w = weight(r);
        w_acc += w;
        const double d = t_(r) - mean;
        mean += d * w / w_acc;
        m2 += w * d * (t_(r) - mean);
        suffix_m2_[p - begin] = m2;
      }

      w_acc = mean = m2 = 0.0;
      for (std::size_t p = begin; p + 1 < end; ++p) {
        const auto r = col[p];
        const double w = weight(r);
        w_acc += w;
        const double d = t_(r) - mean;
        mean += d * w / w_acc;
        m2 += w * d * (t_(r) - mean);

        // The leaf-size floor counts distinct rows, not bootstrap copies.
        if (static_cast<double>(p + 1 - begin) < min_leaf_) continue;
        if (static_cast<double>(end - p - 1) < min_leaf_) break;
        const double a = x_(r, f), b = x_(col[p + 1], f);
        if (!(a < b)) continue;
        const double sse = m2 + suffix_m2_[p + 1 - begin];
        if (!found || sse < best.sse - tie) {
          found = true;
          best.feature = f;
          best.sse = sse;
          double mid = a + 0.5 * (b - a);
          if (!(mid < b)) mid = a;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const Vector& t_;
  std::span<const std::uint32_t> w_;
  double min_leaf_;
  std::vector<std::vector<std::int32_t>> order_;
  std::vector<double> suffix_m2_;
  std::vector<std::int32_t> scratch_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<RegressionTree::Node> nodes_;
  Vector gain_;
};

}  // namespace

RegressionTree fit_tree_presorted(const Matrix& x, const Vector& targets, const TreeHyperparams& hp,
                                  std::span<const std::uint32_t> sample_weights,
                                  const std::vector<std::vector<std::int32_t>>& sorted_columns) {
  if (x.rows() != targets.size()) throw FitError("feature and target row counts differ");
  if (x.cols() < 1) throw FitError("no feature columns");
  if (x.rows() < 1) throw FitError("no training rows");
  if (!sample_weights.empty() && static_cast<Index>(sample_weights.size()) != x.rows())
    throw FitError("sample weight count differs from row count");
  if (hp.min_samples_leaf < 1) throw FitError("min_samples_leaf must be at least 1");
  if (!targets.array().isFinite().all()) throw FitError("non-finite training target");

  if (x.rows() < hp.min_samples_leaf)
    throw FitError("fewer training rows (" + std::to_string(x.rows()) + ") than min_samples_leaf (" +
                   std::to_string(hp.min_samples_leaf) + ")");
  if (!sample_weights.empty() && std::all_of(sample_weights.begin(), sample_weights.end(), [](auto w) { return w == 0; }))
    throw FitError("all sample weights are zero");

  std::vector<std::vector<std::int32_t>> order;
  order.reserve(sorted_columns.size());
  for (const auto& col : sorted_columns) {
    if (sample_weights.empty()) {
      order.push_back(col);
    } else {
      std::vector<std::int32_t> kept;
      kept.reserve(col.size());
      for (auto r : col)
        if (sample_weights[static_cast<std::size_t>(r)] > 0) kept.push_back(r);
      order.push_back(std::move(kept));
    }
  }
  return Builder(x, targets, sample_weights, hp.min_samples_leaf, std::move(order)).build();
}

}  // namespace detail

RegressionTree fit_tree(const Matrix& x, const Vector& targets, const TreeHyperparams& hp,
                        std::span<const std::uint32_t> sample_weights) {
  return detail::fit_tree_presorted(x, targets, hp, sample_weights, detail::sort_columns(x));
}

double predict_tree(const RegressionTree& tree, const Vector& x_query) {
  if (x_query.size() != tree.n_features())
    throw QueryError("query has " + std::to_string(x_query.size()) + " features, tree expects " +
                     std::to_string(tree.n_features()));
  const Matrix row = x_query.transpose();
  return tree.predict_row(row, 0);
}

void save_tree(const RegressionTree& tree, std::ostream& out) {
  out << "uqf-tree 1\n";
  out << "features " << tree.n_features() << '\n';
  out << "gain";
  for (Index f = 0; f < tree.split_gain().size(); ++f) out << ' ' << text::format_double(tree.split_gain()(f));
  out << '\n';
  out << "nodes " << tree.nodes().size() << '\n';
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf())
      out << "L " << text::format_double(n.value) << ' ' << text::format_double(n.count) << '\n';
    else
      out << "S " << n.feature << ' ' << text::format_double(n.threshold) << ' ' << n.right << ' '
          << text::format_double(n.value) << ' ' << text::format_double(n.count) << '\n';
  }
}

namespace {

std::vector<std::string> read_fields(std::istream& in, const char* expect) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(std::string("unexpected end of model, expected '") + expect + "'");
  std::vector<std::string> fields;
  std::istringstream ss(line);
  for (std::string f; ss >> f;) fields.push_back(f);
  if (fields.empty() || fields[0] != expect)
    throw FormatError(std::string("expected '") + expect + "', got '" + line + "'");
  return fields;
}

double number(const std::string& s) {
  auto v = text::parse_double(s);
  if (!v) throw FormatError("bad number '" + s + "' in model");
  return *v;
}

long long integer(const std::string& s) {
  auto v = text::parse_int<long long>(s);
  if (!v) throw FormatError("bad integer '" + s + "' in model");
  return *v;
}

}  // namespace

RegressionTree load_tree(std::istream& in) {
  auto header = read_fields(in, "uqf-tree");
  if (header.size() != 2 || header[1] != "1") throw FormatError("unsupported tree format version");
  auto feat = read_fields(in, "features");
  if (feat.size() != 2) throw FormatError("malformed features line");
  const Index n_features = integer(feat[1]);
  if (n_features < 1) throw FormatError("tree with no features");
  auto gain_fields = read_fields(in, "gain");
  if (static_cast<Index>(gain_fields.size()) != n_features + 1) throw FormatError("gain length mismatch");
  Vector gain(n_features);
  for (Index f = 0; f < n_features; ++f) gain(f) = number(gain_fields[static_cast<std::size_t>(f + 1)]);

  auto count_fields = read_fields(in, "nodes");
  if (count_fields.size() != 2) throw FormatError("malformed nodes line");
  const long long count = integer(count_fields[1]);
  if (count < 1) throw FormatError("tree with no nodes");

  std::vector<RegressionTree::Node> nodes(static_cast<std::size_t>(count));
  for (auto& n : nodes) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("truncated node list");
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string s; ss >> s;) f.push_back(s);
    if (f.size() == 3 && f[0] == "L") {
      n.value = number(f[1]);
      n.count = number(f[2]);
    } else if (f.size() == 6 && f[0] == "S") {
      n.feature = static_cast<std::int32_t>(integer(f[1]));
      n.threshold = number(f[2]);
      n.right = static_cast<std::int32_t>(integer(f[3]));
      n.value = number(f[4]);
      n.count = number(f[5]);
      if (n.feature < 0 || n.feature >= n_features) throw FormatError("split feature out of range");
    } else {
      throw FormatError("malformed node '" + line + "'");
    }
  }
  // Pre-order structure check: each internal node's right child must follow
  // its left subtree and lie inside the array.
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].is_leaf() && (nodes[i].right <= static_cast<std::int32_t>(i) + 1 ||
                                nodes[i].right >= static_cast<std::int32_t>(nodes.size())))
      throw FormatError("invalid child index in tree");
  return RegressionTree(std::move(nodes), n_features, std::move(gain));
}

}  // namespace uqf
