#include "generators.hpp"
#include "uqf/tree.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

using namespace uqf;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix x(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double e : v) x(i++, 0) = e;
  return x;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double e : v) out(i++) = e;
  return out;
}

double weight(const std::vector<std::uint32_t>& w, Index r) { return w.empty() ? 1.0 : double(w[std::size_t(r)]); }

// Weighted sum of squared deviations, two-pass.
double sse(const std::vector<Index>& rows, const Vector& t, const std::vector<std::uint32_t>& w) {
  double sw = 0, s = 0;
  for (Index r : rows) sw += weight(w, r), s += weight(w, r) * t(r);
  const double m = s / sw;
  double out = 0;
  for (Index r : rows) out += weight(w, r) * (t(r) - m) * (t(r) - m);
  return out;
}

// Exhaustive search over every feature and every cut between distinct
// values; the leaf-size floor counts distinct rows.
double best_split_sse(const Matrix& x, const Vector& t, const std::vector<std::uint32_t>& w,
                      const std::vector<Index>& rows, Index min_leaf) {
  double best = std::numeric_limits<double>::infinity();
  for (Index f = 0; f < x.cols(); ++f) {
    std::set<double> values;
    for (Index r : rows) values.insert(x(r, f));
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      std::vector<Index> l, rr;
      for (Index r : rows) (x(r, f) <= *it ? l : rr).push_back(r);
      if (Index(l.size()) < min_leaf || Index(rr.size()) < min_leaf) continue;
      best = std::min(best, sse(l, t, w) + sse(rr, t, w));
    }
  }
  return best;
}

std::vector<Index> rows_at_nodes(const RegressionTree& tree, const Matrix& x, const std::vector<std::uint32_t>& w,
                                 std::vector<std::vector<Index>>& per_node) {
  per_node.assign(tree.nodes().size(), {});
  for (Index r = 0; r < x.rows(); ++r) {
    if (weight(w, r) == 0) continue;
    Index i = 0;
    for (;;) {
      per_node[std::size_t(i)].push_back(r);
      const auto& n = tree.nodes()[std::size_t(i)];
      if (n.is_leaf()) break;
      i = x(r, n.feature) <= n.threshold ? i + 1 : n.right;
    }
  }
  return {};
}

std::string serialize(const RegressionTree& t) {
  std::ostringstream os;
  save_tree(t, os);
  return os.str();
}

}  // namespace

TEST_CASE("constant targets give a single leaf") {
  const auto tree = fit_tree(column({0, 1, 2, 3, 4}), Vector::Constant(5, 5.0), {1});
  CHECK(tree.nodes().size() == 1);
  CHECK(tree.nodes()[0].value == 5.0);
  CHECK(predict_tree(tree, vec({-100})) == 5.0);
}

TEST_CASE("two-step data splits at the midpoint") {
  const auto tree = fit_tree(column({0, 1, 2, 3}), vec({0, 0, 10, 10}), {1});
  REQUIRE(tree.nodes().size() == 3);
  CHECK(tree.nodes()[0].feature == 0);
  CHECK(tree.nodes()[0].threshold == 1.5);
  CHECK(tree.nodes()[1].value == 0.0);
  CHECK(tree.nodes()[2].value == 10.0);
  CHECK(predict_tree(tree, vec({0.7})) == 0.0);
  CHECK(predict_tree(tree, vec({1.5})) == 0.0);
  CHECK(predict_tree(tree, vec({100})) == 10.0);
  CHECK(predict_tree(tree, vec({-100})) == 0.0);
  CHECK_THROWS_AS(predict_tree(tree, vec({1, 2})), QueryError);
}

TEST_CASE("min_samples_leaf equal to the row count averages everything") {
  const Vector t = vec({1, 4, 2, 8, 5});
  const auto tree = fit_tree(column({0, 1, 2, 3, 4}), t, {5});
  REQUIRE(tree.nodes().size() == 1);
  CHECK(tree.nodes()[0].value == doctest::Approx(t.mean()).epsilon(1e-15));
  CHECK_THROWS_AS(fit_tree(column({0, 1}), vec({1, 2}), {3}), FitError);
  CHECK_THROWS_AS(fit_tree(column({0, 1}), vec({1, 2}), {0}), FitError);
}

TEST_CASE("weights act as multiplicities for the leaf mean") {
  const std::vector<std::uint32_t> w{3, 0, 1};
  const auto tree = fit_tree(column({0, 1, 2}), vec({1, 100, 5}), {2}, w);
  REQUIRE(tree.nodes().size() == 1);
  CHECK(tree.nodes()[0].value == doctest::Approx((3 * 1 + 5) / 4.0));
  CHECK(tree.nodes()[0].count == 4.0);
}

TEST_CASE("leaf-size floor counts distinct rows") {
  // Row 0 drawn four times is still one row: no leaf may hold it alone when
  // min_samples_leaf is 2.
  const std::vector<std::uint32_t> w{4, 1, 1, 1};
  const auto tree = fit_tree(column({0, 1, 2, 3}), vec({10, 0, 0, 0}), {2}, w);
  std::vector<std::vector<Index>> per_node;
  rows_at_nodes(tree, column({0, 1, 2, 3}), w, per_node);
  for (std::size_t i = 0; i < per_node.size(); ++i)
    if (tree.nodes()[i].is_leaf()) CHECK(per_node[i].size() >= 2);
}

TEST_CASE("ties prefer the lower feature and the lower threshold") {
  // Both features separate the targets identically.
  Matrix x(4, 2);
  x << 0, 0, 1, 1, 2, 2, 3, 3;
  const auto tree = fit_tree(x, vec({0, 0, 1, 1}), {1});
  CHECK(tree.nodes()[0].feature == 0);
  // Symmetric data: cuts at 0.5 and 2.5 tie; the lower one wins.
  const auto sym = fit_tree(column({0, 1, 2, 3}), vec({0, 1, 1, 0}), {1});
  CHECK(sym.nodes()[0].threshold == 0.5);
}

TEST_CASE("midpoint that rounds up to the upper value falls back to the lower value") {
  const double a = 1.0, b = std::nextafter(1.0, 2.0);
  const auto tree = fit_tree(column({a, b}), vec({0, 1}), {1});
  REQUIRE(tree.nodes().size() == 3);
  CHECK(tree.nodes()[0].threshold == a);
  CHECK(predict_tree(tree, vec({a})) == 0.0);
  CHECK(predict_tree(tree, vec({b})) == 1.0);
}

TEST_CASE("property: greedy split is optimal at every node (200 random instances)") {
  testing::Gen g(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = g.integer(2, 12), p = g.integer(1, 2);
    const Matrix x = g.features(n, p, g.coin());
    Vector t = g.targets(n);
    if (g.integer(0, 4) == 0) t = t.array().round();  // repeated targets
    std::vector<std::uint32_t> w;
    if (g.coin()) {
      w.resize(std::size_t(n));
      for (auto& e : w) e = std::uint32_t(g.integer(0, 3));
      if (std::all_of(w.begin(), w.end(), [](auto e) { return e == 0; })) w[0] = 1;
    }
    const Index min_leaf = g.integer(1, 3);
    if (n < min_leaf) continue;
    const auto tree = fit_tree(x, t, {min_leaf}, w);

    std::vector<std::vector<Index>> per_node;
    rows_at_nodes(tree, x, w, per_node);
    for (std::size_t i = 0; i < per_node.size(); ++i) {
      const auto& node = tree.nodes()[i];
      const auto& rows = per_node[i];
      REQUIRE_FALSE(rows.empty());
      const double node_sse = sse(rows, t, w);
      const double oracle = best_split_sse(x, t, w, rows, min_leaf);
      if (node.is_leaf()) {
        // A leaf either had no legal split or targets were constant.
        const bool constant = node_sse <= 1e-12 * (1 + std::abs(node.value));
        CHECK((constant || !std::isfinite(oracle) || Index(rows.size()) < 2 * min_leaf));
        CHECK(Index(rows.size()) >= std::min<Index>(min_leaf, Index(rows.size())));
        double sw = 0, s = 0;
        for (Index r : rows) sw += weight(w, r), s += weight(w, r) * t(r);
        CHECK(node.value == doctest::Approx(s / sw).epsilon(1e-12));
      } else {
        const auto& left = per_node[i + 1];
        const auto& right = per_node[std::size_t(node.right)];
        REQUIRE_FALSE(left.empty());
        REQUIRE_FALSE(right.empty());
        CHECK(Index(left.size()) >= min_leaf);
        CHECK(Index(right.size()) >= min_leaf);
        const double chosen = sse(left, t, w) + sse(right, t, w);
        CHECK(chosen <= oracle + 1e-9 * (1 + node_sse));
      }
    }
  }
}

TEST_CASE("property: target shift/scale equivariance") {
  testing::Gen g(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = g.integer(5, 60);
    const Matrix x = g.features(n, g.integer(1, 3), g.coin());
    const Vector t = g.targets(n);
    const Index min_leaf = g.integer(1, 4);
    const auto base = fit_tree(x, t, {min_leaf});

    // Power-of-two scale without shift is exact in floating point.
    const double a2 = g.coin() ? 4.0 : -0.5;
    const auto scaled = fit_tree(x, a2 * t, {min_leaf});
    const double a = g.uniform(-3, 3), c = g.uniform(-10, 10);
    const auto affine = fit_tree(x, (a * t.array() + c).matrix(), {min_leaf});
    REQUIRE(scaled.nodes().size() == base.nodes().size());
    REQUIRE(affine.nodes().size() == base.nodes().size());
    const Matrix q = g.features(40, x.cols(), false);
    for (Index r = 0; r < q.rows(); ++r) {
      CHECK(scaled.leaf_of(q, r) == base.leaf_of(q, r));
      CHECK(affine.leaf_of(q, r) == base.leaf_of(q, r));
      CHECK(scaled.predict_row(q, r) == a2 * base.predict_row(q, r));
      CHECK(affine.predict_row(q, r) == doctest::Approx(a * base.predict_row(q, r) + c).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: strictly increasing feature transforms keep the partition") {
  testing::Gen g(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = g.integer(4, 50);
    const Matrix x = g.features(n, 2, g.coin());
    const Vector t = g.targets(n);
    const Matrix xt = (x.array() * 0.5).exp().matrix() * 3.0 - Matrix::Constant(n, 2, 7.0);
    const auto a = fit_tree(x, t, {2}), b = fit_tree(xt, t, {2});
    REQUIRE(a.nodes().size() == b.nodes().size());
    for (Index r = 0; r < n; ++r) CHECK(a.leaf_of(x, r) == b.leaf_of(xt, r));
  }
}

TEST_CASE("property: at most leaf_count - 1 jumps along an axis line") {
  testing::Gen g(9);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = g.integer(5, 80);
    const Matrix x = g.features(n, 2, false);
    const auto tree = fit_tree(x, g.targets(n), {g.integer(1, 5)});
    const double other = g.uniform(-3, 3);
    Matrix line(2001, 2);
    for (Index i = 0; i < line.rows(); ++i) line(i, 0) = -4 + 8.0 * double(i) / 2000, line(i, 1) = other;
    Index jumps = 0;
    for (Index i = 1; i < line.rows(); ++i) jumps += tree.predict_row(line, i) != tree.predict_row(line, i - 1);
    CHECK(jumps <= tree.leaf_count() - 1);
  }
}

TEST_CASE("split gains add up to the root-to-leaf squared-error reduction") {
  testing::Gen g(10);
  const Matrix x = g.features(40, 3, false);
  const Vector t = g.targets(40);
  const auto tree = fit_tree(x, t, {3});
  std::vector<std::vector<Index>> per_node;
  rows_at_nodes(tree, x, {}, per_node);
  double leaves = 0;
  for (std::size_t i = 0; i < per_node.size(); ++i)
    if (tree.nodes()[i].is_leaf()) leaves += sse(per_node[i], t, {});
  CHECK(tree.split_gain().sum() == doctest::Approx(sse(per_node[0], t, {}) - leaves).epsilon(1e-9));
  CHECK((tree.split_gain().array() >= 0).all());
}

TEST_CASE("tree save/load round trip") {
  testing::Gen g(11);
  const Matrix x = g.features(30, 2, false);
  const auto tree = fit_tree(x, g.targets(30), {2});
  std::stringstream s(serialize(tree));
  const auto back = load_tree(s);
  CHECK(serialize(back) == serialize(tree));
  for (Index r = 0; r < x.rows(); ++r) CHECK(back.predict_row(x, r) == tree.predict_row(x, r));

  std::stringstream bad("uqf-tree 9\n");
  CHECK_THROWS_AS(load_tree(bad), FormatError);
  std::stringstream truncated(serialize(tree).substr(0, 40));
  CHECK_THROWS_AS(load_tree(truncated), FormatError);
}
