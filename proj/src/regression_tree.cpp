#include "perfest/regression_tree.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "perfest/error.hpp"
#include "perfest/seeding.hpp"

namespace perfest {

namespace {

// Growth state shared by the recursive builder. Every feature keeps its own
// sorted copy of (value, target, position); a node owns the same
// [begin, end) window in each copy, so split scans read memory in order.
struct Entry {
  double value;
  double target;
  std::uint32_t pos;
};

struct Builder {
  std::size_t m = 0;
  std::size_t cols = 0;
  std::vector<Entry> sorted;  // cols * m
  std::vector<Entry> scratch;
  std::vector<double> inv;    // inv[k] = 1 / k
  std::vector<char> goes_left;
  TreeParams params;
  std::vector<RegressionTree::Node> nodes;
  std::vector<std::size_t> features;  // candidate pool, partially shuffled per node
  std::size_t tried = 0;              // features examined per node
  Rng rng{0};

  int build(std::size_t begin, std::size_t end, int depth) {
    const std::size_t n = end - begin;
    const Entry* seg0 = sorted.data() + begin;
    double sum = 0.0, sumsq = 0.0;
    double lo = seg0[0].target, hi = seg0[0].target;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = seg0[i].target;
      sum += t;
      sumsq += t * t;
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
    const int index = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[index].value = sum / static_cast<double>(n);

    if (depth >= params.max_depth || n < 2 * params.min_leaf || lo == hi) return index;

    const double parent_score = sum * sum / static_cast<double>(n);
    const double tolerance = 1e-12 * sumsq;
    double best_score = parent_score + tolerance;
    int best_feature = -1;
    double best_threshold = 0.0;

    const std::size_t first = params.min_leaf;
    const std::size_t last = n - params.min_leaf;  // largest admissible left size
    if (tried < cols) {
      for (std::size_t i = 0; i < tried; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, cols - 1);
        std::swap(features[i], features[pick(rng)]);
      }
    }
    for (std::size_t t = 0; t < tried; ++t) {
      const std::size_t f = features[t];
      const Entry* seg = sorted.data() + f * m + begin;
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < first; ++i) left_sum += seg[i].target;
      for (std::size_t nl = first; nl <= last; ++nl) {
        left_sum += seg[nl - 1].target;
        const double a = seg[nl - 1].value;
        const double b = seg[nl].value;
        if (!(a < b)) continue;
        const double right_sum = sum - left_sum;
        const double score = left_sum * left_sum * inv[nl] + right_sum * right_sum * inv[n - nl];
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return index;

    const Entry* chosen = sorted.data() + static_cast<std::size_t>(best_feature) * m + begin;
    std::size_t n_left = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool left = chosen[i].value <= best_threshold;
      goes_left[chosen[i].pos] = left;
      n_left += left;
    }
    for (std::size_t f = 0; f < cols; ++f) {
      Entry* seg = sorted.data() + f * m + begin;
      std::size_t l = 0, r = n_left;
      for (std::size_t i = 0; i < n; ++i) {
        // Branch-free stable partition.
        const std::size_t left = static_cast<std::size_t>(goes_left[seg[i].pos]);
        scratch[left ? l : r] = seg[i];
        l += left;
        r += 1 - left;
      }
      std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n), seg);
    }

    nodes[index].feature = best_feature;
    nodes[index].threshold = best_threshold;
    const int left = build(begin, begin + n_left, depth + 1);
    const int right = build(begin + n_left, end, depth + 1);
    nodes[index].left = left;
    nodes[index].right = right;
    return index;
  }
};

}  // namespace

PresortedColumns::PresortedColumns(const DenseMatrix& x) : rows(x.rows), cols(x.cols), order(x.rows * x.cols) {
  for (std::size_t f = 0; f < cols; ++f) {
    auto* seg = order.data() + f * rows;
    std::iota(seg, seg + rows, 0u);
    std::stable_sort(seg, seg + rows, [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
}

RegressionTree RegressionTree::fit(const DenseMatrix& x, std::span<const double> y,
                                   std::span<const std::size_t> sample, const TreeParams& params,
                                   const PresortedColumns* presorted) {
  if (sample.empty()) throw InsufficientDataError("regression tree needs at least one row");
  if (y.size() != x.rows) throw ShapeError("regression tree: target count differs from rows");
  if (params.min_leaf < 1) throw ConfigError("regression tree: min_leaf must be >= 1");

  Builder b;
  const std::size_t m = sample.size();
  b.m = m;
  b.cols = x.cols;
  b.params = params;
  PresortedColumns local;
  if (!presorted) {
    local = PresortedColumns(x);
    presorted = &local;
  } else if (presorted->rows != x.rows || presorted->cols != x.cols) {
    throw ShapeError("regression tree: presorted columns do not match the matrix");
  }

  // Sample positions grouped by row, ascending within each row.
  std::vector<std::uint32_t> start(x.rows + 1, 0);
  for (auto r : sample) {
    if (r >= x.rows) throw ShapeError("regression tree: sample row out of range");
    ++start[r + 1];
  }
  for (std::size_t r = 0; r < x.rows; ++r) start[r + 1] += start[r];
  std::vector<std::uint32_t> positions(m);
  {
    auto fill = start;
    for (std::size_t p = 0; p < m; ++p) positions[fill[sample[p]]++] = static_cast<std::uint32_t>(p);
  }

  b.sorted.resize(x.cols * m);
  for (std::size_t f = 0; f < x.cols; ++f) {
    Entry* out = b.sorted.data() + f * m;
    const std::uint32_t* rows = presorted->order.data() + f * x.rows;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const std::uint32_t r = rows[i];
      const double v = x(r, f);
      for (auto k = start[r]; k < start[r + 1]; ++k) *out++ = {v, y[r], positions[k]};
    }
  }
  b.features.resize(x.cols);
  std::iota(b.features.begin(), b.features.end(), std::size_t{0});
  b.tried = params.max_features == 0 ? x.cols : std::min(params.max_features, x.cols);
  b.rng.seed(params.seed);
  b.scratch.resize(m);
  b.goes_left.resize(m);
  b.inv.resize(m + 1);
  for (std::size_t k = 1; k <= m; ++k) b.inv[k] = 1.0 / static_cast<double>(k);
  b.build(0, m, 0);
  RegressionTree tree;
  tree.nodes_ = std::move(b.nodes);
  return tree;
}

std::size_t RegressionTree::leaf_index(std::span<const double> features) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& node = nodes_[i];
    i = static_cast<std::size_t>(features[static_cast<std::size_t>(node.feature)] <= node.threshold
                                     ? node.left
                                     : node.right);
  }
  return i;
}

double RegressionTree::predict(std::span<const double> features) const {
  return nodes_[leaf_index(features)].value;
}

RegressionTree RegressionTree::from_nodes(std::vector<Node> nodes) {
  if (nodes.empty()) throw IncompatibleModelError("regression tree without nodes");
  const int n = static_cast<int>(nodes.size());
  for (int i = 0; i < n; ++i) {
    const auto& node = nodes[static_cast<std::size_t>(i)];
    if (node.feature >= 0 &&
        (node.left <= i || node.left >= n || node.right <= i || node.right >= n)) {
      throw IncompatibleModelError("regression tree node has out-of-range children");
    }
  }
  RegressionTree tree;
  tree.nodes_ = std::move(nodes);
  return tree;
}

}  // namespace perfest
