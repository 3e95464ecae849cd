#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace perfest {

// Row-major design matrix.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Per-feature row orderings of a matrix, ascending by value with ties in
// row order. Computed once and shared by every tree grown on the matrix.
struct PresortedColumns {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> order;  // cols * rows

  PresortedColumns() = default;
  explicit PresortedColumns(const DenseMatrix& x);
};

struct TreeParams {
  int max_depth = 10;
  std::size_t min_leaf = 2;
  // Features drawn (without replacement) as split candidates at each node;
  // 0 or >= cols means every feature. Draws come from `seed`.
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
};

// CART regression tree: variance-reduction splits found by an exhaustive
// scan over the sorted distinct values of every feature. Inputs with
// value <= threshold go left.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  // `sample` lists the training rows to use; repeated entries (bootstrap
  // draws) count with multiplicity.
  static RegressionTree fit(const DenseMatrix& x, std::span<const double> y,
                            std::span<const std::size_t> sample, const TreeParams& params,
                            const PresortedColumns* presorted = nullptr);

  double predict(std::span<const double> features) const;
  std::size_t leaf_index(std::span<const double> features) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }

  static RegressionTree from_nodes(std::vector<Node> nodes);

 private:
  std::vector<Node> nodes_;
};

}  // namespace perfest
