#pragma once

#include <span>
#include <string>
#include <vector>

#include "perfest/features.hpp"

namespace perfest {

inline constexpr const char* kPerformanceLabel = "F1";

// Sample Pearson coefficient. Throws UndefinedCorrelationError when either
// input is constant, and ShapeError on length mismatch or fewer than two
// points.
double pearson(std::span<const double> xs, std::span<const double> ys);

// Symmetric correlation table over feature labels plus the performance label.
class CorrelationMatrix {
 public:
  CorrelationMatrix(std::vector<std::string> labels, std::vector<std::vector<double>> values);

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::vector<double>>& values() const { return values_; }
  double at(const std::string& a, const std::string& b) const;
  double at(FeatureKind a, FeatureKind b) const { return at(to_string(a), to_string(b)); }
  double with_performance(FeatureKind f) const { return at(to_string(f), kPerformanceLabel); }

 private:
  std::size_t index_of(const std::string& label) const;

  std::vector<std::string> labels_;
  std::vector<std::vector<double>> values_;
};

// Correlations among the table's features and `performance`. With
// `absolute`, every entry is replaced by its magnitude.
CorrelationMatrix correlation_matrix(const FeatureTable& table, std::span<const double> performance,
                                     bool absolute);

// Sum of feature-to-performance correlations minus the sum over unordered
// feature pairs of their mutual correlation.
double combination_score(std::span<const FeatureKind> combination, const CorrelationMatrix& corr);

struct ScoredCombination {
  std::vector<FeatureKind> features;  // ascending enum order
  double score = 0.0;
};

struct FeatureSelection {
  std::vector<FeatureKind> best;
  std::vector<ScoredCombination> ranked;  // score descending, ties in enumeration order
  CorrelationMatrix matrix;
};

// Every non-empty subset of the table's features, ordered by size and then
// lexicographically. This is also the tie-break order.
std::vector<std::vector<FeatureKind>> enumerate_combinations(std::span<const FeatureKind> features);

// Exhaustive search over all non-empty subsets using absolute correlations.
FeatureSelection select_best_combination(const FeatureTable& table,
                                         std::span<const double> performance);

}  // namespace perfest
