#include "perfest/feature_selection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "perfest/error.hpp"

namespace perfest {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ShapeError("pearson: inputs differ in length");
  if (xs.size() < 2) throw ShapeError("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("pearson: correlation undefined for a constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationMatrix::CorrelationMatrix(std::vector<std::string> labels,
                                     std::vector<std::vector<double>> values)
    : labels_(std::move(labels)), values_(std::move(values)) {
  if (values_.size() != labels_.size()) throw ShapeError("correlation matrix: row count mismatch");
  for (const auto& row : values_) {
    if (row.size() != labels_.size()) throw ShapeError("correlation matrix: not square");
  }
}

std::size_t CorrelationMatrix::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw LookupError("correlation matrix has no entry for '" + label + "'");
  return static_cast<std::size_t>(it - labels_.begin());
}

double CorrelationMatrix::at(const std::string& a, const std::string& b) const {
  return values_[index_of(a)][index_of(b)];
}

CorrelationMatrix correlation_matrix(const FeatureTable& table, std::span<const double> performance,
                                     bool absolute) {
  std::vector<std::string> labels;
  std::vector<std::span<const double>> columns;
  for (const auto& [kind, values] : table) {
    labels.emplace_back(to_string(kind));
    columns.emplace_back(values);
  }
  labels.emplace_back(kPerformanceLabel);
  columns.push_back(performance);

  const std::size_t m = labels.size();
  std::vector<std::vector<double>> values(m, std::vector<double>(m, 1.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double r = pearson(columns[i], columns[j]);
      if (absolute) r = std::abs(r);
      values[i][j] = values[j][i] = r;
    }
  }
  return CorrelationMatrix(std::move(labels), std::move(values));
}

double combination_score(std::span<const FeatureKind> combination, const CorrelationMatrix& corr) {
  const std::set<FeatureKind> unique(combination.begin(), combination.end());
  const std::vector<FeatureKind> fs(unique.begin(), unique.end());
  double score = 0.0;
  for (auto f : fs) score += corr.with_performance(f);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    for (std::size_t j = i + 1; j < fs.size(); ++j) score -= corr.at(fs[i], fs[j]);
  }
  return score;
}

std::vector<std::vector<FeatureKind>> enumerate_combinations(std::span<const FeatureKind> features) {
  const std::set<FeatureKind> unique(features.begin(), features.end());
  const std::vector<FeatureKind> fs(unique.begin(), unique.end());
  const std::size_t n = fs.size();
  std::vector<std::vector<FeatureKind>> out;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<FeatureKind> subset;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) subset.push_back(fs[i]);
    }
    out.push_back(std::move(subset));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

FeatureSelection select_best_combination(const FeatureTable& table,
                                         std::span<const double> performance) {
  if (table.empty()) throw InsufficientDataError("feature selection needs at least one feature");
  for (const auto& [kind, values] : table) {
    if (values.size() != performance.size()) {
      throw ShapeError(std::string("feature ") + to_string(kind) +
                       " has a different length than the performance list");
    }
  }
  CorrelationMatrix corr = correlation_matrix(table, performance, /*absolute=*/true);

  std::vector<FeatureKind> kinds;
  for (const auto& entry : table) kinds.push_back(entry.first);

  std::vector<ScoredCombination> ranked;
  for (auto& subset : enumerate_combinations(kinds)) {
    const double s = combination_score(subset, corr);
    ranked.push_back({std::move(subset), s});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<FeatureKind> best = ranked.front().features;
  return FeatureSelection{std::move(best), std::move(ranked), std::move(corr)};
}

}  // namespace perfest
