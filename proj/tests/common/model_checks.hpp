#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "perfest/metamodels.hpp"
#include "perfest/seeding.hpp"

namespace perfest::testing {

// Random small MLP instance; returns the largest relative deviation between
// the analytic gradient and central finite differences (step 1e-5).
inline double mlp_gradient_deviation(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  MlpParams p;
  p.inputs = 2 + rng() % 4;
  p.hidden = 2 + rng() % 5;
  const std::size_t n = 3 + rng() % 6;
  p.w1.resize(p.hidden * p.inputs);
  p.b1.resize(p.hidden);
  p.w2.resize(p.hidden);
  for (auto& w : p.w1) w = 0.7 * z(rng);
  for (auto& w : p.b1) w = 0.3 * z(rng);
  for (auto& w : p.w2) w = 0.7 * z(rng);
  p.b2 = 0.1 * z(rng);
  DenseMatrix x(n, p.inputs);
  for (auto& v : x.data) v = z(rng);
  std::vector<double> y(n);
  for (auto& v : y) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

  const auto analytic = mlp::gradient(p, x, y);
  auto flat = mlp::flatten(p);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    auto plus = flat, minus = flat;
    plus[i] += h;
    minus[i] -= h;
    MlpParams a = p, b = p;
    mlp::unflatten(a, plus);
    mlp::unflatten(b, minus);
    const double numeric = (mlp::loss(a, x, y) - mlp::loss(b, x, y)) / (2 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

inline FeatureProfile random_profile(Rng& rng, int dims, const std::string& id = "c") {
  FeatureProfile p;
  p.setting = {"s", "t", id};
  p.dims = dims;
  p.kinds = {FeatureKind::kNll, FeatureKind::kPpl};
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < 2 * dims; ++i) p.vector.push_back(z(rng));
  std::sort(p.vector.begin(), p.vector.begin() + dims);
  std::sort(p.vector.begin() + dims, p.vector.end());
  return p;
}

// Rows whose target is a smooth function of the profile.
inline std::vector<TrainingRow> random_rows(std::uint64_t seed, std::size_t n, int dims = 5) {
  Rng rng(seed);
  std::vector<TrainingRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = random_profile(rng, dims, "c" + std::to_string(i));
    p.setting.task_id = "t" + std::to_string(i % 7);
    double s = 0.0;
    for (double v : p.vector) s += v;
    rows.push_back({p, 1.0 / (1.0 + std::exp(-s / dims))});
  }
  return rows;
}

}  // namespace perfest::testing
