#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "perfest/types.hpp"

// Naive re-evaluations of the feature formulas, written independently of
// the library: plain loops, no shared helpers.
namespace perfest::oracle {

inline double nll(const InvocationRecord& r) {
  double s = 0.0;
  for (const auto& st : r.output_steps) s += -std::log(st.top_probs[0].prob);
  return s;
}

inline double ppl_normalized(const InvocationRecord& r) {
  const auto& x = *r.input_scores;
  double s = 0.0;
  for (double p : x) s += std::log(1.0 / p);
  return std::exp(s / static_cast<double>(x.size()));
}

inline double ppl_exact(const InvocationRecord& r) {
  double prod = 1.0;
  for (double p : *r.input_scores) prod /= p;
  return prod;
}

inline double gap(const InvocationRecord& r) {
  double s = 0.0;
  for (const auto& st : r.output_steps) {
    const double first = st.top_probs[0].prob;
    const double second = st.top_probs.size() >= 2 ? st.top_probs[1].prob : 0.0;
    s += first - second;
  }
  return s;
}

inline double max_ent(const InvocationRecord& r) {
  double best = 0.0;
  for (const auto& st : r.output_steps) {
    double z = 0.0;
    for (const auto& c : st.top_probs) z += c.prob;
    double h = 0.0;
    for (const auto& c : st.top_probs) {
      if (c.prob > 0.0) h -= (c.prob / z) * std::log(c.prob / z);
    }
    best = std::max(best, h);
  }
  return best;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// Quantile-curve reference: 1-based positions |D| n / d on the sorted list.
inline std::vector<double> interpolate(std::vector<double> v, int d) {
  std::sort(v.begin(), v.end());
  const double size = static_cast<double>(v.size());
  std::vector<double> out;
  for (int n = 1; n <= d; ++n) {
    const double p = size * n / d;
    double lo = std::floor(p), hi = std::ceil(p);
    const double frac = p - lo;
    lo = std::clamp(lo, 1.0, size);
    hi = std::clamp(hi, 1.0, size);
    const double a = v[static_cast<std::size_t>(lo) - 1];
    const double b = v[static_cast<std::size_t>(hi) - 1];
    out.push_back(lo == hi ? a : a * (1.0 - frac) + b * frac);
  }
  return out;
}

}  // namespace perfest::oracle
