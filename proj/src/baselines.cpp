#include "perfest/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "perfest/error.hpp"
#include "perfest/features.hpp"

namespace perfest {

double sample_n_estimate(std::span<const LabeledSample> labeled, std::size_t n,
                         const std::set<std::string>& contexts) {
  if (n == 0) throw ConfigError("Sample^n needs n >= 1");
  if (contexts.empty()) throw InsufficientDataError("Sample^n needs at least one context");
  std::map<std::string, std::size_t> taken;
  double sum = 0.0;
  for (const auto& s : labeled) {
    if (!contexts.contains(s.context_id)) continue;
    auto& count = taken[s.context_id];
    if (count == n) continue;
    ++count;
    sum += s.performance;
  }
  for (const auto& c : contexts) {
    if (taken[c] < n) {
      throw InsufficientDataError("Sample^" + std::to_string(n) + ": context " + c + " has only " +
                                  std::to_string(taken[c]) + " labeled samples");
    }
  }
  return sum / static_cast<double>(n * contexts.size());
}

double avg_train_estimate(std::span<const double> training_performances) {
  if (training_performances.empty()) {
    throw InsufficientDataError("AvgTrain needs at least one labeled setting");
  }
  return std::accumulate(training_performances.begin(), training_performances.end(), 0.0) /
         static_cast<double>(training_performances.size());
}

double atc_confidence(const InvocationRecord& record) {
  return std::exp(-nll(record) / static_cast<double>(record.output_steps.size()));
}

double fraction_above(std::span<const double> confidences, double threshold) {
  if (confidences.empty()) throw InsufficientDataError("no confidences");
  const auto above = std::count_if(confidences.begin(), confidences.end(),
                                   [&](double c) { return c > threshold; });
  return static_cast<double>(above) / static_cast<double>(confidences.size());
}

AtcCalibration atc_calibrate(std::span<const double> confidences,
                             std::span<const double> correctness) {
  if (confidences.empty()) throw InsufficientDataError("ATC calibration needs labeled samples");
  if (confidences.size() != correctness.size()) {
    throw ShapeError("ATC calibration: confidences and correctness differ in length");
  }
  const double accuracy = std::accumulate(correctness.begin(), correctness.end(), 0.0) /
                          static_cast<double>(correctness.size());

  std::vector<double> sorted(confidences.begin(), confidences.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<double> candidates;
  candidates.push_back(std::nextafter(sorted.front(), -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    candidates.push_back(sorted[i] + (sorted[i + 1] - sorted[i]) / 2.0);
  }
  candidates.push_back(sorted.back());

  // Candidates ascend, so keeping the first strict minimum honors the
  // smallest-threshold tie-break.
  AtcCalibration best;
  best.source_accuracy = accuracy;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double t : candidates) {
    const double g = std::abs(fraction_above(confidences, t) - accuracy);
    if (g < best_gap) {
      best_gap = g;
      best.threshold = t;
    }
  }
  return best;
}

double atc_estimate(std::span<const AtcCalibration> calibrations,
                    std::span<const double> target_confidences) {
  if (calibrations.empty()) throw InsufficientDataError("ATC needs at least one calibration");
  if (target_confidences.empty()) throw InsufficientDataError("ATC needs target confidences");
  double sum = 0.0;
  for (const auto& c : calibrations) sum += fraction_above(target_confidences, c.threshold);
  return sum / static_cast<double>(calibrations.size());
}

}  // namespace perfest
