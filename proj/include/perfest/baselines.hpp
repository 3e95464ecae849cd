#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "perfest/types.hpp"

namespace perfest {

// Labeled-sample accuracy (Sample^n), training-average (AvgTrain) and
// average-thresholded-confidence (ATC) estimators.

struct LabeledSample {
  std::string context_id;
  std::string sample_id;
  double performance = 0.0;  // per-sample F1
};

// Mean performance over the first n samples of every context in `contexts`
// (samples taken in the order given).
double sample_n_estimate(std::span<const LabeledSample> labeled, std::size_t n,
                         const std::set<std::string>& contexts);

double avg_train_estimate(std::span<const double> training_performances);

// Length-normalized sequence likelihood exp(-nll / |x|), in (0, 1].
double atc_confidence(const InvocationRecord& record);

struct AtcCalibration {
  std::string source_task_id;
  std::string context_id;
  double threshold = 0.0;
  double source_accuracy = 0.0;
};

double fraction_above(std::span<const double> confidences, double threshold);

// Picks the threshold whose fraction of confidences strictly above it is
// closest to the mean correctness. Candidates are a point just below the
// smallest confidence, the midpoints between consecutive distinct
// confidences and the largest confidence; ties go to the smaller threshold.
AtcCalibration atc_calibrate(std::span<const double> confidences,
                             std::span<const double> correctness);

// Mean over calibrations of the fraction of target confidences above each
// calibration's threshold.
double atc_estimate(std::span<const AtcCalibration> calibrations,
                    std::span<const double> target_confidences);

}  // namespace perfest
