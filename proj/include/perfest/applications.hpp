#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "perfest/evaluation.hpp"
#include "perfest/metamodels.hpp"
#include "perfest/profile.hpp"

namespace perfest {

struct SettingCandidate {
  std::string service_id;
  std::string context_id;
  FeatureProfile profile;  // empty vector when built from a report
  double estimate = 0.0;
  std::string estimator;   // name of the model that produced the estimate
};

// Highest estimate wins; ties go to the smallest (service_id, context_id).
SettingCandidate select_setting(std::span<const SettingCandidate> candidates);

// Services by estimate, highest first; ties in id order.
std::vector<std::string> rank_finetune_targets(const std::map<std::string, double>& estimates);

// Estimates every profile with a trained meta-model.
std::vector<SettingCandidate> score_settings(const TrainedMetaModel& model,
                                             std::span<const FeatureProfile> profiles);

// Candidates for one task from an experiment report's (out-of-fold) rows.
std::vector<SettingCandidate> candidates_from_report(const ExperimentReport& report,
                                                     const std::string& estimator,
                                                     const std::string& task_id);

// Mean estimate per service over its candidates.
std::map<std::string, double> service_estimates(std::span<const SettingCandidate> candidates);

}  // namespace perfest
