#include "perfest/applications.hpp"

#include <algorithm>
#include <tuple>

#include "perfest/error.hpp"

namespace perfest {

SettingCandidate select_setting(std::span<const SettingCandidate> candidates) {
  if (candidates.empty()) throw InsufficientDataError("no candidate settings to select from");
  const SettingCandidate* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.estimate > best->estimate ||
        (c.estimate == best->estimate &&
         std::tie(c.service_id, c.context_id) < std::tie(best->service_id, best->context_id))) {
      best = &c;
    }
  }
  return *best;
}

std::vector<std::string> rank_finetune_targets(const std::map<std::string, double>& estimates) {
  std::vector<std::pair<std::string, double>> entries(estimates.begin(), estimates.end());
  // The map is already in id order, so a stable sort keeps ties lexicographic.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (auto& e : entries) out.push_back(std::move(e.first));
  return out;
}

std::vector<SettingCandidate> score_settings(const TrainedMetaModel& model,
                                             std::span<const FeatureProfile> profiles) {
  std::vector<SettingCandidate> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) {
    SettingCandidate c;
    c.service_id = p.setting.service_id;
    c.context_id = p.setting.context_id;
    c.profile = p;
    c.estimate = predict(model, p);
    c.estimator = model.spec.label();
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<SettingCandidate> candidates_from_report(const ExperimentReport& report,
                                                     const std::string& estimator,
                                                     const std::string& task_id) {
  if (std::find(report.estimators.begin(), report.estimators.end(), estimator) == report.estimators.end()) {
    throw LookupError("report has no estimator '" + estimator + "'");
  }
  std::vector<SettingCandidate> out;
  for (const auto& row : report.rows) {
    if (row.estimator != estimator || row.setting.task_id != task_id) continue;
    SettingCandidate c;
    c.service_id = row.setting.service_id;
    c.context_id = row.setting.context_id;
    c.profile.setting = row.setting;
    c.estimate = row.estimate;
    c.estimator = estimator;
    out.push_back(std::move(c));
  }
  return out;
}

std::map<std::string, double> service_estimates(std::span<const SettingCandidate> candidates) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& c : candidates) {
    auto& a = acc[c.service_id];
    a.first += c.estimate;
    ++a.second;
  }
  std::map<std::string, double> out;
  for (const auto& [id, a] : acc) out[id] = a.first / a.second;
  return out;
}

}  // namespace perfest
