#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfest/baselines.hpp"
#include "perfest/features.hpp"
#include "perfest/metamodels.hpp"
#include "perfest/profile.hpp"
#include "perfest/record_store.hpp"

namespace perfest {

// Bag-of-tokens F1 after lowercasing, stripping ASCII punctuation and
// splitting on whitespace. Two empty answers score 1, one empty scores 0.
double f1_score(std::string_view prediction, std::string_view reference);

std::vector<std::string> normalize_answer(std::string_view text);

// Mean per-sample F1 of one setting. Every record needs a reference.
double task_performance(std::span<const InvocationRecord> records);

struct ErrorSummary {
  double mae = 0.0;
  double sd = 0.0;  // population standard deviation of the absolute errors

  friend bool operator==(const ErrorSummary&, const ErrorSummary&) = default;
};

// pairs are (estimate, truth).
ErrorSummary mae(std::span<const std::pair<double, double>> pairs);

struct ExperimentPlan {
  std::vector<std::string> services;  // empty: every service in the store
  std::vector<std::string> tasks;     // empty: every task in the store
  int contexts_per_task = 10;
  std::size_t unlabeled_n = 400;
  int d = kDefaultProfileDims;
  std::vector<FeatureKind> feature_kinds{FeatureKind::kNll, FeatureKind::kPpl};
  std::vector<ModelSpec> model_specs;
  int folds = 5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> sample_sizes{8, 16, 32};
  bool group_by_task = true;
  bool per_service_models = false;
  PplMode ppl_mode = PplMode::kNormalized;
  int jobs = 1;

  void validate() const;
};

nlohmann::ordered_json to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const nlohmann::json& j);

struct ReportRow {
  SettingKey setting;
  std::string estimator;
  double estimate = 0.0;
  double truth = 0.0;
  double absolute_error = 0.0;
};

struct ExperimentReport {
  std::vector<std::string> estimators;  // display order
  std::vector<std::string> services;
  std::vector<ReportRow> rows;
  std::map<std::string, ErrorSummary> aggregates;
  std::map<std::string, std::map<std::string, ErrorSummary>> per_service;
  int effective_folds = 0;  // 1 means train and test on the same settings

  // Rows of one estimator, in setting order.
  std::vector<ReportRow> rows_for(const std::string& estimator) const;
};

// Per-setting material extracted once and reused across plans that differ
// only in unlabeled_n, feature kinds or models. Per-sample vectors follow a
// seeded permutation of the setting's records, so taking the first n
// entries is a draw of n samples without replacement and smaller draws are
// nested in larger ones.
struct SettingData {
  SettingKey key;
  double truth = 0.0;
  std::size_t pool_size = 0;
  FeatureTable features;
  std::vector<double> confidences;
  std::vector<double> sample_f1;
};

struct PreparedSettings {
  std::vector<SettingData> settings;  // ascending by key
  std::size_t max_unlabeled = 0;
};

// Seeded draw of n records without replacement from one setting. The
// permutation depends only on (seed, setting), so smaller draws are
// prefixes of larger ones.
std::vector<InvocationRecord> draw_unlabeled(const std::vector<InvocationRecord>& records, std::size_t n,
                                             std::uint64_t seed);

// Label-free profiles for every plan setting; targets are attached only
// when every record of the setting carries a reference.
std::vector<ProfileEntry> extract_profiles(const ExperimentPlan& plan, const RecordSource& source);

// Settings of the plan that the source must provide.
std::vector<SettingKey> plan_settings(const ExperimentPlan& plan, const RecordSource& source);

PreparedSettings prepare_settings(const ExperimentPlan& plan, const RecordSource& source,
                                  std::size_t max_unlabeled, std::span<const FeatureKind> kinds);

ExperimentReport run_experiment(const ExperimentPlan& plan, const PreparedSettings& prepared);
ExperimentReport run_experiment(const ExperimentPlan& plan, const RecordSource& source);

// Training rows (profile + truth) for every prepared setting.
std::vector<TrainingRow> training_rows(const ExperimentPlan& plan, const PreparedSettings& prepared);

nlohmann::ordered_json to_json(const ExperimentReport& report);
void write_report(const ExperimentReport& report, const ExperimentPlan& plan,
                  const std::filesystem::path& path);

// Estimators x services table of MAE +- SD in F1 percentage points.
std::string render_table(const ExperimentReport& report);

}  // namespace perfest
