#include "perfest/features.hpp"

#include <algorithm>
#include <cmath>

#include "perfest/error.hpp"

namespace perfest {

namespace {

void require_steps(const InvocationRecord& r) {
  if (r.output_steps.empty()) {
    throw ValidationError("output_steps", 0,
                          "record " + r.sample_id + " has no generated steps");
  }
}

double checked(double p, const char* what, const InvocationRecord& r) {
  if (!(p >= kMinProbability)) {
    throw DegenerateProbabilityError(std::string(what) + " probability below 1e-12 in sample " +
                                     r.sample_id);
  }
  return p;
}

}  // namespace

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kNll:
      return "NLL";
    case FeatureKind::kPpl:
      return "PPL";
    case FeatureKind::kGap:
      return "GAP";
    case FeatureKind::kMaxEnt:
      return "MAXENT";
  }
  return "NLL";
}

FeatureKind feature_kind_from_string(const std::string& name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (auto k : kAllFeatureKinds) {
    if (upper == to_string(k)) return k;
  }
  throw ConfigError("unknown feature kind '" + name + "' (expected NLL, PPL, GAP or MAXENT)");
}

double nll(const InvocationRecord& record) {
  require_steps(record);
  double sum = 0.0;
  for (const auto& step : record.output_steps) {
    sum -= std::log(checked(step.top1(), "top-1", record));
  }
  return sum;
}

double ppl(const InvocationRecord& record, PplMode mode) {
  if (!record.input_scores) {
    throw CapabilityError("sample " + record.sample_id + " of service " + record.service_id +
                          " carries no input_scores; PPL needs a service with input scoring");
  }
  const auto& scores = *record.input_scores;
  if (scores.empty()) {
    throw CapabilityError("sample " + record.sample_id + " has an empty input_scores list");
  }
  double loss = 0.0;
  for (double s : scores) loss -= std::log(checked(s, "input-token", record));
  if (mode == PplMode::kNormalized) loss /= static_cast<double>(scores.size());
  return std::exp(loss);
}

double gap(const InvocationRecord& record) {
  require_steps(record);
  double sum = 0.0;
  for (const auto& step : record.output_steps) sum += step.top1() - step.top2();
  return sum;
}

double max_ent(const InvocationRecord& record) {
  require_steps(record);
  double best = 0.0;
  for (const auto& step : record.output_steps) {
    double mass = 0.0;
    for (const auto& c : step.top_probs) mass += c.prob;
    if (mass <= 0.0) continue;
    double h = 0.0;
    for (const auto& c : step.top_probs) {
      if (c.prob <= 0.0) continue;
      const double q = c.prob / mass;
      h -= q * std::log(q);
    }
    best = std::max(best, h);
  }
  return best;
}

double compute_feature(const InvocationRecord& record, FeatureKind kind, PplMode mode) {
  switch (kind) {
    case FeatureKind::kNll:
      return nll(record);
    case FeatureKind::kPpl:
      return ppl(record, mode);
    case FeatureKind::kGap:
      return gap(record);
    case FeatureKind::kMaxEnt:
      return max_ent(record);
  }
  throw ConfigError("unknown feature kind");
}

FeatureTable extract_task_features(std::span<const InvocationRecord> records,
                                   std::span<const FeatureKind> kinds, PplMode mode) {
  if (records.empty()) throw InsufficientDataError("no records to extract features from");
  const SettingKey key = records.front().setting();
  for (const auto& r : records) {
    if (r.setting() != key) {
      throw GroupingError("records mix settings " + key.str() + " and " + r.setting().str());
    }
  }
  FeatureTable table;
  for (auto kind : kinds) {
    auto& values = table[kind];
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(compute_feature(r, kind, mode));
  }
  return table;
}

}  // namespace perfest
