#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "perfest/types.hpp"

namespace perfest {

enum class FeatureKind { kNll, kPpl, kGap, kMaxEnt };

inline constexpr std::array<FeatureKind, 4> kAllFeatureKinds = {
    FeatureKind::kNll, FeatureKind::kPpl, FeatureKind::kGap, FeatureKind::kMaxEnt};

const char* to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(const std::string& name);

// Perplexity of the input reconstruction. kNormalized averages the token
// losses before exponentiating; kExactSum exponentiates the plain sum.
enum class PplMode { kNormalized, kExactSum };

// Probabilities below this are treated as upstream bugs and rejected.
inline constexpr double kMinProbability = 1e-12;

// -sum_t ln p_top1(t) over the generated steps.
double nll(const InvocationRecord& record);

double ppl(const InvocationRecord& record, PplMode mode = PplMode::kNormalized);

// sum_t (p_top1(t) - p_top2(t)); a missing runner-up counts as 0.
double gap(const InvocationRecord& record);

// Largest per-step entropy (nats) of the top-k candidates renormalized to
// unit mass. Biased low relative to the full-vocabulary entropy.
double max_ent(const InvocationRecord& record);

double compute_feature(const InvocationRecord& record, FeatureKind kind,
                       PplMode mode = PplMode::kNormalized);

using FeatureTable = std::map<FeatureKind, std::vector<double>>;

// One value per record and kind, in record order. All records must belong to
// the same (service, task, context) setting.
FeatureTable extract_task_features(std::span<const InvocationRecord> records,
                                   std::span<const FeatureKind> kinds,
                                   PplMode mode = PplMode::kNormalized);

}  // namespace perfest
