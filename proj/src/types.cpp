#include "perfest/types.hpp"

#include <cmath>
#include <set>

#include "perfest/error.hpp"

namespace perfest {

namespace {
constexpr double kMassSlack = 1e-9;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "test";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ValidationError("split", 0, "expected one of train/dev/test, got '" + name + "'");
}

void validate(const TokenStep& step, std::size_t line) {
  if (step.top_probs.empty()) {
    throw ValidationError("top_probs", line, "must contain at least one candidate");
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < step.top_probs.size(); ++i) {
    const double p = step.top_probs[i].prob;
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw ValidationError("top_probs", line, "probability outside [0, 1]");
    }
    if (i > 0 && p > step.top_probs[i - 1].prob) {
      throw ValidationError("top_probs", line, "not sorted non-increasing by probability");
    }
    mass += p;
  }
  if (mass > 1.0 + kMassSlack) {
    throw ValidationError("top_probs", line, "probabilities sum above 1");
  }
}

void validate(const InvocationRecord& record, std::size_t line) {
  if (record.service_id.empty()) throw ValidationError("service_id", line, "must be non-empty");
  if (record.task_id.empty()) throw ValidationError("task_id", line, "must be non-empty");
  if (record.context_id.empty()) throw ValidationError("context_id", line, "must be non-empty");
  if (record.sample_id.empty()) throw ValidationError("sample_id", line, "must be non-empty");
  for (const auto& step : record.output_steps) validate(step, line);
  if (record.input_scores) {
    for (double s : *record.input_scores) {
      if (!std::isfinite(s) || s <= 0.0 || s > 1.0) {
        throw ValidationError("input_scores", line, "score outside (0, 1]");
      }
    }
  }
}

void validate(const TaskDataset& task) {
  if (task.task_id.empty()) throw ValidationError("task_id", 0, "must be non-empty");
  std::set<std::string> seen;
  for (const auto& s : task.samples) {
    if (!seen.insert(s.sample_id).second) {
      throw ValidationError("sample_id", 0,
                            "duplicate sample id '" + s.sample_id + "' in task " + task.task_id);
    }
  }
}

}  // namespace perfest
