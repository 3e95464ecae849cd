#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace perfest {

struct Candidate {
  std::string token;
  double prob = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

// One generated token together with the top-k candidates the service
// reported for that position. Probabilities are linear, not log.
struct TokenStep {
  std::string token;
  std::vector<Candidate> top_probs;  // non-increasing by prob, k >= 1

  double top1() const { return top_probs.front().prob; }
  double top2() const { return top_probs.size() > 1 ? top_probs[1].prob : 0.0; }

  friend bool operator==(const TokenStep&, const TokenStep&) = default;
};

// Identifies one ICL setting: a service invoked on a task under a context.
struct SettingKey {
  std::string service_id;
  std::string task_id;
  std::string context_id;

  friend auto operator<=>(const SettingKey&, const SettingKey&) = default;
  friend bool operator==(const SettingKey&, const SettingKey&) = default;

  std::string str() const { return service_id + "/" + task_id + "/" + context_id; }
};

struct InvocationRecord {
  std::string service_id;
  std::string task_id;
  std::string context_id;
  std::string sample_id;
  std::string input_text;
  std::string generated_text;
  std::vector<TokenStep> output_steps;
  std::optional<std::vector<double>> input_scores;  // each in (0, 1]
  std::optional<std::string> reference;

  SettingKey setting() const { return {service_id, task_id, context_id}; }

  friend bool operator==(const InvocationRecord&, const InvocationRecord&) = default;
};

enum class Split { kTrain, kDev, kTest };

struct TaskSample {
  std::string sample_id;
  std::string input_text;
  std::optional<std::string> reference;

  friend bool operator==(const TaskSample&, const TaskSample&) = default;
};

struct TaskDataset {
  std::string task_id;
  Split split = Split::kTest;
  std::vector<TaskSample> samples;

  friend bool operator==(const TaskDataset&, const TaskDataset&) = default;
};

struct ContextExample {
  std::string input_text;
  std::string reference;

  friend bool operator==(const ContextExample&, const ContextExample&) = default;
};

struct ContextSpec {
  std::string task_id;
  std::string context_id;
  std::vector<ContextExample> examples;

  std::size_t count() const { return examples.size(); }

  friend bool operator==(const ContextSpec&, const ContextSpec&) = default;
};

const char* to_string(Split split);
Split split_from_string(const std::string& name);

// Throws ValidationError naming the first offending field. `line` is only
// used to annotate the message.
void validate(const TokenStep& step, std::size_t line = 0);
void validate(const InvocationRecord& record, std::size_t line = 0);
void validate(const TaskDataset& task);

}  // namespace perfest
