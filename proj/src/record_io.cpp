#include "perfest/record_io.hpp"

#include <fstream>
#include <map>
#include <utility>

#include "perfest/error.hpp"

namespace perfest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end()) throw ValidationError(field, line, "missing");
  return *it;
}

std::string get_string(const json& j, const char* field, std::size_t line) {
  const json& v = require(j, field, line);
  if (!v.is_string()) throw ValidationError(field, line, "expected a string");
  return v.get<std::string>();
}

std::optional<std::string> get_optional_string(const json& j, const char* field, std::size_t line) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(field, line, "expected a string");
  return it->get<std::string>();
}

double get_number(const json& v, const char* field, std::size_t line) {
  if (!v.is_number()) throw ValidationError(field, line, "expected a number");
  return v.get<double>();
}

std::ifstream open_for_read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_for_write(const fs::path& path, bool append) {
  if (path.empty()) throw IoError("empty output path");
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

// Calls fn(parsed_json, line_number) for each non-blank line.
template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  auto in = open_for_read(path);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError("<json>", line, e.what());
    }
    if (!j.is_object()) throw ValidationError("<json>", line, "expected a JSON object");
    fn(j, line);
  }
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

OrderedJson to_json(const InvocationRecord& r) {
  OrderedJson j;
  j["service_id"] = r.service_id;
  j["task_id"] = r.task_id;
  j["context_id"] = r.context_id;
  j["sample_id"] = r.sample_id;
  j["input_text"] = r.input_text;
  j["generated_text"] = r.generated_text;
  OrderedJson steps = OrderedJson::array();
  for (const auto& step : r.output_steps) {
    OrderedJson cands = OrderedJson::array();
    for (const auto& c : step.top_probs) cands.push_back(OrderedJson::array({c.token, c.prob}));
    OrderedJson s;
    s["token"] = step.token;
    s["top_probs"] = std::move(cands);
    steps.push_back(std::move(s));
  }
  j["output_steps"] = std::move(steps);
  if (r.input_scores) j["input_scores"] = *r.input_scores;
  if (r.reference) j["reference"] = *r.reference;
  return j;
}

InvocationRecord record_from_json(const json& j, std::size_t line) {
  InvocationRecord r;
  r.service_id = get_string(j, "service_id", line);
  r.task_id = get_string(j, "task_id", line);
  r.context_id = get_string(j, "context_id", line);
  r.sample_id = get_string(j, "sample_id", line);
  r.input_text = get_string(j, "input_text", line);
  r.generated_text = get_string(j, "generated_text", line);

  const json& steps = require(j, "output_steps", line);
  if (!steps.is_array()) throw ValidationError("output_steps", line, "expected an array");
  r.output_steps.reserve(steps.size());
  for (const auto& s : steps) {
    if (!s.is_object()) throw ValidationError("output_steps", line, "expected step objects");
    TokenStep step;
    step.token = get_string(s, "token", line);
    const json& cands = require(s, "top_probs", line);
    if (!cands.is_array()) throw ValidationError("top_probs", line, "expected an array");
    for (const auto& c : cands) {
      if (!c.is_array() || c.size() != 2 || !c[0].is_string()) {
        throw ValidationError("top_probs", line, "expected [token, prob] pairs");
      }
      step.top_probs.push_back({c[0].get<std::string>(), get_number(c[1], "top_probs", line)});
    }
    r.output_steps.push_back(std::move(step));
  }

  if (auto it = j.find("input_scores"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("input_scores", line, "expected an array");
    std::vector<double> scores;
    scores.reserve(it->size());
    for (const auto& v : *it) scores.push_back(get_number(v, "input_scores", line));
    r.input_scores = std::move(scores);
  }
  r.reference = get_optional_string(j, "reference", line);

  validate(r, line);
  return r;
}

std::vector<InvocationRecord> read_records(const fs::path& path) {
  std::vector<InvocationRecord> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    out.push_back(record_from_json(j, line));
  });
  return out;
}

namespace {
void write_record_lines(const std::vector<InvocationRecord>& records, const fs::path& path,
                        bool append) {
  for (const auto& r : records) validate(r);
  auto out = open_for_write(path, append);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  finish(out, path);
}
}  // namespace

void write_records(const std::vector<InvocationRecord>& records, const fs::path& path) {
  write_record_lines(records, path, false);
}

void append_records(const std::vector<InvocationRecord>& records, const fs::path& path) {
  write_record_lines(records, path, true);
}

std::vector<TaskDataset> read_tasks(const fs::path& path) {
  std::vector<TaskDataset> tasks;
  std::map<std::pair<std::string, Split>, std::size_t> index;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    TaskSample s;
    const std::string task_id = get_string(j, "task_id", line);
    s.sample_id = get_string(j, "sample_id", line);
    s.input_text = get_string(j, "input_text", line);
    s.reference = get_optional_string(j, "reference", line);
    Split split;
    try {
      split = split_from_string(get_string(j, "split", line));
    } catch (const ValidationError& e) {
      throw ValidationError("split", line, e.what());
    }
    auto [it, inserted] = index.try_emplace({task_id, split}, tasks.size());
    if (inserted) tasks.push_back(TaskDataset{task_id, split, {}});
    tasks[it->second].samples.push_back(std::move(s));
  });
  for (const auto& t : tasks) validate(t);
  return tasks;
}

void write_tasks(const std::vector<TaskDataset>& tasks, const fs::path& path) {
  auto out = open_for_write(path, false);
  for (const auto& t : tasks) {
    validate(t);
    for (const auto& s : t.samples) {
      OrderedJson j;
      j["task_id"] = t.task_id;
      j["sample_id"] = s.sample_id;
      j["input_text"] = s.input_text;
      if (s.reference) j["reference"] = *s.reference;
      j["split"] = to_string(t.split);
      out << j.dump() << '\n';
    }
  }
  finish(out, path);
}

std::vector<ContextSpec> read_contexts(const fs::path& path) {
  std::vector<ContextSpec> out;
  for_each_json_line(path, [&](const json& j, std::size_t line) {
    ContextSpec c;
    c.task_id = get_string(j, "task_id", line);
    c.context_id = get_string(j, "context_id", line);
    const json& ex = require(j, "examples", line);
    if (!ex.is_array()) throw ValidationError("examples", line, "expected an array");
    for (const auto& e : ex) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
        throw ValidationError("examples", line, "expected [input_text, reference] pairs");
      }
      c.examples.push_back({e[0].get<std::string>(), e[1].get<std::string>()});
    }
    if (auto it = j.find("count"); it != j.end()) {
      if (!it->is_number_unsigned() || it->get<std::size_t>() != c.examples.size()) {
        throw ValidationError("count", line, "must equal the number of examples");
      }
    }
    out.push_back(std::move(c));
  });
  return out;
}

void write_contexts(const std::vector<ContextSpec>& contexts, const fs::path& path) {
  auto out = open_for_write(path, false);
  for (const auto& c : contexts) {
    OrderedJson j;
    j["task_id"] = c.task_id;
    j["context_id"] = c.context_id;
    OrderedJson ex = OrderedJson::array();
    for (const auto& e : c.examples) ex.push_back(OrderedJson::array({e.input_text, e.reference}));
    j["examples"] = std::move(ex);
    j["count"] = c.examples.size();
    out << j.dump() << '\n';
  }
  finish(out, path);
}

}  // namespace perfest
