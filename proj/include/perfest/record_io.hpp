#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfest/types.hpp"

namespace perfest {

using OrderedJson = nlohmann::ordered_json;

// JSON Lines persistence for invocation records, task files and context
// files. Every writer emits exactly one compact JSON object per line, so a
// file written here re-reads and re-writes byte-identically.

OrderedJson to_json(const InvocationRecord& record);
InvocationRecord record_from_json(const nlohmann::json& j, std::size_t line = 0);

std::vector<InvocationRecord> read_records(const std::filesystem::path& path);
void write_records(const std::vector<InvocationRecord>& records, const std::filesystem::path& path);
void append_records(const std::vector<InvocationRecord>& records, const std::filesystem::path& path);

// Task file: one line per sample with task_id, sample_id, input_text,
// optional reference and split. Lines are grouped by (task_id, split) in
// first-seen order.
std::vector<TaskDataset> read_tasks(const std::filesystem::path& path);
void write_tasks(const std::vector<TaskDataset>& tasks, const std::filesystem::path& path);

// Context file: one ContextSpec per line.
std::vector<ContextSpec> read_contexts(const std::filesystem::path& path);
void write_contexts(const std::vector<ContextSpec>& contexts, const std::filesystem::path& path);

}  // namespace perfest
