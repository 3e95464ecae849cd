#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "perfest/types.hpp"

namespace perfest {

// Anything that can hand out the invocation records of a setting: an
// in-memory store loaded from disk, or a generator producing them on demand.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  // All settings with at least one record, ascending.
  virtual std::vector<SettingKey> settings() const = 0;
  // Records of one setting in sample order; empty when unknown.
  virtual std::vector<InvocationRecord> records(const SettingKey& key) const = 0;
};

class RecordStore : public RecordSource {
 public:
  RecordStore() = default;
  explicit RecordStore(std::vector<InvocationRecord> records);

  static RecordStore load(const std::filesystem::path& path);

  void add(InvocationRecord record);
  std::size_t size() const { return size_; }

  std::vector<SettingKey> settings() const override;
  std::vector<InvocationRecord> records(const SettingKey& key) const override;

 private:
  std::map<SettingKey, std::vector<InvocationRecord>> by_setting_;
  std::size_t size_ = 0;
};

}  // namespace perfest
