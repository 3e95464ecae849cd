#include "perfest/record_store.hpp"

#include "perfest/record_io.hpp"

namespace perfest {

RecordStore::RecordStore(std::vector<InvocationRecord> records) {
  for (auto& r : records) add(std::move(r));
}

RecordStore RecordStore::load(const std::filesystem::path& path) {
  return RecordStore(read_records(path));
}

void RecordStore::add(InvocationRecord record) {
  auto key = record.setting();
  by_setting_[std::move(key)].push_back(std::move(record));
  ++size_;
}

std::vector<SettingKey> RecordStore::settings() const {
  std::vector<SettingKey> out;
  out.reserve(by_setting_.size());
  for (const auto& entry : by_setting_) out.push_back(entry.first);
  return out;
}

std::vector<InvocationRecord> RecordStore::records(const SettingKey& key) const {
  auto it = by_setting_.find(key);
  return it == by_setting_.end() ? std::vector<InvocationRecord>{} : it->second;
}

}  // namespace perfest
