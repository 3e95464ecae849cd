#include "perfest/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "perfest/error.hpp"

namespace perfest {

std::vector<double> interpolate_profile(std::span<const double> values, int d) {
  if (values.empty()) throw EmptyProfileError("cannot build a profile from an empty feature list");
  if (d < 1) throw ConfigError("profile dimension must be >= 1");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const long long size = static_cast<long long>(sorted.size());
  const long long dims = d;

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(d));
  for (long long n = 1; n <= dims; ++n) {
    // p = size * n / dims, split into integral and fractional parts exactly.
    const long long whole = size * n / dims;
    const long long rem = size * n % dims;
    const long long lo = std::clamp(whole, 1LL, size);
    const long long hi = std::clamp(rem == 0 ? whole : whole + 1, 1LL, size);
    const double a = sorted[static_cast<std::size_t>(lo - 1)];
    const double b = sorted[static_cast<std::size_t>(hi - 1)];
    if (lo == hi || rem == 0) {
      out.push_back(rem == 0 ? b : a);
      continue;
    }
    const double frac = static_cast<double>(rem) / static_cast<double>(dims);
    out.push_back(std::clamp(a + (b - a) * frac, a, b));
  }
  return out;
}

FeatureProfile profile_from_table(const SettingKey& setting, const FeatureTable& table,
                                  std::span<const FeatureKind> kinds, int d) {
  if (kinds.empty()) throw ConfigError("profile needs at least one feature kind");
  FeatureProfile profile;
  profile.setting = setting;
  profile.dims = d;
  profile.kinds.assign(kinds.begin(), kinds.end());
  profile.vector.reserve(kinds.size() * static_cast<std::size_t>(d));
  for (auto kind : kinds) {
    auto it = table.find(kind);
    if (it == table.end()) {
      throw LookupError(std::string("feature table lacks ") + to_string(kind));
    }
    const auto segment = interpolate_profile(it->second, d);
    profile.vector.insert(profile.vector.end(), segment.begin(), segment.end());
  }
  return profile;
}

FeatureProfile build_profile(std::span<const InvocationRecord> records,
                             std::span<const FeatureKind> kinds, int d, PplMode mode) {
  if (kinds.empty()) throw ConfigError("profile needs at least one feature kind");
  const FeatureTable table = extract_task_features(records, kinds, mode);
  return profile_from_table(records.front().setting(), table, kinds, d);
}

void write_profiles(const std::vector<ProfileEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["service_id"] = e.profile.setting.service_id;
    j["task_id"] = e.profile.setting.task_id;
    j["context_id"] = e.profile.setting.context_id;
    std::vector<std::string> kinds;
    for (auto k : e.profile.kinds) kinds.emplace_back(to_string(k));
    j["kinds"] = kinds;
    j["d"] = e.profile.dims;
    j["vector"] = e.profile.vector;
    if (e.target) j["target"] = *e.target;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::vector<ProfileEntry> read_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<ProfileEntry> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      ProfileEntry e;
      e.profile.setting = {j.at("service_id").get<std::string>(), j.at("task_id").get<std::string>(),
                           j.at("context_id").get<std::string>()};
      e.profile.kinds.clear();
      for (const auto& k : j.at("kinds")) {
        e.profile.kinds.push_back(feature_kind_from_string(k.get<std::string>()));
      }
      e.profile.dims = j.at("d").get<int>();
      e.profile.vector = j.at("vector").get<std::vector<double>>();
      if (auto it = j.find("target"); it != j.end()) e.target = it->get<double>();
      if (e.profile.vector.size() != e.profile.kinds.size() * static_cast<std::size_t>(e.profile.dims)) {
        throw ValidationError("vector", line, "length must equal |kinds| * d");
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError("<json>", line, ex.what());
    }
  }
  return out;
}

}  // namespace perfest
