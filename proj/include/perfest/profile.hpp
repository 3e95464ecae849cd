#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "perfest/features.hpp"
#include "perfest/types.hpp"

namespace perfest {

inline constexpr int kDefaultProfileDims = 100;

// Fixed-length summary of one setting: for every feature kind, the sorted
// per-sample values resampled to `dims` points, concatenated in `kinds`
// order.
struct FeatureProfile {
  SettingKey setting;
  int dims = kDefaultProfileDims;
  std::vector<FeatureKind> kinds{FeatureKind::kNll, FeatureKind::kPpl};
  std::vector<double> vector;

  friend bool operator==(const FeatureProfile&, const FeatureProfile&) = default;
};

// Sorts `values` ascending and samples the empirical quantile curve at the
// 1-based positions p = |D| * n / d, n = 1..d, interpolating linearly
// between the neighbouring order statistics. Indices are clamped to
// [1, |D|].
std::vector<double> interpolate_profile(std::span<const double> values, int d);

FeatureProfile build_profile(std::span<const InvocationRecord> records,
                             std::span<const FeatureKind> kinds, int d,
                             PplMode mode = PplMode::kNormalized);

// Same as build_profile but from already extracted per-sample features.
FeatureProfile profile_from_table(const SettingKey& setting, const FeatureTable& table,
                                  std::span<const FeatureKind> kinds, int d);

// A profile plus the setting's measured performance when it is known.
struct ProfileEntry {
  FeatureProfile profile;
  std::optional<double> target;
};

// Profile cache: one JSON object per line with the setting identifiers,
// kinds, d, vector and an optional `target`.
void write_profiles(const std::vector<ProfileEntry>& entries, const std::filesystem::path& path);
std::vector<ProfileEntry> read_profiles(const std::filesystem::path& path);

}  // namespace perfest
