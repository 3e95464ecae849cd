#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perfest {

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded k-fold partition of [0, n). Without groups, test sets differ in
// size by at most one. With groups (one label per index), whole groups are
// dealt to folds so no group straddles two folds; the number of groups per
// fold then differs by at most one. Index lists are ascending.
std::vector<Fold> kfold_split(std::size_t n, int folds, std::uint64_t seed,
                              std::optional<std::span<const std::string>> groups = std::nullopt);

}  // namespace perfest
