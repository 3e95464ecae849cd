#include "perfest/cross_validation.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "perfest/error.hpp"
#include "perfest/seeding.hpp"

namespace perfest {

std::vector<Fold> kfold_split(std::size_t n, int folds, std::uint64_t seed,
                              std::optional<std::span<const std::string>> groups) {
  if (folds < 2) throw ConfigError("k-fold split needs at least 2 folds");
  const auto k = static_cast<std::size_t>(folds);
  if (n < k) {
    throw ConfigError("k-fold split: " + std::to_string(folds) + " folds exceed " +
                      std::to_string(n) + " rows");
  }

  // Units are either single rows or whole groups.
  std::vector<std::vector<std::size_t>> units;
  if (groups) {
    if (groups->size() != n) throw ShapeError("k-fold split: one group label per row required");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = index.try_emplace(std::string((*groups)[i]), units.size());
      if (inserted) units.emplace_back();
      units[it->second].push_back(i);
    }
    if (units.size() < k) {
      throw ConfigError("k-fold split: " + std::to_string(folds) + " folds exceed " +
                        std::to_string(units.size()) + " groups");
    }
  } else {
    units.resize(n);
    for (std::size_t i = 0; i < n; ++i) units[i] = {i};
  }

  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<bool>> in_test(k, std::vector<bool>(n, false));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    for (std::size_t i : units[order[pos]]) in_test[pos % k][i] = true;
  }

  std::vector<Fold> out(k);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      (in_test[f][i] ? out[f].test : out[f].train).push_back(i);
    }
  }
  return out;
}

}  // namespace perfest
