#include <doctest.h>

#include <algorithm>

#include "common/oracles.hpp"
#include "common/support.hpp"
#include "perfest/error.hpp"
#include "perfest/profile.hpp"
#include "perfest/services.hpp"

using namespace perfest;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n) {
  std::normal_distribution<double> z(0.0, 3.0);
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  if (n > 3) v[1] = v[0];  // keep some ties
  return v;
}

std::vector<InvocationRecord> setting_records(std::uint64_t seed, int n) {
  MarketplaceConfig mc;
  mc.n_services = 1;
  mc.n_tasks = 1;
  mc.contexts_per_task = 1;
  mc.samples_per_task = n;
  mc.seed = seed;
  Marketplace m(mc);
  return m.records(m.settings().front());
}

}  // namespace

TEST_SUITE("profile") {

TEST_CASE("interpolation examples") {
  CHECK(interpolate_profile(std::vector<double>{3, 1, 4, 2}, 4) == std::vector<double>{1, 2, 3, 4});
  CHECK(interpolate_profile(std::vector<double>{1, 2, 3, 4}, 2) == std::vector<double>{2, 4});
  CHECK(interpolate_profile(std::vector<double>{10}, 3) == std::vector<double>{10, 10, 10});
  CHECK_THROWS_AS(interpolate_profile(std::vector<double>{}, 3), EmptyProfileError);
}

TEST_CASE("fractional positions use convex weights") {
  // |D| = 2, d = 3: p = 2/3 (clamped to v1), 4/3, 2.
  const auto out = interpolate_profile(std::vector<double>{0.0, 3.0}, 3);
  REQUIRE(out.size() == 3);
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out[2] == 3.0);
}

TEST_CASE("interpolation properties over random lists") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    const int d = 1 + static_cast<int>(rng() % 120);
    auto v = random_values(rng, n);
    const auto out = interpolate_profile(v, d);
    REQUIRE(out.size() == static_cast<std::size_t>(d));
    const auto want = oracle::interpolate(v, d);
    for (int i = 0; i < d; ++i) CHECK(std::abs(out[i] - want[i]) <= 1e-12 * std::max(1.0, std::abs(want[i])));

    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(interpolate_profile(v, static_cast<int>(n)) == sorted);

    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(interpolate_profile(shuffled, d) == out);

    CHECK(std::is_sorted(out.begin(), out.end()));
    for (double x : out) {
      CHECK(x >= sorted.front());
      CHECK(x <= sorted.back());
    }
    if (n >= static_cast<std::size_t>(d)) CHECK(interpolate_profile(out, d) == out);
  }
}

TEST_CASE("build_profile from a single record repeats its value") {
  const auto recs = setting_records(1, 1);
  const std::vector<FeatureKind> kinds{FeatureKind::kNll};
  const auto p = build_profile(recs, kinds, 4);
  CHECK(p.vector == std::vector<double>(4, nll(recs[0])));
  CHECK(p.setting == recs[0].setting());
}

TEST_CASE("build_profile concatenates sorted halves in kind order") {
  auto recs = setting_records(2, 400);
  const std::vector<FeatureKind> np{FeatureKind::kNll, FeatureKind::kPpl};
  const std::vector<FeatureKind> pn{FeatureKind::kPpl, FeatureKind::kNll};
  const auto a = build_profile(recs, np, 100);
  REQUIRE(a.vector.size() == 200);
  CHECK(std::is_sorted(a.vector.begin(), a.vector.begin() + 100));
  CHECK(std::is_sorted(a.vector.begin() + 100, a.vector.end()));
  const auto b = build_profile(recs, pn, 100);
  CHECK(std::equal(a.vector.begin(), a.vector.begin() + 100, b.vector.begin() + 100));
  CHECK(std::equal(a.vector.begin() + 100, a.vector.end(), b.vector.begin()));

  Rng rng(5);
  std::shuffle(recs.begin(), recs.end(), rng);
  CHECK(build_profile(recs, np, 100).vector == a.vector);
}

TEST_CASE("profile files round-trip") {
  perfest::testing::TempDir dir;
  const auto recs = setting_records(3, 50);
  const std::vector<FeatureKind> np{FeatureKind::kNll, FeatureKind::kPpl};
  std::vector<ProfileEntry> entries{{build_profile(recs, np, 10), 0.25}, {build_profile(recs, np, 10), std::nullopt}};
  entries[1].profile.setting.context_id = "other";
  write_profiles(entries, dir / "p.jsonl");
  const auto back = read_profiles(dir / "p.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].profile == entries[0].profile);
  CHECK(back[0].target == entries[0].target);
  CHECK(back[1].profile == entries[1].profile);
  CHECK(!back[1].target);
}

}  // TEST_SUITE
