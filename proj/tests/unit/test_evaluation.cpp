#include <doctest.h>

#include <fstream>
#include <set>

#include "common/support.hpp"
#include "perfest/cross_validation.hpp"
#include "perfest/error.hpp"
#include "perfest/evaluation.hpp"
#include "perfest/services.hpp"

using namespace perfest;
using doctest::Approx;

namespace {

MarketplaceConfig small_market(std::uint64_t seed, int tasks = 4, int contexts = 2, int samples = 60) {
  MarketplaceConfig mc;
  mc.n_services = 2;
  mc.n_tasks = tasks;
  mc.contexts_per_task = contexts;
  mc.samples_per_task = samples;
  mc.seed = seed;
  return mc;
}

ExperimentPlan small_plan(int contexts = 2, std::size_t unlabeled = 40) {
  ExperimentPlan plan;
  plan.contexts_per_task = contexts;
  plan.unlabeled_n = unlabeled;
  plan.d = 10;
  plan.model_specs = {ModelSpec::defaults(ModelKind::kKnn)};
  auto rf = ModelSpec::defaults(ModelKind::kRandomForest);
  rf.hyperparams["n_trees"] = 20;
  plan.model_specs.push_back(rf);
  plan.folds = 2;
  plan.sample_sizes = {4, 8};
  plan.seed = 5;
  return plan;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("f1 examples") {
  CHECK(f1_score("the cat", "the cat") == 1.0);
  CHECK(f1_score("the cat sat", "the cat") == Approx(0.8).epsilon(1e-12));
  CHECK(f1_score("", "answer") == 0.0);
  CHECK(f1_score("", "") == 1.0);
  CHECK(f1_score("The Cat!", "the cat") == 1.0);
  CHECK(f1_score("a a b", "a b b") == Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("f1 is symmetric") {
  Rng rng(1);
  const char* words[] = {"a", "b", "c", "the", "dog", "Dog."};
  for (int i = 0; i < 500; ++i) {
    std::string x, y;
    for (int k = rng() % 5; k > 0; --k) x += std::string(words[rng() % 6]) + " ";
    for (int k = rng() % 5; k > 0; --k) y += std::string(words[rng() % 6]) + " ";
    CHECK(f1_score(x, y) == f1_score(y, x));
  }
}

TEST_CASE("task performance") {
  auto r = perfest::testing::make_record({{1.0}});
  r.generated_text = "x y";
  r.reference = "x y";
  CHECK(task_performance(std::vector{r, r}) == 1.0);

  auto a = r, b = r;
  a.generated_text = "the cat sat";
  a.reference = "the cat";
  b.generated_text = "dog";
  CHECK(task_performance(std::vector{a, b}) == Approx(0.4).epsilon(1e-12));

  b.reference.reset();
  CHECK_THROWS_AS(task_performance(std::vector{a, b}), LabelingError);

  Marketplace m(small_market(3, 1, 1, 400));
  const auto recs = m.records(m.settings().front());
  double s = 0.0;
  for (const auto& x : recs) s += f1_score(x.generated_text, *x.reference);
  CHECK(task_performance(recs) == Approx(s / 400).epsilon(1e-12));
}

TEST_CASE("mae examples") {
  const std::vector<std::pair<double, double>> same{{0.3, 0.3}, {0.6, 0.6}};
  CHECK(mae(same) == ErrorSummary{0.0, 0.0});
  const auto e = mae(std::vector<std::pair<double, double>>{{0.1, 0.0}, {0.5, 0.8}});
  CHECK(e.mae == Approx(0.2).epsilon(1e-12));
  CHECK(e.sd == Approx(0.1).epsilon(1e-12));
  const auto one = mae(std::vector<std::pair<double, double>>{{0.5, 0.9}});
  CHECK(one.mae == Approx(0.4).epsilon(1e-12));
  CHECK(one.sd == 0.0);
  CHECK_THROWS_AS(mae(std::vector<std::pair<double, double>>{}), InsufficientDataError);
}

TEST_CASE("k-fold partitions") {
  const auto folds = kfold_split(10, 5, 3);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    CHECK(f.test.size() == 2);
    CHECK(f.train.size() == 8);
    for (auto i : f.test) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 10);

  const auto again = kfold_split(10, 5, 3);
  for (std::size_t i = 0; i < 5; ++i) CHECK(again[i].test == folds[i].test);

  for (std::size_t n = 5; n < 40; ++n) {
    const auto fs = kfold_split(n, 5, n);
    std::size_t lo = n, hi = 0;
    for (const auto& f : fs) {
      lo = std::min(lo, f.test.size());
      hi = std::max(hi, f.test.size());
    }
    CHECK(hi - lo <= 1);
  }
  CHECK_THROWS_AS(kfold_split(3, 5, 0), ConfigError);
  CHECK_THROWS_AS(kfold_split(10, 1, 0), ConfigError);
}

TEST_CASE("grouped k-fold keeps tasks whole") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::string> groups;
    for (int t = 0; t < 13; ++t) {
      for (int c = 0; c < 1 + (t % 3); ++c) groups.push_back("task" + std::to_string(t));
    }
    const auto folds = kfold_split(groups.size(), 5, seed, std::span<const std::string>(groups));
    std::map<std::string, int> fold_of;
    std::size_t covered = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      covered += folds[f].test.size();
      for (auto i : folds[f].test) {
        auto [it, fresh] = fold_of.emplace(groups[i], static_cast<int>(f));
        CHECK(it->second == static_cast<int>(f));
      }
    }
    CHECK(covered == groups.size());
  }
}

TEST_CASE("smaller unlabeled draws are prefixes of larger ones") {
  Marketplace m(small_market(4, 1, 1, 100));
  const auto recs = m.records(m.settings().front());
  const auto big = draw_unlabeled(recs, 80, 9);
  const auto small = draw_unlabeled(recs, 20, 9);
  CHECK(std::equal(small.begin(), small.end(), big.begin()));
  CHECK_THROWS_AS(draw_unlabeled(recs, 101, 9), InsufficientDataError);
}

TEST_CASE("plan JSON round-trips") {
  auto plan = small_plan();
  plan.ppl_mode = PplMode::kExactSum;
  plan.services = {"svc01"};
  const auto back = plan_from_json(nlohmann::json::parse(to_json(plan).dump()));
  CHECK(to_json(back) == to_json(plan));
  auto bad = to_json(plan);
  bad["ppl_mode"] = "other";
  CHECK_THROWS_AS(plan_from_json(nlohmann::json::parse(bad.dump())), ConfigError);
}

TEST_CASE("single-setting plan falls back to resubstitution") {
  Marketplace m(small_market(5, 1, 1, 60));
  ExperimentPlan plan = small_plan(1);
  plan.model_specs = {ModelSpec::defaults(ModelKind::kKnn)};
  plan.model_specs[0].hyperparams["k"] = 1;
  plan.services = {"svc01"};
  const auto report = run_experiment(plan, m);
  CHECK(report.effective_folds == 1);
  CHECK(report.estimators == std::vector<std::string>{"1-NN", "AvgTrain", "ATC", "Sample^4", "Sample^8"});
  CHECK(report.rows.size() == report.estimators.size());
  for (const auto& r : report.rows) {
    CHECK(r.absolute_error >= 0.0);
    CHECK(r.absolute_error <= 1.0);
  }
}

TEST_CASE("report invariants and determinism") {
  Marketplace m(small_market(6));
  const auto plan = small_plan();
  const auto report = run_experiment(plan, m);
  CHECK(report.effective_folds == 2);
  CHECK(report.rows.size() == 16 * report.estimators.size());
  std::map<std::string, std::vector<double>> errs;
  for (const auto& r : report.rows) {
    CHECK(r.absolute_error == std::abs(r.estimate - r.truth));
    CHECK(r.estimate >= 0.0);
    CHECK(r.estimate <= 1.0);
    errs[r.estimator].push_back(r.absolute_error);
  }
  for (const auto& [name, e] : errs) {
    double s = 0.0;
    for (double x : e) s += x;
    CHECK(std::abs(report.aggregates.at(name).mae - s / e.size()) <= 1e-12);
  }

  perfest::testing::TempDir dir;
  write_report(report, plan, dir / "a.json");
  write_report(run_experiment(plan, m), plan, dir / "b.json");
  auto jobs = plan;
  jobs.jobs = 3;
  write_report(run_experiment(jobs, m), plan, dir / "c.json");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(slurp(dir / "a.json") == slurp(dir / "c.json"));

  const auto table = render_table(report);
  CHECK(table.find("Total") != std::string::npos);
  CHECK(table.find("AvgTrain") != std::string::npos);
}

TEST_CASE("missing settings are coverage errors naming the gap") {
  Marketplace m(small_market(7, 2, 2));
  auto plan = small_plan(3);
  try {
    run_experiment(plan, m);
    FAIL("expected a coverage error");
  } catch (const CoverageError& e) {
    CHECK(std::string(e.what()).find("svc01/task01") != std::string::npos);
  }
}

TEST_CASE("perfect-information marketplace favours the meta-model") {
  auto mc = small_market(8, 8, 3, 120);
  mc.n_services = 3;
  mc.feature_fidelity = 1.0;
  mc.calibration_spread = 0.0;
  Marketplace m(mc);
  auto plan = small_plan(3, 100);
  auto rf = ModelSpec::defaults(ModelKind::kRandomForest);
  rf.hyperparams["n_trees"] = 60;
  plan.model_specs = {rf};
  plan.folds = 4;
  const auto report = run_experiment(plan, m);
  CHECK(report.aggregates.at("RandomForest").mae < report.aggregates.at("AvgTrain").mae);
}

TEST_CASE("extract_profiles attaches targets only when labeled") {
  Marketplace m(small_market(9, 2, 1, 30));
  auto plan = small_plan(1, 20);
  const auto entries = extract_profiles(plan, m);
  REQUIRE(entries.size() == 4);
  for (const auto& e : entries) {
    CHECK(e.target.has_value());
    CHECK(e.profile.vector.size() == 20);
  }
  std::vector<InvocationRecord> unlabeled;
  for (const auto& k : m.settings()) {
    for (auto r : m.records(k)) {
      r.reference.reset();
      unlabeled.push_back(std::move(r));
    }
  }
  const auto bare = extract_profiles(plan, RecordStore(unlabeled));
  for (const auto& e : bare) CHECK(!e.target.has_value());
}

}  // TEST_SUITE
