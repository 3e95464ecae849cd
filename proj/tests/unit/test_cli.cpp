#include <doctest.h>

#include <fstream>
#include <sstream>

#include "common/support.hpp"
#include "perfest/cli.hpp"
#include "perfest/evaluation.hpp"

using namespace perfest;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> small_synth(const std::filesystem::path& out, const std::string& seed) {
  return {"synth", "--seed", seed, "--out", out.string(), "--services", "2", "--tasks", "4",
          "--contexts", "2", "--samples", "60"};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help exits 0 and unknown input exits 2") {
  auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("recommend-finetune") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"synth"}).code == 2);
  CHECK(run({"train", "--store", "x", "--out", "y", "--jobs", "0"}).code == 2);
}

TEST_CASE("domain errors exit 1") {
  perfest::testing::TempDir dir;
  const auto r = run({"evaluate", "--store", (dir / "missing").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("records.jsonl") != std::string::npos);
}

TEST_CASE("malformed hyperparameters are usage errors") {
  perfest::testing::TempDir dir;
  REQUIRE(run(small_synth(dir.path(), "1")).code == 0);
  CHECK(run({"train", "--store", dir.path().string(), "--out", (dir / "m.json").string(), "--unlabeled-n", "40",
             "--param", "n_trees"})
            .code == 2);
}

TEST_CASE("synth is deterministic under --seed") {
  perfest::testing::TempDir a, b, c;
  REQUIRE(run(small_synth(a.path(), "7")).code == 0);
  REQUIRE(run(small_synth(b.path(), "7")).code == 0);
  REQUIRE(run(small_synth(c.path(), "8")).code == 0);
  for (const char* f : {"records.jsonl", "tasks.jsonl", "contexts.jsonl", "marketplace.json", "services.json"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "records.jsonl") != slurp(c / "records.jsonl"));
}

TEST_CASE("synth, train, evaluate, estimate, select and recommend") {
  perfest::testing::TempDir dir;
  const auto store = dir.path().string();
  REQUIRE(run(small_synth(dir.path(), "3")).code == 0);
  auto r = run({"--seed", "3", "train", "--store", store, "--out", (dir / "m.json").string(), "--unlabeled-n", "40",
                "--d", "10", "--param", "n_trees=30"});
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "m.json"));

  r = run({"--seed", "3", "evaluate", "--store", store, "--model", (dir / "m.json").string(), "--unlabeled-n", "40",
           "--sample-sizes", "4,8", "--folds", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("MAE") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["estimators"] == nlohmann::json({"RandomForest", "AvgTrain", "ATC", "Sample^4", "Sample^8"}));
  CHECK(report["rows"].size() == 16 * 5);

  r = run({"estimate", "--store", store, "--model", (dir / "m.json").string(), "--unlabeled-n", "40", "--out",
           (dir / "est.json").string()});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "est.json")).size() == 16);

  r = run({"select", "--store", store, "--model", (dir / "m.json").string(), "--for-task", "task02",
           "--unlabeled-n", "40"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("selected") != std::string::npos);
  CHECK(r.out.find("realized") != std::string::npos);

  r = run({"recommend-finetune", "--store", store, "--model", (dir / "m.json").string(), "--for-task", "task02",
           "--unlabeled-n", "40"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("fine-tune diff") != std::string::npos);

  r = run({"extract", "--store", store, "--out", (dir / "p.jsonl").string(), "--unlabeled-n", "40"});
  REQUIRE(r.code == 0);
  r = run({"select-features", "--store", store, "--unlabeled-n", "40", "--report", (dir / "sf.json").string()});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "sf.json"))["ranked"].size() == 15);
}

TEST_CASE("seed may follow the subcommand and config files supply flags") {
  perfest::testing::TempDir a, b;
  REQUIRE(run(small_synth(a.path(), "5")).code == 0);
  std::ofstream(b / "run.toml") << "seed = 5\n[synth]\nservices = 2\ntasks = 4\ncontexts = 2\nsamples = 60\n";
  REQUIRE(run({"--config", (b / "run.toml").string(), "synth", "--out", b.path().string()}).code == 0);
  CHECK(slurp(a / "records.jsonl") == slurp(b / "records.jsonl"));
}

TEST_CASE("invoke appends only missing records") {
  perfest::testing::TempDir dir;
  REQUIRE(run(small_synth(dir.path(), "2")).code == 0);
  const auto full = slurp(dir / "records.jsonl");
  std::filesystem::remove(dir / "records.jsonl");
  auto r = run({"invoke", "--store", dir.path().string(), "--service", "svc01", "--limit", "10"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("appended 80") != std::string::npos);
  r = run({"invoke", "--store", dir.path().string(), "--service", "svc01", "--limit", "10"});
  CHECK(r.out.find("appended 0") != std::string::npos);
  // Invoked records are the same bytes synth produced for those samples.
  std::istringstream lines(slurp(dir / "records.jsonl"));
  for (std::string line; std::getline(lines, line);) CHECK(full.find(line) != std::string::npos);
}

}  // TEST_SUITE
