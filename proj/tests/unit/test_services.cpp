#include <doctest.h>

#include <fstream>

#include "common/support.hpp"
#include "perfest/error.hpp"
#include "perfest/evaluation.hpp"
#include "perfest/feature_selection.hpp"
#include "perfest/features.hpp"
#include "perfest/record_io.hpp"
#include "perfest/services.hpp"

using namespace perfest;

namespace {

MarketplaceConfig config(std::uint64_t seed) {
  MarketplaceConfig mc;
  mc.n_services = 3;
  mc.n_tasks = 4;
  mc.contexts_per_task = 2;
  mc.samples_per_task = 50;
  mc.seed = seed;
  return mc;
}

InvocationRequest request_for(const Marketplace& m, const std::string& task, const std::string& ctx,
                              std::size_t sample = 0) {
  for (const auto& t : m.tasks()) {
    if (t.task_id != task || t.split != Split::kTest) continue;
    for (const auto& c : m.contexts()) {
      if (c.task_id == task && c.context_id == ctx) {
        const auto& s = t.samples.at(sample);
        return {task, s.sample_id, s.input_text, c, s.reference};
      }
    }
  }
  FAIL("no such request");
  return {};
}

}  // namespace

TEST_SUITE("services") {

TEST_CASE("mock invocation is deterministic") {
  const Marketplace a(config(1));
  const Marketplace b(config(1));
  const auto req = request_for(a, "task02", "ctx01", 3);
  CHECK(a.invoke("svc02", req) == a.invoke("svc02", req));
  CHECK(a.invoke("svc02", req) == b.invoke("svc02", req));
}

TEST_CASE("mock records satisfy every record invariant") {
  const Marketplace m(config(2));
  std::size_t n = 0;
  for (const auto& key : m.settings()) {
    for (const auto& r : m.records(key)) {
      CHECK_NOTHROW(validate(r));
      CHECK(!r.output_steps.empty());
      CHECK(r.input_scores.has_value());
      for (const auto& s : r.output_steps) CHECK(s.top_probs.size() <= 5);
      ++n;
    }
  }
  CHECK(n == 3 * 4 * 2 * 50);
}

TEST_CASE("fully faithful maximal service answers confidently") {
  auto mc = config(3);
  mc.n_services = 1;
  mc.skills = {1.0};
  mc.difficulties = {0.0, 0.0, 0.0, 0.0};
  mc.feature_fidelity = 1.0;
  mc.context_spread = 0.0;
  mc.calibration_spread = 0.0;
  const Marketplace m(mc);
  for (const auto& key : m.settings()) {
    for (const auto& r : m.records(key)) {
      CHECK(f1_score(r.generated_text, *r.reference) == 1.0);
      for (const auto& s : r.output_steps) CHECK(s.top1() >= 0.9);
    }
  }
}

TEST_CASE("recorded truth orders services by skill") {
  auto mc = config(4);
  mc.n_services = 2;
  mc.n_tasks = 1;
  mc.contexts_per_task = 1;
  mc.samples_per_task = 400;
  mc.skills = {0.2, 0.9};
  mc.difficulties = {0.1};
  mc.feature_fidelity = 1.0;
  const Marketplace m(mc);
  const auto keys = m.settings();
  REQUIRE(keys.size() == 2);
  CHECK(task_performance(m.records(keys[0])) < task_performance(m.records(keys[1])));
  CHECK(m.skill("svc01") == 0.2);
  CHECK(m.skill("svc01-ft") == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("zero fidelity leaves NLL uninformative") {
  auto mc = config(5);
  mc.n_services = 5;
  mc.n_tasks = 6;
  mc.contexts_per_task = 2;
  mc.samples_per_task = 100;
  mc.feature_fidelity = 0.0;
  const Marketplace m(mc);
  std::vector<double> mean_nll, perf;
  for (const auto& key : m.settings()) {
    const auto recs = m.records(key);
    double s = 0.0;
    for (const auto& r : recs) s += nll(r);
    mean_nll.push_back(s / recs.size());
    perf.push_back(task_performance(recs));
  }
  REQUIRE(mean_nll.size() >= 50);
  CHECK(std::abs(pearson(mean_nll, perf)) < 0.15);
}

TEST_CASE("synthesis is byte-identical under a fixed seed") {
  perfest::testing::TempDir dir;
  auto dump = [&](const std::string& name) {
    const auto s = synth_marketplace(config(6));
    std::vector<InvocationRecord> all;
    for (const auto& k : s.store.settings()) {
      for (auto& r : s.store.records(k)) all.push_back(std::move(r));
    }
    write_records(all, dir / name);
    std::ifstream in(dir / name);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(dump("a.jsonl") == dump("b.jsonl"));
  const auto other = synth_marketplace(config(7));
  CHECK(other.store.records(other.store.settings().front()) !=
        synth_marketplace(config(6)).store.records(other.store.settings().front()));
}

TEST_CASE("fine-tuned twins share draws and never do worse on average") {
  const Marketplace m(config(8));
  for (const auto& key : m.settings()) {
    const auto base = m.records(key);
    const auto ft = m.records({Marketplace::finetuned_id(key.service_id), key.task_id, key.context_id});
    REQUIRE(base.size() == ft.size());
    CHECK(task_performance(ft) >= task_performance(base));
  }
}

TEST_CASE("mock service honours descriptor capabilities") {
  auto market = std::make_shared<const Marketplace>(config(9));
  auto d = market->services().front();
  d.top_k = 2;
  d.input_scoring = false;
  MockService svc(market, d);
  const auto r = svc.invoke(request_for(*market, "task01", "ctx01"));
  CHECK(!r.input_scores.has_value());
  for (const auto& s : r.output_steps) CHECK(s.top_probs.size() <= 2);
  CHECK_THROWS_AS(ppl(r), CapabilityError);
}

TEST_CASE("config validation") {
  auto mc = config(1);
  mc.feature_fidelity = 1.5;
  CHECK_THROWS_AS(mc.validate(), ConfigError);
  mc = config(1);
  mc.skill_range = {0.5, 1.2};
  CHECK_THROWS_AS(mc.validate(), ConfigError);
  mc = config(1);
  CHECK(to_json(marketplace_config_from_json(nlohmann::json::parse(to_json(mc).dump()))) == to_json(mc));
}

TEST_CASE("service config stores only the key variable name") {
  perfest::testing::TempDir dir;
  ServiceConfig sc;
  ServiceDescriptor http;
  http.service_id = "remote";
  http.kind = ServiceKind::kHttp;
  http.endpoint = "http://127.0.0.1:9";
  http.model = "m";
  http.api_key_env = "REMOTE_KEY";
  sc.services = {http};
  sc.concurrency = 2;
  write_service_config(sc, dir / "services.json");
  const auto back = load_service_config(dir / "services.json");
  CHECK(back.find("remote").api_key_env == "REMOTE_KEY");
  CHECK(back.concurrency == 2);
  CHECK_THROWS_AS(back.find("absent"), LookupError);

  auto j = nlohmann::json::parse(std::ifstream(dir / "services.json"));
  j["services"][0]["api_key"] = "sk-secret";
  std::ofstream(dir / "bad.json") << j.dump();
  CHECK_THROWS_AS(load_service_config(dir / "bad.json"), ConfigError);
}

TEST_CASE("cache persists records and invoke_all keeps request order") {
  perfest::testing::TempDir dir;
  auto market = std::make_shared<const Marketplace>(config(10));
  const auto svc = make_service(market->services().front(), market);
  std::vector<InvocationRequest> reqs;
  for (std::size_t i = 0; i < 12; ++i) reqs.push_back(request_for(*market, "task03", "ctx02", i));

  std::vector<InvocationRecord> first;
  {
    InvocationCache cache(dir / "cache.jsonl");
    first = invoke_all(*svc, reqs, 4, &cache);
    CHECK(cache.size() == 12);
  }
  for (std::size_t i = 0; i < reqs.size(); ++i) CHECK(first[i].sample_id == reqs[i].sample_id);

  std::ofstream(dir / "cache.jsonl", std::ios::app) << "{\"key\": \"torn";
  InvocationCache reopened(dir / "cache.jsonl");
  CHECK(reopened.size() == 12);
  const auto key = InvocationCache::key(svc->descriptor(), reqs[5]);
  REQUIRE(reopened.get(key).has_value());
  CHECK(*reopened.get(key) == first[5]);
  CHECK(invoke_all(*svc, reqs, 1, &reopened) == first);

  auto other = svc->descriptor();
  other.top_k = 3;
  CHECK(InvocationCache::key(other, reqs[5]) != key);
}

}  // TEST_SUITE
