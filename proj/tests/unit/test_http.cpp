#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "perfest/error.hpp"
#include "perfest/features.hpp"
#include "perfest/services.hpp"

using namespace perfest;

namespace {

const char* kGeneration = R"({"choices":[{"text":" Paris","logprobs":{
  "tokens":[" Par","is"],
  "token_logprobs":[-0.105360516,-0.010050336],
  "top_logprobs":[{" Par":-0.105360516," Lon":-2.302585093},[{"token":"is","logprob":-0.010050336}]]}}]})";

const char* kEcho = R"({"choices":[{"text":"q","logprobs":{
  "tokens":["what","is","x"],"token_logprobs":[null,-0.693147181,-1.386294361],"top_logprobs":[null,{},{}]}}]})";

// Local completions endpoint whose behaviour each test scripts.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++calls_;
      last_auth_ = req.get_header_value("Authorization");
      if (n <= fail_first_) {
        res.status = fail_status_;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const bool echo = body.value("echo", false);
      res.set_content(echo ? kEcho : generation_, "application/json");
      res.status = status_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  ServiceDescriptor descriptor() const {
    ServiceDescriptor d;
    d.service_id = "remote";
    d.kind = ServiceKind::kHttp;
    d.endpoint = "http://127.0.0.1:" + std::to_string(port_);
    d.model = "test-model";
    d.top_k = 5;
    d.backoff_ms = 1;
    d.timeout_s = 5;
    return d;
  }

  std::string generation_ = kGeneration;
  int status_ = 200;
  int fail_first_ = 0;
  int fail_status_ = 503;
  std::atomic<int> calls_{0};
  std::string last_auth_;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

InvocationRequest request() {
  ContextSpec ctx{"t", "c", {{"capital of Italy", "Rome"}}};
  return {"t", "x1", "what is x", ctx, std::string("Paris")};
}

}  // namespace

TEST_SUITE("http") {

TEST_CASE("parses generation and echo scoring into a valid record") {
  FakeServer server;
  HttpService svc(server.descriptor());
  const auto r = svc.invoke(request());
  REQUIRE(r.output_steps.size() == 2);
  CHECK(r.output_steps[0].top_probs.size() == 2);
  CHECK(r.output_steps[0].top1() == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(r.output_steps[0].top2() == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(r.output_steps[1].top_probs.size() == 1);
  CHECK(r.generated_text == " Paris");
  CHECK(r.reference == std::optional<std::string>("Paris"));
  REQUIRE(r.input_scores.has_value());
  CHECK(r.input_scores->size() == 2);
  CHECK(ppl(r) == doctest::Approx(std::exp((std::log(2.0) + std::log(4.0)) / 2)).epsilon(1e-6));
  CHECK(server.calls_ == 2);
}

TEST_CASE("prompt renders context examples before the input") {
  CHECK(HttpService::render_prompt(request()) == "Input: capital of Italy\nOutput: Rome\n\nInput: what is x\nOutput:");
}

TEST_CASE("missing logprobs is a capability error") {
  FakeServer server;
  server.generation_ = R"({"choices":[{"text":" Paris"}]})";
  HttpService svc(server.descriptor());
  CHECK_THROWS_AS(svc.invoke(request()), CapabilityError);
}

TEST_CASE("missing top_logprobs is a capability error, never a default") {
  FakeServer server;
  server.generation_ = R"({"choices":[{"text":"a","logprobs":{"tokens":["a"],"token_logprobs":[-0.1]}}]})";
  HttpService svc(server.descriptor());
  CHECK_THROWS_AS(svc.invoke(request()), CapabilityError);
}

TEST_CASE("transient failures are retried") {
  FakeServer server;
  server.fail_first_ = 2;
  HttpService svc(server.descriptor());
  CHECK_NOTHROW(svc.invoke(request()));
  CHECK(server.calls_ == 4);
}

TEST_CASE("retries give up after the configured attempts") {
  FakeServer server;
  server.fail_first_ = 100;
  server.fail_status_ = 429;
  HttpService svc(server.descriptor());
  CHECK_THROWS_AS(svc.invoke(request()), TransportError);
  CHECK(server.calls_ == 3);
}

TEST_CASE("client errors are not retried") {
  FakeServer server;
  server.fail_first_ = 100;
  server.fail_status_ = 400;
  HttpService svc(server.descriptor());
  CHECK_THROWS_AS(svc.invoke(request()), TransportError);
  CHECK(server.calls_ == 1);
}

TEST_CASE("unreachable endpoints are transport errors") {
  ServiceDescriptor d;
  d.service_id = "down";
  d.kind = ServiceKind::kHttp;
  d.endpoint = "http://127.0.0.1:1";
  d.model = "m";
  d.retries = 2;
  d.backoff_ms = 1;
  d.timeout_s = 1;
  CHECK_THROWS_AS(HttpService(d).invoke(request()), TransportError);
}

TEST_CASE("api key comes from the named environment variable") {
  FakeServer server;
  auto d = server.descriptor();
  d.api_key_env = "PERFEST_TEST_KEY_UNSET";
  ::unsetenv("PERFEST_TEST_KEY_UNSET");
  CHECK_THROWS_AS(HttpService(d).invoke(request()), ConfigError);
  d.api_key_env = "PERFEST_TEST_KEY";
  ::setenv("PERFEST_TEST_KEY", "abc123", 1);
  CHECK_NOTHROW(HttpService(d).invoke(request()));
  CHECK(server.last_auth_ == "Bearer abc123");
}

TEST_CASE("services without input scoring skip the echo call") {
  FakeServer server;
  auto d = server.descriptor();
  d.input_scoring = false;
  const auto r = HttpService(d).invoke(request());
  CHECK(!r.input_scores.has_value());
  CHECK(server.calls_ == 1);
}

}  // TEST_SUITE
