#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "perfest/error.hpp"
#include "perfest/services.hpp"

namespace perfest {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // full completions path
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  const std::string v1 = "/v1";
  const bool has_v1 = prefix.size() >= v1.size() &&
                      prefix.compare(prefix.size() - v1.size(), v1.size(), v1) == 0;
  e.path = prefix + (has_v1 ? "/completions" : "/v1/completions");
  return e;
}

const nlohmann::json& logprobs_of(const nlohmann::json& response) {
  if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw CapabilityError("response has no choices");
  }
  const auto& choice = response["choices"][0];
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
    throw CapabilityError("response carries no logprobs; the service does not expose token probabilities");
  }
  return choice["logprobs"];
}

const nlohmann::json& array_field(const nlohmann::json& obj, const char* name) {
  if (!obj.contains(name) || !obj[name].is_array()) {
    throw CapabilityError(std::string("logprobs lack the '") + name + "' array");
  }
  return obj[name];
}

double to_prob(const nlohmann::json& logprob, const char* what) {
  if (!logprob.is_number()) throw CapabilityError(std::string("non-numeric log-probability in ") + what);
  return std::min(1.0, std::exp(logprob.get<double>()));
}

}  // namespace

std::vector<TokenStep> parse_generation(const nlohmann::json& response, std::string* text) {
  const auto& lp = logprobs_of(response);
  const auto& tokens = array_field(lp, "tokens");
  const auto& token_lp = array_field(lp, "token_logprobs");
  const auto& top = array_field(lp, "top_logprobs");
  if (tokens.size() != token_lp.size() || tokens.size() != top.size()) {
    throw CapabilityError("logprobs arrays differ in length");
  }
  std::vector<TokenStep> steps;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!tokens[i].is_string()) throw CapabilityError("non-string token in logprobs");
    TokenStep step;
    step.token = tokens[i].get<std::string>();
    const double chosen = to_prob(token_lp[i], "token_logprobs");

    // Two common encodings: {token: logprob} or [{token, logprob}].
    const auto& alts = top[i];
    if (alts.is_object()) {
      for (const auto& [tok, value] : alts.items()) step.top_probs.push_back({tok, to_prob(value, "top_logprobs")});
    } else if (alts.is_array()) {
      for (const auto& a : alts) {
        if (!a.is_object() || !a.contains("token") || !a.contains("logprob") || !a["token"].is_string()) {
          throw CapabilityError("malformed top_logprobs entry");
        }
        step.top_probs.push_back({a["token"].get<std::string>(), to_prob(a["logprob"], "top_logprobs")});
      }
    } else {
      throw CapabilityError("top_logprobs entry is neither an object nor an array");
    }
    if (std::none_of(step.top_probs.begin(), step.top_probs.end(),
                     [&](const Candidate& c) { return c.token == step.token; })) {
      step.top_probs.push_back({step.token, chosen});
    }
    std::stable_sort(step.top_probs.begin(), step.top_probs.end(),
                     [](const Candidate& a, const Candidate& b) { return a.prob > b.prob; });
    steps.push_back(std::move(step));
  }
  if (text) {
    const auto& choice = response["choices"][0];
    *text = choice.contains("text") && choice["text"].is_string() ? choice["text"].get<std::string>() : "";
  }
  return steps;
}

std::vector<double> parse_input_scores(const nlohmann::json& response) {
  const auto& lp = logprobs_of(response);
  const auto& token_lp = array_field(lp, "token_logprobs");
  std::vector<double> scores;
  for (std::size_t i = 0; i < token_lp.size(); ++i) {
    // The first prompt token has no left context and is reported as null.
    if (i == 0 && token_lp[i].is_null()) continue;
    scores.push_back(to_prob(token_lp[i], "echoed token_logprobs"));
  }
  if (scores.empty()) throw CapabilityError("echo response scored no input tokens");
  return scores;
}

HttpService::HttpService(ServiceDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.validate();
  if (descriptor_.kind != ServiceKind::kHttp) {
    throw ConfigError("service '" + descriptor_.service_id + "' is not an HTTP service");
  }
}

std::string HttpService::render_prompt(const InvocationRequest& request) {
  std::string prompt;
  for (const auto& ex : request.context.examples) {
    prompt += "Input: " + ex.input_text + "\nOutput: " + ex.reference + "\n\n";
  }
  prompt += "Input: " + request.input_text + "\nOutput:";
  return prompt;
}

nlohmann::json HttpService::post(const nlohmann::json& body) const {
  const auto endpoint = split_endpoint(descriptor_.endpoint);
  httplib::Headers headers;
  if (!descriptor_.api_key_env.empty()) {
    const char* key = std::getenv(descriptor_.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("environment variable " + descriptor_.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(descriptor_.timeout_s * 1000.0));
  const std::string payload = body.dump();
  const int attempts = std::max(1, descriptor_.retries);

  std::string last_error;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(descriptor_.backoff_ms) * (1 << (attempt - 1)));
    }
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw TransportError(descriptor_.service_id + ": HTTP " + std::to_string(res->status) + ": " +
                           res->body.substr(0, 200));
    }
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw TransportError(descriptor_.service_id + ": response is not JSON");
    return parsed;
  }
  throw TransportError(descriptor_.service_id + ": " + last_error + " after " + std::to_string(attempts) +
                       " attempts");
}

InvocationRecord HttpService::invoke(const InvocationRequest& request) const {
  nlohmann::json body;
  body["model"] = descriptor_.model;
  body["prompt"] = render_prompt(request);
  body["max_tokens"] = descriptor_.max_tokens;
  body["temperature"] = 0;
  body["logprobs"] = descriptor_.top_k;
  body["stop"] = {"\n"};

  InvocationRecord r;
  r.service_id = descriptor_.service_id;
  r.task_id = request.task_id;
  r.context_id = request.context.context_id;
  r.sample_id = request.sample_id;
  r.input_text = request.input_text;
  r.reference = request.reference;
  r.output_steps = parse_generation(post(body), &r.generated_text);
  for (auto& step : r.output_steps) {
    if (static_cast<int>(step.top_probs.size()) > descriptor_.top_k) {
      step.top_probs.resize(static_cast<std::size_t>(descriptor_.top_k));
    }
  }

  if (descriptor_.input_scoring) {
    nlohmann::json echo;
    echo["model"] = descriptor_.model;
    echo["prompt"] = request.input_text;
    echo["max_tokens"] = 0;
    echo["echo"] = true;
    echo["logprobs"] = 1;
    r.input_scores = parse_input_scores(post(echo));
  }
  validate(r);
  return r;
}

}  // namespace perfest
