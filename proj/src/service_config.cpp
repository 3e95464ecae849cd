#include <fstream>
#include <iomanip>
#include <sstream>

#include "perfest/error.hpp"
#include "perfest/parallel.hpp"
#include "perfest/record_io.hpp"
#include "perfest/seeding.hpp"
#include "perfest/services.hpp"

namespace perfest {

void ServiceDescriptor::validate() const {
  if (service_id.empty()) throw ConfigError("service_id must not be empty");
  if (top_k < 1) throw ConfigError(service_id + ": top_k must be >= 1");
  if (!generation) throw ConfigError(service_id + ": generation capability is required");
  if (kind == ServiceKind::kHttp) {
    if (endpoint.empty()) throw ConfigError(service_id + ": HTTP services need an endpoint");
    if (max_tokens < 1) throw ConfigError(service_id + ": max_tokens must be >= 1");
    if (timeout_s <= 0.0) throw ConfigError(service_id + ": timeout_s must be positive");
    if (retries < 1) throw ConfigError(service_id + ": retries must be >= 1");
    if (backoff_ms < 0) throw ConfigError(service_id + ": backoff_ms must be >= 0");
  }
}

nlohmann::ordered_json to_json(const ServiceDescriptor& d) {
  nlohmann::ordered_json j;
  j["service_id"] = d.service_id;
  j["kind"] = to_string(d.kind);
  j["capabilities"] = {{"generation", d.generation}, {"input_scoring", d.input_scoring}, {"top_k", d.top_k}};
  if (d.kind == ServiceKind::kHttp) {
    j["endpoint"] = d.endpoint;
    j["model"] = d.model;
    if (!d.api_key_env.empty()) j["api_key_env"] = d.api_key_env;
    j["max_tokens"] = d.max_tokens;
    j["timeout_s"] = d.timeout_s;
    j["retries"] = d.retries;
    j["backoff_ms"] = d.backoff_ms;
  }
  return j;
}

ServiceDescriptor descriptor_from_json(const nlohmann::json& j) {
  ServiceDescriptor d;
  try {
    if (j.contains("api_key") || j.contains("token")) {
      throw ConfigError("service config must not hold secrets; name the variable in api_key_env");
    }
    d.service_id = j.at("service_id").get<std::string>();
    d.kind = service_kind_from_string(j.value("kind", std::string("MOCK")));
    if (auto it = j.find("capabilities"); it != j.end()) {
      d.generation = it->value("generation", d.generation);
      d.input_scoring = it->value("input_scoring", d.input_scoring);
      d.top_k = it->value("top_k", d.top_k);
    }
    d.endpoint = j.value("endpoint", d.endpoint);
    d.model = j.value("model", d.model);
    d.api_key_env = j.value("api_key_env", d.api_key_env);
    d.max_tokens = j.value("max_tokens", d.max_tokens);
    d.timeout_s = j.value("timeout_s", d.timeout_s);
    d.retries = j.value("retries", d.retries);
    d.backoff_ms = j.value("backoff_ms", d.backoff_ms);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed service descriptor: ") + e.what());
  }
  d.validate();
  return d;
}

InvocationRecord invoke(const Service& service, const InvocationRequest& request) {
  return service.invoke(request);
}

const ServiceDescriptor& ServiceConfig::find(const std::string& service_id) const {
  for (const auto& s : services) {
    if (s.service_id == service_id) return s;
  }
  throw LookupError("service '" + service_id + "' is not configured");
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open service config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("service config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  ServiceConfig c;
  c.concurrency = j.value("concurrency", c.concurrency);
  if (c.concurrency < 1) throw ConfigError("concurrency must be >= 1");
  if (auto it = j.find("marketplace"); it != j.end()) {
    std::filesystem::path m = it->get<std::string>();
    c.marketplace = m.is_relative() ? path.parent_path() / m : m;
  }
  if (!j.contains("services") || !j["services"].is_array()) {
    throw ConfigError("service config needs a 'services' array");
  }
  for (const auto& s : j["services"]) c.services.push_back(descriptor_from_json(s));
  return c;
}

void write_service_config(const ServiceConfig& config, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["concurrency"] = config.concurrency;
  if (config.marketplace) {
    const auto rel = config.marketplace->is_absolute()
                         ? std::filesystem::relative(*config.marketplace, path.parent_path())
                         : *config.marketplace;
    j["marketplace"] = rel.generic_string();
  }
  auto services = nlohmann::ordered_json::array();
  for (const auto& s : config.services) services.push_back(to_json(s));
  j["services"] = std::move(services);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write service config '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::unique_ptr<Service> make_service(const ServiceDescriptor& descriptor,
                                      std::shared_ptr<const Marketplace> market) {
  if (descriptor.kind == ServiceKind::kHttp) return std::make_unique<HttpService>(descriptor);
  return std::make_unique<MockService>(std::move(market), descriptor);
}

InvocationCache::InvocationCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    // A torn final line from an interrupted run is dropped, not fatal.
    if (j.is_discarded() || !j.contains("key") || !j.contains("record")) continue;
    entries_[j["key"].get<std::string>()] = record_from_json(j["record"], n);
  }
}

std::string InvocationCache::key(const ServiceDescriptor& service, const InvocationRequest& request) {
  nlohmann::ordered_json j;
  j["service"] = to_json(service);
  j["task_id"] = request.task_id;
  j["context_id"] = request.context.context_id;
  auto examples = nlohmann::ordered_json::array();
  for (const auto& e : request.context.examples) examples.push_back({e.input_text, e.reference});
  j["examples"] = std::move(examples);
  j["sample_id"] = request.sample_id;
  j["input_text"] = request.input_text;
  const std::string blob = j.dump();
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << fnv1a(blob) << std::setw(16)
      << splitmix64(fnv1a(blob, 0x84222325cbf29ce4ULL));
  return out.str();
}

std::optional<InvocationRecord> InvocationCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void InvocationCache::put(const std::string& key, const InvocationRecord& record) {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to cache '" + path_.string() + "'");
  nlohmann::ordered_json j;
  j["key"] = key;
  j["record"] = to_json(record);
  out << j.dump() << '\n';
  out.flush();
  entries_[key] = record;
}

std::size_t InvocationCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<InvocationRecord> invoke_all(const Service& service,
                                         const std::vector<InvocationRequest>& requests,
                                         int concurrency, InvocationCache* cache) {
  std::vector<InvocationRecord> out(requests.size());
  parallel_for(requests.size(), concurrency, [&](std::size_t i) {
    std::string key;
    if (cache) {
      key = InvocationCache::key(service.descriptor(), requests[i]);
      if (auto hit = cache->get(key)) {
        out[i] = std::move(*hit);
        return;
      }
    }
    out[i] = service.invoke(requests[i]);
    if (cache) cache->put(key, out[i]);
  });
  return out;
}

}  // namespace perfest
