#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfest/record_store.hpp"
#include "perfest/types.hpp"

namespace perfest {

enum class ServiceKind { kMock, kHttp };

const char* to_string(ServiceKind kind);
ServiceKind service_kind_from_string(const std::string& name);

struct ServiceDescriptor {
  std::string service_id;
  ServiceKind kind = ServiceKind::kMock;
  bool generation = true;
  bool input_scoring = true;
  int top_k = 5;

  // HTTP only.
  std::string endpoint;     // scheme://host[:port]
  std::string model;
  std::string api_key_env;  // name of the variable holding the key, never the key
  int max_tokens = 32;
  double timeout_s = 60.0;
  int retries = 3;
  int backoff_ms = 500;

  void validate() const;
};

nlohmann::ordered_json to_json(const ServiceDescriptor& d);
ServiceDescriptor descriptor_from_json(const nlohmann::json& j);

// What a service is asked to do for one sample.
struct InvocationRequest {
  std::string task_id;
  std::string sample_id;
  std::string input_text;
  ContextSpec context;
  std::optional<std::string> reference;  // copied onto the record, never sent
};

class Service {
 public:
  virtual ~Service() = default;
  virtual const ServiceDescriptor& descriptor() const = 0;
  // Returns a validated record. Records lacking required probability
  // fields are never returned.
  virtual InvocationRecord invoke(const InvocationRequest& request) const = 0;
};

InvocationRecord invoke(const Service& service, const InvocationRequest& request);

// ---------------------------------------------------------------- mock

struct MarketplaceConfig {
  int n_services = 5;
  int n_tasks = 13;
  int samples_per_task = 400;
  int contexts_per_task = 10;
  std::pair<double, double> skill_range{0.3, 0.9};
  std::pair<double, double> difficulty_range{0.0, 0.5};
  double feature_fidelity = 0.9;
  std::uint64_t seed = 0;

  int top_k = 5;
  int examples_per_context = 3;
  double context_spread = 0.1;    // helpfulness h ~ U[-spread, spread]
  double calibration_spread = 0.35;  // per-setting sharpness nuisance, log scale
  double familiarity_noise = 0.05;
  double finetune_gain = 0.5;     // s' = s * (1 + gain)
  // Optional explicit latent values, one per service / task.
  std::vector<double> skills;
  std::vector<double> difficulties;

  void validate() const;
};

nlohmann::ordered_json to_json(const MarketplaceConfig& c);
MarketplaceConfig marketplace_config_from_json(const nlohmann::json& j);

// A deterministic synthetic population of services, tasks and contexts.
// Each record is generated on demand from a seed derived from (config seed,
// service, task, context, sample), so any subset can be reproduced without
// generating the rest. The fine-tuned twin of service "x" is "x-ft"; it
// shares every random draw with "x" and differs only in skill.
class Marketplace : public RecordSource {
 public:
  explicit Marketplace(MarketplaceConfig config);
  Marketplace(const Marketplace&) = delete;
  Marketplace& operator=(const Marketplace&) = delete;

  const MarketplaceConfig& config() const { return config_; }
  const std::vector<ServiceDescriptor>& services() const { return services_; }
  const std::vector<TaskDataset>& tasks() const { return tasks_; }
  const std::vector<ContextSpec>& contexts() const { return contexts_; }

  static std::string finetuned_id(const std::string& service_id) { return service_id + "-ft"; }

  double skill(const std::string& service_id) const;  // accepts "-ft" ids
  double difficulty(const std::string& task_id) const;
  double helpfulness(const std::string& task_id, const std::string& context_id) const;
  // Per-sample probability of an exact answer in a setting.
  double correctness_probability(const SettingKey& key) const;

  InvocationRecord invoke(const std::string& service_id, const InvocationRequest& request) const;

  // Base services only; fine-tuned twins are reachable through records().
  std::vector<SettingKey> settings() const override;
  std::vector<InvocationRecord> records(const SettingKey& key) const override;

 private:
  struct TaskInfo {
    double difficulty = 0.0;
    const TaskDataset* dataset = nullptr;
    std::map<std::string, double> helpfulness;
  };

  const TaskInfo& task(const std::string& task_id) const;
  const ContextSpec& context(const std::string& task_id, const std::string& context_id) const;

  MarketplaceConfig config_;
  std::vector<ServiceDescriptor> services_;
  std::vector<TaskDataset> tasks_;
  std::vector<ContextSpec> contexts_;
  std::map<std::string, double> skills_;
  std::map<std::string, TaskInfo> task_info_;
};

class MockService : public Service {
 public:
  MockService(std::shared_ptr<const Marketplace> market, ServiceDescriptor descriptor);
  const ServiceDescriptor& descriptor() const override { return descriptor_; }
  InvocationRecord invoke(const InvocationRequest& request) const override;

 private:
  std::shared_ptr<const Marketplace> market_;
  ServiceDescriptor descriptor_;
};

struct SynthesizedMarketplace {
  std::shared_ptr<const Marketplace> market;
  std::vector<ServiceDescriptor> services;
  std::vector<TaskDataset> tasks;
  std::vector<ContextSpec> contexts;
  RecordStore store;  // every base setting, all samples
};

SynthesizedMarketplace synth_marketplace(const MarketplaceConfig& config);

// ---------------------------------------------------------------- HTTP

// OpenAI-compatible completions client. Generation requests ask for top-k
// log-probabilities; input scoring echoes the input with max_tokens = 0.
class HttpService : public Service {
 public:
  explicit HttpService(ServiceDescriptor descriptor);
  const ServiceDescriptor& descriptor() const override { return descriptor_; }
  InvocationRecord invoke(const InvocationRequest& request) const override;

  static std::string render_prompt(const InvocationRequest& request);

 private:
  nlohmann::json post(const nlohmann::json& body) const;

  ServiceDescriptor descriptor_;
};

// Parses one completions response into output steps. Throws CapabilityError
// when any probability field is absent or malformed.
std::vector<TokenStep> parse_generation(const nlohmann::json& response, std::string* text);
std::vector<double> parse_input_scores(const nlohmann::json& response);

// ---------------------------------------------------------- config/cache

struct ServiceConfig {
  std::vector<ServiceDescriptor> services;
  int concurrency = 4;
  std::optional<std::filesystem::path> marketplace;  // needed by MOCK services

  const ServiceDescriptor& find(const std::string& service_id) const;
};

ServiceConfig load_service_config(const std::filesystem::path& path);
void write_service_config(const ServiceConfig& config, const std::filesystem::path& path);

std::unique_ptr<Service> make_service(const ServiceDescriptor& descriptor,
                                      std::shared_ptr<const Marketplace> market);

// Append-only cache of validated records keyed by a hash of the request and
// the service parameters. Safe to share between threads.
class InvocationCache {
 public:
  explicit InvocationCache(std::filesystem::path path);

  static std::string key(const ServiceDescriptor& service, const InvocationRequest& request);

  std::optional<InvocationRecord> get(const std::string& key) const;
  void put(const std::string& key, const InvocationRecord& record);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, InvocationRecord> entries_;
};

// Invokes every request with at most `concurrency` calls in flight. Results
// come back in request order. With a cache, hits skip the call and new
// records are persisted as soon as they validate.
std::vector<InvocationRecord> invoke_all(const Service& service,
                                         const std::vector<InvocationRequest>& requests,
                                         int concurrency, InvocationCache* cache = nullptr);

}  // namespace perfest
