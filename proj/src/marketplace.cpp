#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "perfest/error.hpp"
#include "perfest/evaluation.hpp"
#include "perfest/seeding.hpp"
#include "perfest/services.hpp"

namespace perfest {

namespace {

// Shape constants of the generator. Only the monotone coupling between
// correctness and sharpness matters downstream; these values give
// well-separated but overlapping confidence clusters.
constexpr double kPartialShare = 0.4;     // share of misses that are partially right
constexpr double kBaseUncertainty = 0.05;  // mean top-1 deficit of an exact answer
constexpr double kUncertaintyRange = 0.45;
constexpr double kBetaShape = 3.0;
constexpr double kFamiliarityOffset = 0.3;
constexpr double kScoreFloor = 0.35;
constexpr double kScoreRange = 0.6;
constexpr double kSampleCoupling = 0.4;  // weight of the sample's own correctness in its familiarity
constexpr double kSampleNoise = 0.12;

const char* const kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "sa", "te", "vi",
                                  "zo", "pa", "de", "go", "bu", "fi", "ha", "jo"};
constexpr int kSyllableCount = 16;
constexpr int kVocabulary = kSyllableCount * kSyllableCount * kSyllableCount;

std::string vocab_word(int index) {
  std::string w;
  for (int i = 0; i < 3; ++i) {
    w += kSyllables[index % kSyllableCount];
    index /= kSyllableCount;
  }
  return w;
}

std::string random_word(Rng& rng) {
  return vocab_word(std::uniform_int_distribution<int>(0, kVocabulary - 1)(rng));
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string numbered(const char* prefix, int i, int width) {
  std::string n = std::to_string(i);
  if (static_cast<int>(n.size()) < width) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double beta_sym(Rng& rng, double a) {
  std::gamma_distribution<double> g(a, 1.0);
  const double x = g(rng);
  const double y = g(rng);
  return x / (x + y);
}

// Evenly spaced strata with jitter in the middle half of each stratum,
// assigned to ids in shuffled order.
std::vector<double> stratified(std::pair<double, double> range, int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pos = n == 1 ? 0.5 : (i + 0.25 + 0.5 * u(rng)) / n;
    v[static_cast<std::size_t>(i)] = range.first + (range.second - range.first) * pos;
  }
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

void check_range(const std::pair<double, double>& r, const char* name) {
  if (!(r.first >= 0.0 && r.second <= 1.0 && r.first <= r.second)) {
    throw ConfigError(std::string(name) + " must be an interval within [0, 1]");
  }
}

std::string base_id(const std::string& service_id) {
  const std::string suffix = "-ft";
  if (service_id.size() > suffix.size() &&
      service_id.compare(service_id.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return service_id.substr(0, service_id.size() - suffix.size());
  }
  return service_id;
}

}  // namespace

const char* to_string(ServiceKind kind) { return kind == ServiceKind::kMock ? "MOCK" : "HTTP"; }

ServiceKind service_kind_from_string(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "MOCK") return ServiceKind::kMock;
  if (up == "HTTP") return ServiceKind::kHttp;
  throw ConfigError("unknown service kind '" + name + "'");
}

void MarketplaceConfig::validate() const {
  if (n_services < 1 || n_tasks < 1 || samples_per_task < 1 || contexts_per_task < 1) {
    throw ConfigError("marketplace sizes must all be >= 1");
  }
  check_range(skill_range, "skill_range");
  check_range(difficulty_range, "difficulty_range");
  if (!(feature_fidelity >= 0.0 && feature_fidelity <= 1.0)) {
    throw ConfigError("feature_fidelity must be within [0, 1]");
  }
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (examples_per_context < 1) throw ConfigError("examples_per_context must be >= 1");
  if (context_spread < 0.0 || calibration_spread < 0.0 || familiarity_noise < 0.0 || finetune_gain < 0.0) {
    throw ConfigError("spreads and gains must be non-negative");
  }
  if (!skills.empty() && static_cast<int>(skills.size()) != n_services) {
    throw ConfigError("skills must list one value per service");
  }
  if (!difficulties.empty() && static_cast<int>(difficulties.size()) != n_tasks) {
    throw ConfigError("difficulties must list one value per task");
  }
  for (double s : skills) {
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("skills must be within [0, 1]");
  }
  for (double d : difficulties) {
    if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("difficulties must be within [0, 1]");
  }
}

nlohmann::ordered_json to_json(const MarketplaceConfig& c) {
  nlohmann::ordered_json j;
  j["n_services"] = c.n_services;
  j["n_tasks"] = c.n_tasks;
  j["samples_per_task"] = c.samples_per_task;
  j["contexts_per_task"] = c.contexts_per_task;
  j["skill_range"] = {c.skill_range.first, c.skill_range.second};
  j["difficulty_range"] = {c.difficulty_range.first, c.difficulty_range.second};
  j["feature_fidelity"] = c.feature_fidelity;
  j["seed"] = c.seed;
  j["top_k"] = c.top_k;
  j["examples_per_context"] = c.examples_per_context;
  j["context_spread"] = c.context_spread;
  j["calibration_spread"] = c.calibration_spread;
  j["familiarity_noise"] = c.familiarity_noise;
  j["finetune_gain"] = c.finetune_gain;
  if (!c.skills.empty()) j["skills"] = c.skills;
  if (!c.difficulties.empty()) j["difficulties"] = c.difficulties;
  return j;
}

MarketplaceConfig marketplace_config_from_json(const nlohmann::json& j) {
  MarketplaceConfig c;
  try {
    c.n_services = j.value("n_services", c.n_services);
    c.n_tasks = j.value("n_tasks", c.n_tasks);
    c.samples_per_task = j.value("samples_per_task", c.samples_per_task);
    c.contexts_per_task = j.value("contexts_per_task", c.contexts_per_task);
    if (auto it = j.find("skill_range"); it != j.end()) c.skill_range = {it->at(0), it->at(1)};
    if (auto it = j.find("difficulty_range"); it != j.end()) c.difficulty_range = {it->at(0), it->at(1)};
    c.feature_fidelity = j.value("feature_fidelity", c.feature_fidelity);
    c.seed = j.value("seed", c.seed);
    c.top_k = j.value("top_k", c.top_k);
    c.examples_per_context = j.value("examples_per_context", c.examples_per_context);
    c.context_spread = j.value("context_spread", c.context_spread);
    c.calibration_spread = j.value("calibration_spread", c.calibration_spread);
    c.familiarity_noise = j.value("familiarity_noise", c.familiarity_noise);
    c.finetune_gain = j.value("finetune_gain", c.finetune_gain);
    c.skills = j.value("skills", c.skills);
    c.difficulties = j.value("difficulties", c.difficulties);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed marketplace config: ") + e.what());
  }
  c.validate();
  return c;
}

Marketplace::Marketplace(MarketplaceConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;

  Rng skill_rng(derive_seed(c.seed, "skills"));
  const auto skills = c.skills.empty() ? stratified(c.skill_range, c.n_services, skill_rng) : c.skills;
  for (int i = 0; i < c.n_services; ++i) {
    ServiceDescriptor d;
    d.service_id = numbered("svc", i + 1, 2);
    d.kind = ServiceKind::kMock;
    d.top_k = c.top_k;
    skills_[d.service_id] = skills[static_cast<std::size_t>(i)];
    services_.push_back(std::move(d));
  }

  Rng diff_rng(derive_seed(c.seed, "difficulties"));
  const auto diffs =
      c.difficulties.empty() ? stratified(c.difficulty_range, c.n_tasks, diff_rng) : c.difficulties;
  tasks_.reserve(static_cast<std::size_t>(c.n_tasks));
  for (int t = 0; t < c.n_tasks; ++t) {
    const std::string task_id = numbered("task", t + 1, 2);
    Rng rng(derive_seed(c.seed, {"task", task_id}));
    const int ref_hi = 2 + std::uniform_int_distribution<int>(0, 3)(rng);
    std::uniform_int_distribution<int> ref_len(2, ref_hi);
    std::uniform_int_distribution<int> input_len(6, 14);
    auto words = [&](int n) {
      std::vector<std::string> w;
      for (int i = 0; i < n; ++i) w.push_back(random_word(rng));
      return join(w);
    };

    TaskDataset ds;
    ds.task_id = task_id;
    ds.split = Split::kTest;
    for (int s = 0; s < c.samples_per_task; ++s) {
      TaskSample sample;
      sample.sample_id = numbered("s", s + 1, 5);
      sample.input_text = words(input_len(rng));
      sample.reference = words(ref_len(rng));
      ds.samples.push_back(std::move(sample));
    }
    tasks_.push_back(std::move(ds));

    TaskInfo info;
    info.difficulty = diffs[static_cast<std::size_t>(t)];
    std::uniform_real_distribution<double> h(-c.context_spread, c.context_spread);
    for (int k = 0; k < c.contexts_per_task; ++k) {
      ContextSpec ctx;
      ctx.task_id = task_id;
      ctx.context_id = numbered("ctx", k + 1, 2);
      for (int e = 0; e < c.examples_per_context; ++e) {
        ctx.examples.push_back({words(input_len(rng)), words(ref_len(rng))});
      }
      info.helpfulness[ctx.context_id] = c.context_spread > 0.0 ? h(rng) : 0.0;
      contexts_.push_back(std::move(ctx));
    }
    task_info_[task_id] = std::move(info);
  }
  for (std::size_t t = 0; t < tasks_.size(); ++t) task_info_[tasks_[t].task_id].dataset = &tasks_[t];
}

const Marketplace::TaskInfo& Marketplace::task(const std::string& task_id) const {
  auto it = task_info_.find(task_id);
  if (it == task_info_.end()) throw LookupError("unknown task '" + task_id + "'");
  return it->second;
}

const ContextSpec& Marketplace::context(const std::string& task_id, const std::string& context_id) const {
  for (const auto& c : contexts_) {
    if (c.task_id == task_id && c.context_id == context_id) return c;
  }
  throw LookupError("unknown context '" + task_id + "/" + context_id + "'");
}

double Marketplace::skill(const std::string& service_id) const {
  const std::string base = base_id(service_id);
  auto it = skills_.find(base);
  if (it == skills_.end()) throw LookupError("unknown service '" + service_id + "'");
  return base == service_id ? it->second : it->second * (1.0 + config_.finetune_gain);
}

double Marketplace::difficulty(const std::string& task_id) const { return task(task_id).difficulty; }

double Marketplace::helpfulness(const std::string& task_id, const std::string& context_id) const {
  const auto& h = task(task_id).helpfulness;
  auto it = h.find(context_id);
  if (it == h.end()) throw LookupError("unknown context '" + task_id + "/" + context_id + "'");
  return it->second;
}

double Marketplace::correctness_probability(const SettingKey& key) const {
  return clamp01(skill(key.service_id) - difficulty(key.task_id) +
                 helpfulness(key.task_id, key.context_id));
}

InvocationRecord Marketplace::invoke(const std::string& service_id, const InvocationRequest& request) const {
  const auto& c = config_;
  const std::string base = base_id(service_id);
  const double s = skill(service_id);
  const bool known_task = task_info_.contains(request.task_id);
  const double delta = known_task ? difficulty(request.task_id)
                                  : 0.5 * (c.difficulty_range.first + c.difficulty_range.second);
  double h = 0.0;
  if (known_task) {
    const auto& hs = task(request.task_id).helpfulness;
    if (auto it = hs.find(request.context.context_id); it != hs.end()) h = it->second;
  }
  const double q = clamp01(s - delta + h);
  const double f = c.feature_fidelity;

  // Setting-level nuisances shared by a service and its fine-tuned twin.
  Rng setting_rng(derive_seed(c.seed, {"setting", base, request.task_id, request.context.context_id}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double temperature = std::exp(c.calibration_spread * normal(setting_rng));
  const double familiarity =
      clamp01(s - delta + h + kFamiliarityOffset + c.familiarity_noise * normal(setting_rng));
  const double unrelated_score = kScoreFloor + kScoreRange * unit(setting_rng);

  Rng rng(derive_seed(c.seed, {"record", base, request.task_id, request.context.context_id,
                               request.sample_id}));

  std::vector<std::string> reference;
  if (request.reference) {
    reference = split_words(*request.reference);
  } else {
    Rng ref_rng(derive_seed(c.seed, {"pseudo-reference", request.task_id, request.input_text}));
    const int n = std::uniform_int_distribution<int>(2, 4)(ref_rng);
    for (int i = 0; i < n; ++i) reference.push_back(random_word(ref_rng));
  }
  if (reference.empty()) reference.push_back(vocab_word(0));

  // Outcome: exact with probability q, otherwise partial or wrong. The
  // draws do not depend on q, so a stronger twin flips only the samples
  // with u in [q, q').
  const double u = unit(rng);
  const double v = unit(rng);
  const std::size_t len = reference.size();
  std::vector<std::string> generated = reference;
  if (u >= q) {
    const std::size_t keep = v < kPartialShare && len > 1
                                 ? 1 + std::uniform_int_distribution<std::size_t>(0, len - 2)(rng)
                                 : 0;
    for (std::size_t i = keep; i < len; ++i) generated[i] = random_word(rng);
  }
  const double correctness = f1_score(join(generated), join(reference));

  // Top-1 sharpness tracks correctness at strength f.
  const double noise = unit(rng);
  double uncertainty = f * (kBaseUncertainty + kUncertaintyRange * (1.0 - correctness)) +
                       (1.0 - f) * (kBaseUncertainty + kUncertaintyRange * noise);
  uncertainty = std::clamp(uncertainty * temperature, 0.0, 0.49);

  InvocationRecord r;
  r.service_id = service_id;
  r.task_id = request.task_id;
  r.context_id = request.context.context_id;
  r.sample_id = request.sample_id;
  r.input_text = request.input_text;
  r.generated_text = join(generated);
  r.reference = request.reference;

  const int k = c.top_k;
  for (const auto& token : generated) {
    TokenStep step;
    step.token = token;
    const double p = std::clamp(1.0 - uncertainty * 2.0 * beta_sym(rng, kBetaShape), 0.02, 0.999);
    step.top_probs.push_back({token, p});
    if (k > 1) {
      std::vector<double> w(static_cast<std::size_t>(k - 1));
      std::exponential_distribution<double> e(1.0);
      for (auto& x : w) x = e(rng);
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      const double mass = (1.0 - p) * (0.7 + 0.3 * unit(rng));
      std::sort(w.begin(), w.end(), std::greater<>());
      for (double x : w) {
        std::string alt;
        do {
          alt = random_word(rng);
        } while (std::any_of(step.top_probs.begin(), step.top_probs.end(),
                             [&](const Candidate& cand) { return cand.token == alt; }));
        step.top_probs.push_back({alt, std::min(p, mass * x / total)});
      }
    }
    r.output_steps.push_back(std::move(step));
  }

  // Input scores reflect how familiar the service is with the task and,
  // more loosely, with this particular input.
  const double sample_familiarity = clamp01((1.0 - kSampleCoupling) * familiarity +
                                            kSampleCoupling * correctness + kSampleNoise * normal(rng));
  const double g = f * (kScoreFloor + kScoreRange * sample_familiarity) + (1.0 - f) * unrelated_score;
  std::vector<double> scores;
  for (std::size_t i = 0, n = split_words(request.input_text).size(); i < n; ++i) {
    scores.push_back(std::clamp(1.0 - (1.0 - g) * 2.0 * beta_sym(rng, kBetaShape), 1e-3, 1.0));
  }
  if (scores.empty()) scores.push_back(std::clamp(g, 1e-3, 1.0));
  r.input_scores = std::move(scores);

  validate(r);
  return r;
}

std::vector<SettingKey> Marketplace::settings() const {
  std::vector<SettingKey> out;
  for (const auto& s : services_) {
    for (const auto& c : contexts_) out.push_back({s.service_id, c.task_id, c.context_id});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<InvocationRecord> Marketplace::records(const SettingKey& key) const {
  if (!skills_.contains(base_id(key.service_id)) || !task_info_.contains(key.task_id)) return {};
  const auto& info = task(key.task_id);
  if (!info.helpfulness.contains(key.context_id)) return {};
  InvocationRequest request;
  request.task_id = key.task_id;
  request.context = context(key.task_id, key.context_id);
  std::vector<InvocationRecord> out;
  out.reserve(info.dataset->samples.size());
  for (const auto& sample : info.dataset->samples) {
    request.sample_id = sample.sample_id;
    request.input_text = sample.input_text;
    request.reference = sample.reference;
    out.push_back(invoke(key.service_id, request));
  }
  return out;
}

MockService::MockService(std::shared_ptr<const Marketplace> market, ServiceDescriptor descriptor)
    : market_(std::move(market)), descriptor_(std::move(descriptor)) {
  if (!market_) throw ConfigError("mock service '" + descriptor_.service_id + "' needs a marketplace");
}

InvocationRecord MockService::invoke(const InvocationRequest& request) const {
  auto r = market_->invoke(descriptor_.service_id, request);
  if (!descriptor_.input_scoring) r.input_scores.reset();
  for (auto& step : r.output_steps) {
    if (static_cast<int>(step.top_probs.size()) > descriptor_.top_k) {
      step.top_probs.resize(static_cast<std::size_t>(descriptor_.top_k));
    }
  }
  return r;
}

SynthesizedMarketplace synth_marketplace(const MarketplaceConfig& config) {
  SynthesizedMarketplace out;
  auto market = std::make_shared<const Marketplace>(config);
  out.services = market->services();
  out.tasks = market->tasks();
  out.contexts = market->contexts();
  for (const auto& key : market->settings()) {
    for (auto& r : market->records(key)) out.store.add(std::move(r));
  }
  out.market = std::move(market);
  return out;
}

}  // namespace perfest
