#include "perfest/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "perfest/applications.hpp"
#include "perfest/error.hpp"
#include "perfest/evaluation.hpp"
#include "perfest/feature_selection.hpp"
#include "perfest/metamodels.hpp"
#include "perfest/record_io.hpp"
#include "perfest/seeding.hpp"
#include "perfest/services.hpp"

namespace fs = std::filesystem;

namespace perfest {

namespace {

constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kTasksFile = "tasks.jsonl";
constexpr const char* kContextsFile = "contexts.jsonl";
constexpr const char* kServicesFile = "services.json";
constexpr const char* kMarketplaceFile = "marketplace.json";
constexpr const char* kCacheFile = "cache.jsonl";

struct Globals {
  std::uint64_t seed = 0;
  int jobs = 1;
  int verbose = 0;
};

// Plan-shaped flags shared by the pipeline subcommands.
struct PlanFlags {
  std::vector<std::string> services;
  std::vector<std::string> tasks;
  int contexts_per_task = 0;  // 0: as many as every (service, task) pair has
  std::size_t unlabeled_n = 400;
  int d = kDefaultProfileDims;
  std::vector<std::string> features{"NLL", "PPL"};
  std::string ppl_mode = "normalized";

  void add_to(CLI::App* app) {
    app->add_option("--service", services, "Restrict to these services (repeatable)");
    app->add_option("--task", tasks, "Restrict to these tasks (repeatable)");
    app->add_option("--contexts-per-task", contexts_per_task, "Contexts K per (service, task); 0 uses all shared ones")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--unlabeled-n", unlabeled_n, "Unlabeled samples drawn per setting")
        ->check(CLI::PositiveNumber);
    app->add_option("--d", d, "Profile dimension per feature")->check(CLI::PositiveNumber);
    app->add_option("--features", features, "Feature kinds, e.g. NLL PPL")->delimiter(',');
    app->add_option("--ppl-mode", ppl_mode, "normalized or exact-sum")
        ->check(CLI::IsMember({"normalized", "exact-sum"}));
  }
};

struct Store {
  fs::path dir;
  fs::path records() const { return dir / kRecordsFile; }
  fs::path tasks() const { return dir / kTasksFile; }
  fs::path contexts() const { return dir / kContextsFile; }
  fs::path services() const { return dir / kServicesFile; }
  fs::path marketplace() const { return dir / kMarketplaceFile; }
};

std::vector<FeatureKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<FeatureKind> out;
  for (const auto& n : names) out.push_back(feature_kind_from_string(n));
  if (out.empty()) throw UsageError("--features needs at least one kind");
  return out;
}

// Largest K such that every selected (service, task) pair has K contexts.
int shared_context_count(const RecordSource& source, const PlanFlags& flags) {
  std::map<std::pair<std::string, std::string>, int> count;
  for (const auto& k : source.settings()) {
    const bool svc = flags.services.empty() ||
                     std::find(flags.services.begin(), flags.services.end(), k.service_id) != flags.services.end();
    const bool task = flags.tasks.empty() ||
                      std::find(flags.tasks.begin(), flags.tasks.end(), k.task_id) != flags.tasks.end();
    if (svc && task) ++count[{k.service_id, k.task_id}];
  }
  if (count.empty()) throw CoverageError("the record store holds no matching settings");
  int k = std::numeric_limits<int>::max();
  for (const auto& [_, c] : count) k = std::min(k, c);
  return k;
}

ExperimentPlan make_plan(const PlanFlags& flags, const Globals& g, const RecordSource& source) {
  ExperimentPlan plan;
  plan.services = flags.services;
  plan.tasks = flags.tasks;
  plan.contexts_per_task = flags.contexts_per_task > 0 ? flags.contexts_per_task
                                                       : shared_context_count(source, flags);
  plan.unlabeled_n = flags.unlabeled_n;
  plan.d = flags.d;
  plan.feature_kinds = parse_kinds(flags.features);
  plan.ppl_mode = flags.ppl_mode == "normalized" ? PplMode::kNormalized : PplMode::kExactSum;
  plan.seed = derive_seed(g.seed, "plan");
  plan.jobs = g.jobs;
  return plan;
}

RecordStore load_store(const Store& store) {
  if (!fs::exists(store.records())) {
    throw IoError("no record store at '" + store.records().string() + "'; run synth or invoke first");
  }
  return RecordStore::load(store.records());
}

// "name=value" pairs; grid axes take comma-separated values.
Hyperparams parse_params(const std::vector<std::string>& items) {
  Hyperparams out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("expected name=value, got '" + item + "'");
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("hyperparameter '" + item + "' is not numeric");
    }
  }
  return out;
}

Grid parse_grid(const std::vector<std::string>& items) {
  Grid grid;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("expected name=v1,v2,..., got '" + item + "'");
    std::vector<double> values;
    std::stringstream in(item.substr(eq + 1));
    for (std::string v; std::getline(in, v, ',');) {
      try {
        values.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw UsageError("grid value '" + v + "' is not numeric");
      }
    }
    grid.emplace_back(item.substr(0, eq), std::move(values));
  }
  return grid;
}

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }

void write_json(const nlohmann::ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

// Plain fixed-width table.
std::string render_rows(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) w[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) s += "  ";
      s += fmt::format("{:<{}}", r[c], w[c]);
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + '\n';
  };
  std::string out = line(header);
  std::size_t total = 0;
  for (auto x : w) total += x + 2;
  out += std::string(total - 2, '-') + '\n';
  for (const auto& r : rows) out += line(r);
  return out;
}

// ------------------------------------------------------------- commands

struct SynthFlags {
  fs::path out;
  MarketplaceConfig market;
};

void run_synth(const SynthFlags& f, const Globals& g, std::ostream& out) {
  MarketplaceConfig mc = f.market;
  mc.seed = derive_seed(g.seed, "marketplace");
  const auto synth = synth_marketplace(mc);
  fs::create_directories(f.out);
  Store store{f.out};
  write_json(to_json(mc), store.marketplace());
  ServiceConfig sc;
  sc.services = synth.services;
  sc.marketplace = fs::path(kMarketplaceFile);
  write_service_config(sc, store.services());
  write_tasks(synth.tasks, store.tasks());
  write_contexts(synth.contexts, store.contexts());
  std::vector<InvocationRecord> records;
  records.reserve(synth.store.size());
  for (const auto& key : synth.store.settings()) {
    for (auto& r : synth.store.records(key)) records.push_back(std::move(r));
  }
  write_records(records, store.records());
  fmt::print(out, "wrote {} records for {} services x {} tasks x {} contexts to {}\n", records.size(),
             mc.n_services, mc.n_tasks, mc.contexts_per_task, f.out.string());
}

struct InvokeFlags {
  fs::path store;
  fs::path services;
  std::vector<std::string> service_ids;
  std::vector<std::string> task_ids;
  int contexts = 0;
  int limit = 0;
  fs::path cache;
};

void run_invoke(const InvokeFlags& f, const Globals& g, std::ostream& out) {
  Store store{f.store};
  const auto config = load_service_config(f.services.empty() ? store.services() : f.services);
  std::shared_ptr<const Marketplace> market;
  if (config.marketplace) {
    std::ifstream in(*config.marketplace);
    if (!in) throw IoError("cannot open marketplace config '" + config.marketplace->string() + "'");
    market = std::make_shared<const Marketplace>(marketplace_config_from_json(nlohmann::json::parse(in)));
  }
  const auto tasks = read_tasks(store.tasks());
  const auto contexts = read_contexts(store.contexts());

  std::set<std::tuple<std::string, std::string, std::string, std::string>> present;
  if (fs::exists(store.records())) {
    for (const auto& r : read_records(store.records())) {
      present.insert({r.service_id, r.task_id, r.context_id, r.sample_id});
    }
  }
  InvocationCache cache(f.cache.empty() ? store.dir / kCacheFile : f.cache);
  const int concurrency = std::max(1, std::min(config.concurrency, g.jobs));

  std::size_t added = 0;
  for (const auto& desc : config.services) {
    if (!f.service_ids.empty() &&
        std::find(f.service_ids.begin(), f.service_ids.end(), desc.service_id) == f.service_ids.end()) {
      continue;
    }
    const auto service = make_service(desc, market);
    for (const auto& task : tasks) {
      if (task.split != Split::kTest) continue;
      if (!f.task_ids.empty() && std::find(f.task_ids.begin(), f.task_ids.end(), task.task_id) == f.task_ids.end()) {
        continue;
      }
      int used = 0;
      for (const auto& ctx : contexts) {
        if (ctx.task_id != task.task_id) continue;
        if (f.contexts > 0 && used >= f.contexts) break;
        ++used;
        std::vector<InvocationRequest> requests;
        for (std::size_t i = 0; i < task.samples.size(); ++i) {
          if (f.limit > 0 && static_cast<int>(i) >= f.limit) break;
          const auto& sample = task.samples[i];
          if (present.contains({desc.service_id, task.task_id, ctx.context_id, sample.sample_id})) continue;
          requests.push_back({task.task_id, sample.sample_id, sample.input_text, ctx, sample.reference});
        }
        if (requests.empty()) continue;
        const auto records = invoke_all(*service, requests, concurrency, &cache);
        append_records(records, store.records());
        added += records.size();
      }
    }
  }
  fmt::print(out, "appended {} records to {}\n", added, store.records().string());
}

struct ExtractFlags {
  fs::path store;
  fs::path out;
  PlanFlags plan;
};

void run_extract(const ExtractFlags& f, const Globals& g, std::ostream& out) {
  const auto records = load_store({f.store});
  const auto plan = make_plan(f.plan, g, records);
  const auto entries = extract_profiles(plan, records);
  write_profiles(entries, f.out);
  fmt::print(out, "wrote {} profiles to {}\n", entries.size(), f.out.string());
}

struct SelectFeaturesFlags {
  fs::path store;
  fs::path report;
  PlanFlags plan;
};

void run_select_features(const SelectFeaturesFlags& f, const Globals& g, std::ostream& out) {
  const auto records = load_store({f.store});
  auto plan = make_plan(f.plan, g, records);
  const std::vector<FeatureKind> all(kAllFeatureKinds.begin(), kAllFeatureKinds.end());
  const auto prepared = prepare_settings(plan, records, plan.unlabeled_n, all);

  // One point per setting: mean feature value against measured F1.
  FeatureTable table;
  std::vector<double> perf;
  for (const auto& s : prepared.settings) {
    for (auto k : all) {
      const auto& v = s.features.at(k);
      double sum = 0.0;
      for (double x : v) sum += x;
      table[k].push_back(sum / static_cast<double>(v.size()));
    }
    perf.push_back(s.truth);
  }
  const auto selection = select_best_combination(table, perf);

  const auto& labels = selection.matrix.labels();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<std::string> r{labels[i]};
    for (std::size_t j = 0; j < labels.size(); ++j) r.push_back(fmt::format("{:.3f}", selection.matrix.values()[i][j]));
    rows.push_back(std::move(r));
  }
  std::vector<std::string> header{"|corr|"};
  header.insert(header.end(), labels.begin(), labels.end());
  out << render_rows(header, rows) << '\n';

  auto names = [](const std::vector<FeatureKind>& ks) {
    std::string s = "{";
    for (std::size_t i = 0; i < ks.size(); ++i) s += (i ? ", " : "") + std::string(to_string(ks[i]));
    return s + "}";
  };
  std::vector<std::vector<std::string>> ranked;
  for (std::size_t i = 0; i < selection.ranked.size(); ++i) {
    ranked.push_back({std::to_string(i + 1), names(selection.ranked[i].features),
                      fmt::format("{:.4f}", selection.ranked[i].score)});
  }
  out << render_rows({"rank", "combination", "score"}, ranked);
  fmt::print(out, "\nbest combination: {}\n", names(selection.best));

  if (!f.report.empty()) {
    nlohmann::ordered_json j;
    j["labels"] = labels;
    j["matrix"] = selection.matrix.values();
    auto r = nlohmann::ordered_json::array();
    for (const auto& c : selection.ranked) {
      std::vector<std::string> ks;
      for (auto k : c.features) ks.emplace_back(to_string(k));
      r.push_back({{"features", ks}, {"score", c.score}});
    }
    j["ranked"] = std::move(r);
    std::vector<std::string> best;
    for (auto k : selection.best) best.emplace_back(to_string(k));
    j["best"] = best;
    write_json(j, f.report);
  }
}

struct TrainFlags {
  fs::path store;
  fs::path out;
  std::string kind = "RANDOM_FOREST";
  std::vector<std::string> params;
  std::vector<std::string> grid;
  int folds = 5;
  PlanFlags plan;
};

void run_train(const TrainFlags& f, const Globals& g, std::ostream& out) {
  const auto records = load_store({f.store});
  const auto plan = make_plan(f.plan, g, records);
  const auto prepared = prepare_settings(plan, records, plan.unlabeled_n, plan.feature_kinds);
  const auto rows = training_rows(plan, prepared);

  ModelSpec spec = ModelSpec::defaults(model_kind_from_string(f.kind));
  for (const auto& [k, v] : parse_params(f.params)) spec.hyperparams[k] = v;
  if (!f.grid.empty()) {
    Grid grid = parse_grid(f.grid);
    // Fixed --param values act as single-point axes.
    for (const auto& [k, v] : parse_params(f.params)) {
      if (std::none_of(grid.begin(), grid.end(), [&](const auto& a) { return a.first == k; })) {
        grid.emplace_back(k, std::vector<double>{v});
      }
    }
    const auto result = grid_search(spec.kind, grid, rows, f.folds, derive_seed(g.seed, "grid"),
                                    CvGrouping::kTask, g.jobs);
    std::vector<std::vector<std::string>> table_rows;
    for (const auto& p : result.evaluated) {
      std::string hp;
      for (const auto& [k, v] : p.spec.hyperparams) hp += (hp.empty() ? "" : " ") + fmt::format("{}={}", k, v);
      table_rows.push_back({hp, pct(p.cv_mae)});
    }
    out << render_rows({"hyperparameters", "CV MAE x100"}, table_rows) << '\n';
    spec = result.best;
  }
  spec.validate();
  const auto model = train(spec, rows, derive_seed(g.seed, "train"), g.jobs);
  save_model(model, f.out);
  std::string hp;
  for (const auto& [k, v] : spec.hyperparams) hp += fmt::format(" {}={}", k, v);
  fmt::print(out, "trained {} ({}) on {} settings -> {}\n", spec.label(), hp.empty() ? "" : hp.substr(1), rows.size(),
             f.out.string());
}

struct EstimateFlags {
  fs::path store;
  fs::path model;
  fs::path out;
  PlanFlags plan;
};

void check_profile_shape(const TrainedMetaModel& model, const ExperimentPlan& plan) {
  if (model.dims != plan.d || model.kinds != plan.feature_kinds) {
    throw ShapeError("model expects d=" + std::to_string(model.dims) +
                     " with its own feature kinds; pass matching --d/--features");
  }
}

ExperimentPlan plan_for_model(const PlanFlags& flags, const Globals& g, const RecordSource& source,
                              const TrainedMetaModel& model, bool flags_given) {
  PlanFlags adjusted = flags;
  if (!flags_given) {
    adjusted.d = model.dims;
    adjusted.features.clear();
    for (auto k : model.kinds) adjusted.features.emplace_back(to_string(k));
  }
  auto plan = make_plan(adjusted, g, source);
  check_profile_shape(model, plan);
  return plan;
}

void run_estimate(const EstimateFlags& f, const Globals& g, std::ostream& out, bool shape_flags) {
  const auto records = load_store({f.store});
  const auto model = load_model(f.model);
  const auto plan = plan_for_model(f.plan, g, records, model, shape_flags);
  const auto entries = extract_profiles(plan, records);

  std::vector<std::vector<std::string>> rows;
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    const double est = predict(model, e.profile);
    const auto& k = e.profile.setting;
    rows.push_back({k.service_id, k.task_id, k.context_id, pct(est)});
    j.push_back({{"service_id", k.service_id}, {"task_id", k.task_id}, {"context_id", k.context_id},
                 {"estimate", est}});
  }
  out << render_rows({"service", "task", "context", "estimate x100"}, rows);
  if (!f.out.empty()) write_json(j, f.out);
}

struct EvaluateFlags {
  fs::path store;
  fs::path model;
  fs::path report;
  std::vector<std::string> kinds{"RANDOM_FOREST"};
  int folds = 5;
  std::vector<std::size_t> sample_sizes{8, 16, 32};
  bool per_service_models = false;
  bool ungrouped = false;
  PlanFlags plan;
};

void run_evaluate(const EvaluateFlags& f, const Globals& g, std::ostream& out, bool shape_flags) {
  const auto records = load_store({f.store});
  ExperimentPlan plan;
  if (!f.model.empty()) {
    const auto model = load_model(f.model);
    plan = plan_for_model(f.plan, g, records, model, shape_flags);
    plan.model_specs = {model.spec};
  } else {
    plan = make_plan(f.plan, g, records);
    for (const auto& k : f.kinds) plan.model_specs.push_back(ModelSpec::defaults(model_kind_from_string(k)));
  }
  plan.folds = f.folds;
  plan.sample_sizes = f.sample_sizes;
  plan.per_service_models = f.per_service_models;
  plan.group_by_task = !f.ungrouped;
  const auto report = run_experiment(plan, records);
  const fs::path path = f.report.empty() ? fs::path(f.store) / "report.json" : f.report;
  write_report(report, plan, path);
  out << render_table(report);
  fmt::print(out, "\n{} settings, {}-fold cross-validation; report written to {}\n",
             report.rows.size() / std::max<std::size_t>(1, report.estimators.size()), report.effective_folds,
             path.string());
}

struct ScenarioFlags {
  fs::path store;
  fs::path model;
  std::string task;
  PlanFlags plan;
};

struct ScoredSettings {
  std::vector<SettingCandidate> candidates;
  std::map<SettingKey, double> truth;  // only when labeled
};

ScoredSettings score_task(const ScenarioFlags& f, const Globals& g, const RecordSource& records, bool shape_flags) {
  const auto model = load_model(f.model);
  PlanFlags pf = f.plan;
  pf.tasks = {f.task};
  const auto plan = plan_for_model(pf, g, records, model, shape_flags);
  const auto entries = extract_profiles(plan, records);
  ScoredSettings out;
  std::vector<FeatureProfile> profiles;
  for (const auto& e : entries) {
    profiles.push_back(e.profile);
    if (e.target) out.truth[e.profile.setting] = *e.target;
  }
  out.candidates = score_settings(model, profiles);
  return out;
}

void run_select(const ScenarioFlags& f, const Globals& g, std::ostream& out, bool shape_flags) {
  const auto records = load_store({f.store});
  const auto scored = score_task(f, g, records, shape_flags);
  const auto best = select_setting(scored.candidates);

  auto ranked = scored.candidates;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.estimate != b.estimate) return a.estimate > b.estimate;
    return std::tie(a.service_id, a.context_id) < std::tie(b.service_id, b.context_id);
  });
  const bool labeled = scored.truth.size() == ranked.size();
  std::vector<std::vector<std::string>> rows;
  double mean_truth = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& c = ranked[i];
    std::vector<std::string> r{std::to_string(i + 1), c.service_id, c.context_id, pct(c.estimate)};
    if (labeled) {
      const double t = scored.truth.at({c.service_id, f.task, c.context_id});
      mean_truth += t;
      r.push_back(pct(t));
    }
    rows.push_back(std::move(r));
  }
  std::vector<std::string> header{"rank", "service", "context", "estimate x100"};
  if (labeled) header.push_back("realized x100");
  out << render_rows(header, rows);
  fmt::print(out, "\nselected {} with context {} (estimate {})\n", best.service_id, best.context_id, pct(best.estimate));
  if (labeled) {
    fmt::print(out, "realized {} vs random-choice expectation {}\n",
               pct(scored.truth.at({best.service_id, f.task, best.context_id})),
               pct(mean_truth / static_cast<double>(ranked.size())));
  }
}

void run_recommend(const ScenarioFlags& f, const Globals& g, std::ostream& out, bool shape_flags) {
  Store store{f.store};
  const auto records = load_store(store);
  const auto scored = score_task(f, g, records, shape_flags);
  const auto estimates = service_estimates(scored.candidates);
  const auto order = rank_finetune_targets(estimates);

  // Synthetic stores can replay each service's fine-tuned twin.
  std::shared_ptr<const Marketplace> market;
  if (fs::exists(store.marketplace())) {
    std::ifstream in(store.marketplace());
    market = std::make_shared<const Marketplace>(marketplace_config_from_json(nlohmann::json::parse(in)));
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& svc = order[i];
    std::vector<std::string> r{std::to_string(i + 1), svc, pct(estimates.at(svc))};
    if (market) {
      double base = 0.0, tuned = 0.0;
      int n = 0;
      for (const auto& c : scored.candidates) {
        if (c.service_id != svc) continue;
        base += task_performance(records.records({svc, f.task, c.context_id}));
        tuned += task_performance(market->records({Marketplace::finetuned_id(svc), f.task, c.context_id}));
        ++n;
      }
      r.push_back(pct(base / n));
      r.push_back(pct((tuned - base) / n));
    }
    rows.push_back(std::move(r));
  }
  std::vector<std::string> header{"rank", "service", "estimate x100"};
  if (market) {
    header.push_back("realized x100");
    header.push_back("fine-tune diff x100");
  }
  out << render_rows(header, rows);
  fmt::print(out, "\nrecommended fine-tune target for {}: {}\n", f.task, order.front());
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Label-free performance estimation for LLM services", "perfest"};
  app.set_version_flag("--version", "perfest 0.1.0");
  app.set_config("--config", "", "TOML config file; command-line flags override its values");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Global seed; every component derives its own from it");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", g.verbose, "More output");

  SynthFlags synth;
  synth.market.contexts_per_task = 4;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic marketplace record store");
  c_synth->add_option("--out", synth.out, "Store directory")->required();
  c_synth->add_option("--services", synth.market.n_services, "Number of services")->check(CLI::PositiveNumber);
  c_synth->add_option("--tasks", synth.market.n_tasks, "Number of tasks")->check(CLI::PositiveNumber);
  c_synth->add_option("--contexts", synth.market.contexts_per_task, "Contexts per task")->check(CLI::PositiveNumber);
  c_synth->add_option("--samples", synth.market.samples_per_task, "Samples per task")->check(CLI::PositiveNumber);
  c_synth->add_option("--fidelity", synth.market.feature_fidelity, "How strongly probabilities track correctness")
      ->check(CLI::Range(0.0, 1.0));
  c_synth->add_option("--top-k", synth.market.top_k, "Candidates reported per token")->check(CLI::PositiveNumber);
  c_synth->add_option("--finetune-gain", synth.market.finetune_gain, "Relative skill gain of fine-tuned twins")
      ->check(CLI::NonNegativeNumber);

  InvokeFlags inv;
  auto* c_invoke = app.add_subcommand("invoke", "Invoke configured services and append records");
  c_invoke->add_option("--store", inv.store, "Store directory")->required();
  c_invoke->add_option("--services", inv.services, "Service config (default: <store>/services.json)");
  c_invoke->add_option("--service", inv.service_ids, "Only these services (repeatable)");
  c_invoke->add_option("--task", inv.task_ids, "Only these tasks (repeatable)");
  c_invoke->add_option("--contexts", inv.contexts, "Contexts per task; 0 for all")->check(CLI::NonNegativeNumber);
  c_invoke->add_option("--limit", inv.limit, "Samples per setting; 0 for all")->check(CLI::NonNegativeNumber);
  c_invoke->add_option("--cache", inv.cache, "Invocation cache (default: <store>/cache.jsonl)");

  ExtractFlags ext;
  auto* c_extract = app.add_subcommand("extract", "Write feature profiles for every setting");
  c_extract->add_option("--store", ext.store, "Store directory")->required();
  c_extract->add_option("--out", ext.out, "Profile file (JSON Lines)")->required();
  ext.plan.add_to(c_extract);

  SelectFeaturesFlags sf;
  sf.plan.features = {"NLL", "PPL", "GAP", "MAXENT"};
  auto* c_sf = app.add_subcommand("select-features", "Correlation analysis and best feature combination");
  c_sf->add_option("--store", sf.store, "Store directory")->required();
  c_sf->add_option("--report", sf.report, "Optional JSON report");
  sf.plan.add_to(c_sf);

  TrainFlags tr;
  auto* c_train = app.add_subcommand("train", "Train a meta-model on every labeled setting");
  c_train->add_option("--store", tr.store, "Store directory")->required();
  c_train->add_option("--out", tr.out, "Model file")->required();
  c_train->add_option("--kind", tr.kind, "KNN, MLP, RANDOM_FOREST or GBT");
  c_train->add_option("--param", tr.params, "Hyperparameter name=value (repeatable)");
  c_train->add_option("--grid", tr.grid, "Grid axis name=v1,v2,... (repeatable)");
  c_train->add_option("--folds", tr.folds, "Folds for grid search")->check(CLI::Range(2, 1000));
  tr.plan.add_to(c_train);

  EstimateFlags es;
  auto* c_est = app.add_subcommand("estimate", "Estimate performance without labels");
  c_est->add_option("--store", es.store, "Store directory")->required();
  c_est->add_option("--model", es.model, "Model file")->required();
  c_est->add_option("--out", es.out, "Optional JSON output");
  es.plan.add_to(c_est);

  EvaluateFlags ev;
  auto* c_eval = app.add_subcommand("evaluate", "Cross-validated comparison against baselines");
  c_eval->add_option("--store", ev.store, "Store directory")->required();
  c_eval->add_option("--model", ev.model, "Take the meta-model spec from this model file");
  c_eval->add_option("--kinds", ev.kinds, "Meta-model kinds when no --model is given")->delimiter(',');
  c_eval->add_option("--report", ev.report, "Report file (default: <store>/report.json)");
  c_eval->add_option("--folds", ev.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  c_eval->add_option("--sample-sizes", ev.sample_sizes, "Sample^n baselines")->delimiter(',');
  c_eval->add_flag("--per-service-models", ev.per_service_models, "One meta-model per service");
  c_eval->add_flag("--ungrouped", ev.ungrouped, "Split folds by setting instead of by task");
  ev.plan.add_to(c_eval);

  ScenarioFlags sel;
  auto* c_sel = app.add_subcommand("select", "Pick the best (service, context) for a task");
  c_sel->add_option("--store", sel.store, "Store directory")->required();
  c_sel->add_option("--model", sel.model, "Model file")->required();
  c_sel->add_option("--for-task", sel.task, "Target task")->required();
  sel.plan.add_to(c_sel);

  ScenarioFlags rec;
  auto* c_rec = app.add_subcommand("recommend-finetune", "Rank services as fine-tuning targets for a task");
  c_rec->add_option("--store", rec.store, "Store directory")->required();
  c_rec->add_option("--model", rec.model, "Model file")->required();
  c_rec->add_option("--for-task", rec.task, "Target task")->required();
  rec.plan.add_to(c_rec);

  std::vector<const char*> argv{"perfest"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "perfest 0.1.0\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  auto shape_given = [](CLI::App* c) { return c->count("--d") > 0 || c->count("--features") > 0; };
  try {
    if (*c_synth) run_synth(synth, g, out);
    else if (*c_invoke) run_invoke(inv, g, out);
    else if (*c_extract) run_extract(ext, g, out);
    else if (*c_sf) run_select_features(sf, g, out);
    else if (*c_train) run_train(tr, g, out);
    else if (*c_est) run_estimate(es, g, out, shape_given(c_est));
    else if (*c_eval) run_evaluate(ev, g, out, shape_given(c_eval));
    else if (*c_sel) run_select(sel, g, out, shape_given(c_sel));
    else if (*c_rec) run_recommend(rec, g, out, shape_given(c_rec));
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace perfest
