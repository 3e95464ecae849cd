#include "perfest/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "perfest/cross_validation.hpp"
#include "perfest/error.hpp"
#include "perfest/parallel.hpp"
#include "perfest/seeding.hpp"

namespace perfest {

// ------------------------------------------------------------------- F1

std::vector<std::string> normalize_answer(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double f1_score(std::string_view prediction, std::string_view reference) {
  const auto pred = normalize_answer(prediction);
  const auto ref = normalize_answer(reference);
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : ref) ++counts[t];
  int overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

double task_performance(std::span<const InvocationRecord> records) {
  if (records.empty()) throw InsufficientDataError("task performance needs at least one record");
  const SettingKey key = records.front().setting();
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.setting() != key) {
      throw GroupingError("records mix settings " + key.str() + " and " + r.setting().str());
    }
    if (!r.reference) {
      throw LabelingError("sample " + r.sample_id + " of " + key.str() + " has no reference");
    }
    sum += f1_score(r.generated_text, *r.reference);
  }
  return sum / static_cast<double>(records.size());
}

ErrorSummary mae(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw InsufficientDataError("MAE of an empty set");
  const double n = static_cast<double>(pairs.size());
  double sum = 0.0;
  for (const auto& [est, truth] : pairs) sum += std::abs(est - truth);
  const double mean = sum / n;
  double var = 0.0;
  for (const auto& [est, truth] : pairs) {
    const double d = std::abs(est - truth) - mean;
    var += d * d;
  }
  return {mean, std::sqrt(var / n)};
}

// ----------------------------------------------------------------- plan

void ExperimentPlan::validate() const {
  if (contexts_per_task < 1) throw ConfigError("contexts_per_task must be >= 1");
  if (unlabeled_n < 1) throw ConfigError("unlabeled_n must be >= 1");
  if (d < 1) throw ConfigError("d must be >= 1");
  if (folds < 1) throw ConfigError("folds must be >= 1");
  if (feature_kinds.empty()) throw ConfigError("at least one feature kind is required");
  for (const auto& s : model_specs) s.validate();
  for (auto n : sample_sizes) {
    if (n < 1) throw ConfigError("Sample^n sizes must be >= 1");
  }
}

nlohmann::ordered_json to_json(const ExperimentPlan& plan) {
  nlohmann::ordered_json j;
  j["services"] = plan.services;
  j["tasks"] = plan.tasks;
  j["contexts_per_task"] = plan.contexts_per_task;
  j["unlabeled_n"] = plan.unlabeled_n;
  j["d"] = plan.d;
  std::vector<std::string> kinds;
  for (auto k : plan.feature_kinds) kinds.emplace_back(to_string(k));
  j["feature_kinds"] = kinds;
  auto specs = nlohmann::ordered_json::array();
  for (const auto& s : plan.model_specs) {
    nlohmann::ordered_json spec;
    spec["kind"] = to_string(s.kind);
    spec["hyperparams"] = s.hyperparams;
    specs.push_back(std::move(spec));
  }
  j["model_specs"] = std::move(specs);
  j["folds"] = plan.folds;
  j["seed"] = plan.seed;
  j["sample_sizes"] = plan.sample_sizes;
  j["group_by_task"] = plan.group_by_task;
  j["per_service_models"] = plan.per_service_models;
  j["ppl_mode"] = plan.ppl_mode == PplMode::kNormalized ? "normalized" : "exact-sum";
  return j;
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan p;
  try {
    p.services = j.value("services", p.services);
    p.tasks = j.value("tasks", p.tasks);
    p.contexts_per_task = j.value("contexts_per_task", p.contexts_per_task);
    p.unlabeled_n = j.value("unlabeled_n", p.unlabeled_n);
    p.d = j.value("d", p.d);
    if (auto it = j.find("feature_kinds"); it != j.end()) {
      p.feature_kinds.clear();
      for (const auto& k : *it) p.feature_kinds.push_back(feature_kind_from_string(k.get<std::string>()));
    }
    if (auto it = j.find("model_specs"); it != j.end()) {
      for (const auto& s : *it) {
        ModelSpec spec = ModelSpec::defaults(model_kind_from_string(s.at("kind").get<std::string>()));
        if (auto hp = s.find("hyperparams"); hp != s.end()) {
          for (const auto& [name, value] : hp->items()) spec.hyperparams[name] = value.get<double>();
        }
        p.model_specs.push_back(std::move(spec));
      }
    }
    p.folds = j.value("folds", p.folds);
    p.seed = j.value("seed", p.seed);
    p.sample_sizes = j.value("sample_sizes", p.sample_sizes);
    p.group_by_task = j.value("group_by_task", p.group_by_task);
    p.per_service_models = j.value("per_service_models", p.per_service_models);
    const std::string mode = j.value("ppl_mode", std::string("normalized"));
    if (mode == "normalized") {
      p.ppl_mode = PplMode::kNormalized;
    } else if (mode == "exact-sum") {
      p.ppl_mode = PplMode::kExactSum;
    } else {
      throw ConfigError("ppl_mode must be 'normalized' or 'exact-sum'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment plan: ") + e.what());
  }
  p.validate();
  return p;
}

// ------------------------------------------------------------ preparation

std::vector<SettingKey> plan_settings(const ExperimentPlan& plan, const RecordSource& source) {
  const auto available = source.settings();
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> contexts;
  std::set<std::string> all_services, all_tasks;
  for (const auto& k : available) {
    contexts[{k.service_id, k.task_id}].push_back(k.context_id);
    all_services.insert(k.service_id);
    all_tasks.insert(k.task_id);
  }
  const std::vector<std::string> services =
      plan.services.empty() ? std::vector<std::string>(all_services.begin(), all_services.end())
                            : plan.services;
  const std::vector<std::string> tasks =
      plan.tasks.empty() ? std::vector<std::string>(all_tasks.begin(), all_tasks.end()) : plan.tasks;
  if (services.empty() || tasks.empty()) throw CoverageError("record store holds no settings");

  std::vector<SettingKey> out;
  std::vector<std::string> missing;
  const auto k = static_cast<std::size_t>(plan.contexts_per_task);
  for (const auto& s : services) {
    for (const auto& t : tasks) {
      auto it = contexts.find({s, t});
      const std::size_t found = it == contexts.end() ? 0 : it->second.size();
      if (found < k) {
        missing.push_back(s + "/" + t + " (" + std::to_string(found) + " of " +
                          std::to_string(k) + " contexts)");
        continue;
      }
      auto ctx = it->second;
      std::sort(ctx.begin(), ctx.end());
      for (std::size_t i = 0; i < k; ++i) out.push_back({s, t, ctx[i]});
    }
  }
  if (!missing.empty()) {
    std::string msg = "record store lacks invocations for:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw CoverageError(msg);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<InvocationRecord> draw_unlabeled(const std::vector<InvocationRecord>& records, std::size_t n,
                                             std::uint64_t seed) {
  if (records.empty()) throw InsufficientDataError("cannot draw from an empty setting");
  const SettingKey key = records.front().setting();
  if (records.size() < n) {
    throw InsufficientDataError(key.str() + " has " + std::to_string(records.size()) +
                                " samples, fewer than the " + std::to_string(n) +
                                " unlabeled samples requested");
  }
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {"unlabeled", key.service_id, key.task_id, key.context_id}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<InvocationRecord> drawn;
  drawn.reserve(n);
  for (std::size_t i = 0; i < n; ++i) drawn.push_back(records[order[i]]);
  return drawn;
}

std::vector<ProfileEntry> extract_profiles(const ExperimentPlan& plan, const RecordSource& source) {
  plan.validate();
  const auto keys = plan_settings(plan, source);
  std::vector<ProfileEntry> out(keys.size());
  parallel_for(keys.size(), plan.jobs, [&](std::size_t i) {
    const auto records = source.records(keys[i]);
    const auto drawn = draw_unlabeled(records, plan.unlabeled_n, plan.seed);
    out[i].profile = build_profile(drawn, plan.feature_kinds, plan.d, plan.ppl_mode);
    const bool labeled = std::all_of(records.begin(), records.end(),
                                     [](const InvocationRecord& r) { return r.reference.has_value(); });
    if (labeled) out[i].target = task_performance(records);
  });
  return out;
}

PreparedSettings prepare_settings(const ExperimentPlan& plan, const RecordSource& source,
                                  std::size_t max_unlabeled, std::span<const FeatureKind> kinds) {
  plan.validate();
  const auto keys = plan_settings(plan, source);
  PreparedSettings out;
  out.max_unlabeled = max_unlabeled;
  out.settings.resize(keys.size());
  parallel_for(keys.size(), plan.jobs, [&](std::size_t i) {
    const SettingKey& key = keys[i];
    const auto records = source.records(key);
    SettingData data;
    data.key = key;
    data.truth = task_performance(records);
    data.pool_size = records.size();
    const auto drawn = draw_unlabeled(records, max_unlabeled, plan.seed);
    data.features = extract_task_features(drawn, kinds, plan.ppl_mode);
    for (const auto& r : drawn) {
      data.confidences.push_back(atc_confidence(r));
      data.sample_f1.push_back(f1_score(r.generated_text, *r.reference));
    }
    out.settings[i] = std::move(data);
  });
  return out;
}

// ------------------------------------------------------------- experiment

namespace {

std::vector<double> prefix(const std::vector<double>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

FeatureProfile setting_profile(const ExperimentPlan& plan, const SettingData& s) {
  FeatureTable table;
  for (auto kind : plan.feature_kinds) {
    auto it = s.features.find(kind);
    if (it == s.features.end()) {
      throw LookupError(std::string("prepared settings lack feature ") + to_string(kind));
    }
    table[kind] = prefix(it->second, plan.unlabeled_n);
  }
  return profile_from_table(s.key, table, plan.feature_kinds, plan.d);
}

std::vector<std::string> model_names(const std::vector<ModelSpec>& specs) {
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& s : specs) {
    std::string name = s.label();
    if (int c = ++seen[name]; c > 1) name += "#" + std::to_string(c);
    names.push_back(std::move(name));
  }
  return names;
}

}  // namespace

std::vector<TrainingRow> training_rows(const ExperimentPlan& plan, const PreparedSettings& prepared) {
  std::vector<TrainingRow> rows;
  rows.reserve(prepared.settings.size());
  for (const auto& s : prepared.settings) rows.push_back({setting_profile(plan, s), s.truth});
  return rows;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const PreparedSettings& prepared) {
  plan.validate();
  if (plan.unlabeled_n > prepared.max_unlabeled) {
    throw ConfigError("plan asks for " + std::to_string(plan.unlabeled_n) +
                      " unlabeled samples but only " + std::to_string(prepared.max_unlabeled) +
                      " were prepared");
  }
  for (auto n : plan.sample_sizes) {
    if (n > plan.unlabeled_n) {
      throw InsufficientDataError("Sample^" + std::to_string(n) + " exceeds the " +
                                  std::to_string(plan.unlabeled_n) + " drawn samples");
    }
  }
  const auto& settings = prepared.settings;
  const std::size_t n = settings.size();
  if (n == 0) throw CoverageError("no settings to evaluate");

  const auto rows = training_rows(plan, prepared);

  // Calibrations depend only on the setting, not on the fold.
  std::vector<AtcCalibration> calibration(n);
  for (std::size_t i = 0; i < n; ++i) {
    calibration[i] = atc_calibrate(prefix(settings[i].confidences, plan.unlabeled_n),
                                   prefix(settings[i].sample_f1, plan.unlabeled_n));
    calibration[i].source_task_id = settings[i].key.task_id;
    calibration[i].context_id = settings[i].key.context_id;
  }

  ExperimentReport report;
  const auto names = model_names(plan.model_specs);
  report.estimators = names;
  report.estimators.push_back("AvgTrain");
  report.estimators.push_back("ATC");
  for (auto s : plan.sample_sizes) report.estimators.push_back("Sample^" + std::to_string(s));
  {
    std::set<std::string> services;
    for (const auto& s : settings) services.insert(s.key.service_id);
    report.services.assign(services.begin(), services.end());
  }

  // Cross-validation units: tasks (grouped) or settings.
  std::vector<std::string> groups;
  std::size_t units = n;
  if (plan.group_by_task) {
    std::set<std::string> tasks;
    for (const auto& s : settings) {
      groups.push_back(s.key.task_id);
      tasks.insert(s.key.task_id);
    }
    units = tasks.size();
  }
  const int folds = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(plan.folds), units));
  std::vector<Fold> split;
  if (folds >= 2) {
    split = plan.group_by_task
                ? kfold_split(n, folds, derive_seed(plan.seed, "cv"), std::span<const std::string>(groups))
                : kfold_split(n, folds, derive_seed(plan.seed, "cv"));
  } else {
    Fold all;
    all.train.resize(n);
    std::iota(all.train.begin(), all.train.end(), 0);
    all.test = all.train;
    split.push_back(std::move(all));
  }
  report.effective_folds = folds >= 2 ? folds : 1;

  const std::size_t n_est = report.estimators.size();
  std::vector<std::vector<double>> estimate(n, std::vector<double>(n_est, 0.0));

  for (std::size_t f = 0; f < split.size(); ++f) {
    const auto& fold = split[f];

    // Meta-models, either one global model or one per service.
    for (std::size_t m = 0; m < plan.model_specs.size(); ++m) {
      const std::uint64_t model_seed = derive_seed(plan.seed, {"model", names[m], std::to_string(f)});
      auto fit_and_predict = [&](const std::vector<std::size_t>& train_idx,
                                 const std::vector<std::size_t>& test_idx) {
        if (test_idx.empty()) return;
        std::vector<TrainingRow> train_rows;
        for (auto i : train_idx) train_rows.push_back(rows[i]);
        if (train_rows.empty()) {
          throw InsufficientDataError("fold " + std::to_string(f) + " has no training settings");
        }
        const auto model = train(plan.model_specs[m], train_rows, model_seed, plan.jobs);
        for (auto i : test_idx) estimate[i][m] = predict(model, rows[i].profile);
      };
      if (plan.per_service_models) {
        for (const auto& svc : report.services) {
          std::vector<std::size_t> tr, te;
          for (auto i : fold.train) if (settings[i].key.service_id == svc) tr.push_back(i);
          for (auto i : fold.test) if (settings[i].key.service_id == svc) te.push_back(i);
          fit_and_predict(tr, te);
        }
      } else {
        fit_and_predict(fold.train, fold.test);
      }
    }

    // Label-based baselines use the training settings of the same service,
    // falling back to every training setting when the service is unseen.
    for (auto i : fold.test) {
      const auto& target = settings[i];
      std::vector<double> truths;
      std::vector<AtcCalibration> cals;
      for (auto j : fold.train) {
        if (settings[j].key.service_id != target.key.service_id) continue;
        truths.push_back(settings[j].truth);
        cals.push_back(calibration[j]);
      }
      if (truths.empty()) {
        for (auto j : fold.train) {
          truths.push_back(settings[j].truth);
          cals.push_back(calibration[j]);
        }
      }
      std::size_t col = plan.model_specs.size();
      estimate[i][col++] = avg_train_estimate(truths);
      estimate[i][col++] = atc_estimate(cals, prefix(target.confidences, plan.unlabeled_n));
      std::vector<LabeledSample> labeled;
      for (std::size_t s = 0; s < plan.unlabeled_n && s < target.sample_f1.size(); ++s) {
        labeled.push_back({target.key.context_id, std::to_string(s), target.sample_f1[s]});
      }
      for (auto size : plan.sample_sizes) {
        estimate[i][col++] = sample_n_estimate(labeled, size, {target.key.context_id});
      }
    }
  }

  std::map<std::string, std::vector<std::pair<double, double>>> pairs;
  std::map<std::string, std::map<std::string, std::vector<std::pair<double, double>>>> svc_pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < n_est; ++e) {
      ReportRow row;
      row.setting = settings[i].key;
      row.estimator = report.estimators[e];
      row.estimate = estimate[i][e];
      row.truth = settings[i].truth;
      row.absolute_error = std::abs(row.estimate - row.truth);
      pairs[row.estimator].push_back({row.estimate, row.truth});
      svc_pairs[row.estimator][row.setting.service_id].push_back({row.estimate, row.truth});
      report.rows.push_back(std::move(row));
    }
  }
  for (const auto& [name, p] : pairs) report.aggregates[name] = mae(p);
  for (const auto& [name, by_service] : svc_pairs) {
    for (const auto& [svc, p] : by_service) report.per_service[name][svc] = mae(p);
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const RecordSource& source) {
  return run_experiment(plan, prepare_settings(plan, source, plan.unlabeled_n, plan.feature_kinds));
}

std::vector<ReportRow> ExperimentReport::rows_for(const std::string& estimator) const {
  std::vector<ReportRow> out;
  for (const auto& r : rows) {
    if (r.estimator == estimator) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------- output

nlohmann::ordered_json to_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["estimators"] = report.estimators;
  j["services"] = report.services;
  j["effective_folds"] = report.effective_folds;
  auto agg = nlohmann::ordered_json::object();
  for (const auto& name : report.estimators) {
    const auto& s = report.aggregates.at(name);
    agg[name] = {{"mae", s.mae}, {"sd", s.sd}};
  }
  j["aggregates"] = std::move(agg);
  auto per = nlohmann::ordered_json::object();
  for (const auto& name : report.estimators) {
    auto by = nlohmann::ordered_json::object();
    for (const auto& [svc, s] : report.per_service.at(name)) by[svc] = {{"mae", s.mae}, {"sd", s.sd}};
    per[name] = std::move(by);
  }
  j["per_service"] = std::move(per);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["service_id"] = r.setting.service_id;
    row["task_id"] = r.setting.task_id;
    row["context_id"] = r.setting.context_id;
    row["estimator"] = r.estimator;
    row["estimate"] = r.estimate;
    row["true_performance"] = r.truth;
    row["absolute_error"] = r.absolute_error;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

void write_report(const ExperimentReport& report, const ExperimentPlan& plan,
                  const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["plan"] = to_json(plan);
  auto body = to_json(report);
  for (auto& [k, v] : body.items()) j[k] = std::move(v);
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string render_table(const ExperimentReport& report) {
  std::vector<std::string> header{"Estimator"};
  header.insert(header.end(), report.services.begin(), report.services.end());
  header.push_back("Total");

  std::vector<std::vector<std::string>> cells{header};
  auto cell = [](const ErrorSummary& s) {
    return fmt::format("{:.2f} ± {:.2f}", 100.0 * s.mae, 100.0 * s.sd);
  };
  for (const auto& name : report.estimators) {
    std::vector<std::string> line{name};
    const auto& by = report.per_service.at(name);
    for (const auto& svc : report.services) {
      auto it = by.find(svc);
      line.push_back(it == by.end() ? "-" : cell(it->second));
    }
    line.push_back(cell(report.aggregates.at(name)));
    cells.push_back(std::move(line));
  }

  // "±" is two bytes but one column wide.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], width(line[c]));
  }
  std::string out = "MAE ± SD (F1 points)\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto& s = cells[r][c];
      out += (c == 0 ? "" : "  ") + s + std::string(widths[c] - width(s), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : widths) total += w + 2;
      out += std::string(total - 2, '-') + '\n';
    }
  }
  return out;
}

}  // namespace perfest
