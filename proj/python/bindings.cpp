#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "perfest/cli.hpp"
#include "perfest/error.hpp"
#include "perfest/feature_selection.hpp"
#include "perfest/features.hpp"
#include "perfest/metamodels.hpp"
#include "perfest/profile.hpp"
#include "perfest/record_io.hpp"

namespace py = pybind11;
using namespace perfest;

namespace {

// Records cross the boundary as plain dicts in the JSONL record layout.
InvocationRecord to_record(const py::dict& d) {
  const auto text = py::module_::import("json").attr("dumps")(d).cast<std::string>();
  return record_from_json(nlohmann::json::parse(text));
}

PplMode ppl_mode(const std::string& name) {
  if (name == "normalized") return PplMode::kNormalized;
  if (name == "exact-sum") return PplMode::kExactSum;
  throw Error("unknown ppl mode '" + name + "' (normalized|exact-sum)");
}

std::vector<FeatureKind> kinds_from(const std::vector<std::string>& names) {
  std::vector<FeatureKind> out;
  for (const auto& n : names) out.push_back(feature_kind_from_string(n));
  return out;
}

std::vector<std::string> kind_names(const std::vector<FeatureKind>& kinds) {
  std::vector<std::string> out;
  for (auto k : kinds) out.emplace_back(to_string(k));
  return out;
}

FeatureProfile make_profile(const std::vector<double>& vector, const std::vector<FeatureKind>& kinds) {
  if (kinds.empty() || vector.size() % kinds.size() != 0) {
    throw Error("profile length " + std::to_string(vector.size()) + " is not a multiple of the feature count");
  }
  FeatureProfile p;
  p.kinds = kinds;
  p.dims = static_cast<int>(vector.size() / kinds.size());
  p.vector = vector;
  return p;
}

class MetaModel {
 public:
  explicit MetaModel(TrainedMetaModel m) : model_(std::move(m)) {}

  static MetaModel fit(const std::string& kind, const std::vector<std::vector<double>>& profiles,
                       const std::vector<double>& targets, std::uint64_t seed, const Hyperparams& params,
                       const std::vector<std::string>& kinds, int jobs) {
    if (profiles.size() != targets.size()) throw Error("profiles and targets differ in length");
    auto spec = ModelSpec::defaults(model_kind_from_string(kind));
    for (const auto& [k, v] : params) spec.hyperparams[k] = v;
    const auto fk = kinds_from(kinds);
    std::vector<TrainingRow> rows;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      rows.push_back({make_profile(profiles[i], fk), targets[i]});
      rows.back().profile.setting = {"s", "t", std::to_string(i)};
    }
    py::gil_scoped_release release;
    return MetaModel(train(spec, rows, seed, jobs));
  }

  double predict_one(const std::vector<double>& vector) const {
    return predict(model_, make_profile(vector, model_.kinds));
  }

  std::vector<double> predict_many(const std::vector<std::vector<double>>& vectors) const {
    std::vector<double> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) out.push_back(predict_one(v));
    return out;
  }

  std::string kind() const { return to_string(model_.spec.kind); }
  std::string label() const { return model_.spec.label(); }
  int dims() const { return model_.dims; }
  std::vector<std::string> kinds() const { return kind_names(model_.kinds); }
  Hyperparams hyperparams() const { return model_.spec.hyperparams; }
  std::string to_json() const { return serialize_model(model_); }
  void save(const std::filesystem::path& p) const { save_model(model_, p); }

 private:
  TrainedMetaModel model_;
};

py::dict selection_dict(const FeatureSelection& sel) {
  py::dict out;
  out["best"] = kind_names(sel.best);
  py::list ranked;
  for (const auto& c : sel.ranked) ranked.append(py::make_tuple(kind_names(c.features), c.score));
  out["ranked"] = ranked;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label-free performance estimation for LLM services";
  py::register_exception<Error>(m, "PerfestError", PyExc_ValueError);

  m.def("nll", [](const py::dict& r) { return nll(to_record(r)); }, py::arg("record"));
  m.def(
      "ppl", [](const py::dict& r, const std::string& mode) { return ppl(to_record(r), ppl_mode(mode)); },
      py::arg("record"), py::arg("mode") = "normalized");
  m.def("gap", [](const py::dict& r) { return gap(to_record(r)); }, py::arg("record"));
  m.def("max_ent", [](const py::dict& r) { return max_ent(to_record(r)); }, py::arg("record"));
  m.def(
      "features",
      [](const py::dict& r, const std::string& mode) {
        const auto rec = to_record(r);
        std::map<std::string, double> out;
        for (auto k : kAllFeatureKinds) out[to_string(k)] = compute_feature(rec, k, ppl_mode(mode));
        return out;
      },
      py::arg("record"), py::arg("ppl_mode") = "normalized");

  m.def(
      "interpolate_profile",
      [](const std::vector<double>& values, int d) { return interpolate_profile(values, d); }, py::arg("values"),
      py::arg("d"));
  m.def(
      "pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "select_features",
      [](const std::map<std::string, std::vector<double>>& table, const std::vector<double>& performance) {
        FeatureTable t;
        for (const auto& [k, v] : table) t[feature_kind_from_string(k)] = v;
        return selection_dict(select_best_combination(t, performance));
      },
      py::arg("table"), py::arg("performance"));

  py::class_<MetaModel>(m, "MetaModel")
      .def_static("train", &MetaModel::fit, py::arg("kind"), py::arg("profiles"), py::arg("targets"),
                  py::arg("seed") = 0, py::arg("params") = Hyperparams{},
                  py::arg("kinds") = std::vector<std::string>{"NLL", "PPL"}, py::arg("jobs") = 1)
      .def_static(
          "load", [](const std::filesystem::path& p) { return MetaModel(load_model(p)); }, py::arg("path"))
      .def_static(
          "from_json", [](const std::string& text) { return MetaModel(deserialize_model(text)); }, py::arg("text"))
      .def("predict", &MetaModel::predict_one, py::arg("profile"))
      .def("predict_many", &MetaModel::predict_many, py::arg("profiles"))
      .def("save", &MetaModel::save, py::arg("path"))
      .def("to_json", &MetaModel::to_json)
      .def_property_readonly("kind", &MetaModel::kind)
      .def_property_readonly("label", &MetaModel::label)
      .def_property_readonly("dims", &MetaModel::dims)
      .def_property_readonly("kinds", &MetaModel::kinds)
      .def_property_readonly("hyperparams", &MetaModel::hyperparams);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int rc = 0;
        {
          py::gil_scoped_release release;
          rc = dispatch(args, out, err);
        }
        return py::make_tuple(rc, out.str(), err.str());
      },
      py::arg("args"), "Runs one perfest command line; returns (exit_code, stdout, stderr).");
}
