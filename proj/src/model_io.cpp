#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "perfest/error.hpp"
#include "perfest/metamodels.hpp"

namespace perfest {

namespace {

using Json = nlohmann::ordered_json;

Json trees_to_json(const std::vector<RegressionTree>& trees) {
  Json out = Json::array();
  for (const auto& tree : trees) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : tree.nodes()) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    Json t;
    t["feature"] = feature;
    t["threshold"] = threshold;
    t["left"] = left;
    t["right"] = right;
    t["value"] = value;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RegressionTree> trees_from_json(const Json& j) {
  std::vector<RegressionTree> trees;
  for (const auto& t : j) {
    const auto feature = t.at("feature").get<std::vector<int>>();
    const auto threshold = t.at("threshold").get<std::vector<double>>();
    const auto left = t.at("left").get<std::vector<int>>();
    const auto right = t.at("right").get<std::vector<int>>();
    const auto value = t.at("value").get<std::vector<double>>();
    const std::size_t n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n) {
      throw IncompatibleModelError("tree arrays differ in length");
    }
    std::vector<RegressionTree::Node> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
    trees.push_back(RegressionTree::from_nodes(std::move(nodes)));
  }
  return trees;
}

Json parameters_to_json(const ModelParameters& params) {
  Json body;
  if (const auto* p = std::get_if<KnnParams>(&params)) {
    body["rows"] = p->points.rows;
    body["cols"] = p->points.cols;
    body["points"] = p->points.data;
    body["targets"] = p->targets;
  } else if (const auto* p = std::get_if<MlpParams>(&params)) {
    body["inputs"] = p->inputs;
    body["hidden"] = p->hidden;
    body["w1"] = p->w1;
    body["b1"] = p->b1;
    body["w2"] = p->w2;
    body["b2"] = p->b2;
    body["training_loss"] = p->training_loss;
  } else if (const auto* p = std::get_if<ForestParams>(&params)) {
    body["trees"] = trees_to_json(p->trees);
  } else if (const auto* p = std::get_if<BoostParams>(&params)) {
    body["base_score"] = p->base_score;
    body["learning_rate"] = p->learning_rate;
    body["training_mse"] = p->training_mse;
    body["trees"] = trees_to_json(p->trees);
  }
  return body;
}

ModelParameters parameters_from_json(ModelKind kind, const Json& body, std::size_t dims) {
  switch (kind) {
    case ModelKind::kKnn: {
      KnnParams p;
      p.points.rows = body.at("rows").get<std::size_t>();
      p.points.cols = body.at("cols").get<std::size_t>();
      p.points.data = body.at("points").get<std::vector<double>>();
      p.targets = body.at("targets").get<std::vector<double>>();
      if (p.points.cols != dims || p.points.data.size() != p.points.rows * p.points.cols ||
          p.targets.size() != p.points.rows || p.points.rows == 0) {
        throw IncompatibleModelError("k-NN body has inconsistent shapes");
      }
      return p;
    }
    case ModelKind::kMlp: {
      MlpParams p;
      p.inputs = body.at("inputs").get<std::size_t>();
      p.hidden = body.at("hidden").get<std::size_t>();
      p.w1 = body.at("w1").get<std::vector<double>>();
      p.b1 = body.at("b1").get<std::vector<double>>();
      p.w2 = body.at("w2").get<std::vector<double>>();
      p.b2 = body.at("b2").get<double>();
      p.training_loss = body.at("training_loss").get<std::vector<double>>();
      if (p.inputs != dims || p.w1.size() != p.inputs * p.hidden || p.b1.size() != p.hidden ||
          p.w2.size() != p.hidden) {
        throw IncompatibleModelError("MLP body has inconsistent shapes");
      }
      return p;
    }
    case ModelKind::kRandomForest: {
      ForestParams p;
      p.trees = trees_from_json(body.at("trees"));
      if (p.trees.empty()) throw IncompatibleModelError("random forest without trees");
      return p;
    }
    case ModelKind::kGbt: {
      BoostParams p;
      p.base_score = body.at("base_score").get<double>();
      p.learning_rate = body.at("learning_rate").get<double>();
      p.training_mse = body.at("training_mse").get<std::vector<double>>();
      p.trees = trees_from_json(body.at("trees"));
      return p;
    }
  }
  throw IncompatibleModelError("unknown model kind");
}

}  // namespace

std::string serialize_model(const TrainedMetaModel& model) {
  Json j;
  j["format"] = kModelFormatName;
  j["version"] = kModelFormatVersion;
  j["kind"] = to_string(model.spec.kind);
  Json hp = Json::object();
  for (const auto& [name, value] : model.spec.hyperparams) hp[name] = value;
  j["hyperparams"] = std::move(hp);
  j["dims"] = model.dims;
  std::vector<std::string> kinds;
  for (auto k : model.kinds) kinds.emplace_back(to_string(k));
  j["kinds"] = kinds;
  j["standardization"] = {{"mean", model.stats.mean}, {"sd", model.stats.sd}};
  j["seed"] = model.seed;
  j["parameters"] = parameters_to_json(model.parameters);
  return j.dump(1) + "\n";
}

TrainedMetaModel deserialize_model(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    if (!j.is_object() || j.value("format", std::string()) != kModelFormatName) {
      throw IncompatibleModelError("not a meta-model file");
    }
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw IncompatibleModelError("model file version " + std::to_string(version) +
                                   " is not supported (expected " +
                                   std::to_string(kModelFormatVersion) + ")");
    }
    TrainedMetaModel m;
    m.spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& [name, value] : j.at("hyperparams").items()) {
      m.spec.hyperparams[name] = value.get<double>();
    }
    m.spec.validate();
    m.dims = j.at("dims").get<int>();
    for (const auto& k : j.at("kinds")) m.kinds.push_back(feature_kind_from_string(k.get<std::string>()));
    m.stats.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.stats.sd = j.at("standardization").at("sd").get<std::vector<double>>();
    const std::size_t width = m.kinds.size() * static_cast<std::size_t>(m.dims);
    if (m.stats.mean.size() != width || m.stats.sd.size() != width) {
      throw IncompatibleModelError("standardization statistics do not match dims x kinds");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.parameters = parameters_from_json(m.spec.kind, j.at("parameters"), width);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IncompatibleModelError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw IncompatibleModelError(std::string("malformed model header: ") + e.what());
  }
}

void save_model(const TrainedMetaModel& model, const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty model path");
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << serialize_model(model);
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

TrainedMetaModel load_model(const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty model path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace perfest
