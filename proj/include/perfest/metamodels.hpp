#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "perfest/profile.hpp"
#include "perfest/regression_tree.hpp"

namespace perfest {

enum class ModelKind { kKnn, kMlp, kRandomForest, kGbt };

const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

using Hyperparams = std::map<std::string, double>;

// A meta-model family plus its hyperparameters. Required names:
//   KNN:            k
//   MLP:            hidden_width, learning_rate, epochs
//   RANDOM_FOREST:  max_depth, n_trees, sampling_ratio
//   GBT:            max_depth, n_rounds, learning_rate, sampling_ratio
struct ModelSpec {
  ModelKind kind = ModelKind::kRandomForest;
  Hyperparams hyperparams;

  static ModelSpec defaults(ModelKind kind);
  static std::vector<std::string> required_hyperparams(ModelKind kind);

  double param(const std::string& name) const;
  void validate() const;
  // Display name used in reports, e.g. "RandomForest" or "3-NN".
  std::string label() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct TrainingRow {
  FeatureProfile profile;
  double target = 0.0;  // task-level performance in [0, 1]
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;  // zero deviations are stored as 1

  std::vector<double> apply(std::span<const double> x) const;
};

struct KnnParams {
  DenseMatrix points;  // standardized training profiles
  std::vector<double> targets;
};

struct ForestParams {
  std::vector<RegressionTree> trees;
};

struct BoostParams {
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  std::vector<double> training_mse;  // after 0, 1, ..., n_rounds rounds
};

// One tanh hidden layer, linear output.
struct MlpParams {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::vector<double> w1;  // hidden x inputs, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;
  std::vector<double> training_loss;  // per epoch, before the update
};

using ModelParameters = std::variant<KnnParams, MlpParams, ForestParams, BoostParams>;

struct TrainedMetaModel {
  ModelSpec spec;
  std::uint64_t seed = 0;
  int dims = 0;
  std::vector<FeatureKind> kinds;
  Standardization stats;
  ModelParameters parameters;
};

// Deterministic in (spec, rows, seed); `jobs` only changes wall time.
TrainedMetaModel train(const ModelSpec& spec, std::span<const TrainingRow> rows, std::uint64_t seed,
                       int jobs = 1);

// Estimate clipped to [0, 1].
double predict(const TrainedMetaModel& model, const FeatureProfile& profile);
// Unclipped model output.
double predict_raw(const TrainedMetaModel& model, std::span<const double> profile_vector);

// Random forest only: the individual tree outputs for one profile.
std::vector<double> tree_predictions(const TrainedMetaModel& model,
                                     std::span<const double> profile_vector);

namespace mlp {
// Mean-halved squared loss 0.5/n * sum (f(x) - y)^2 on standardized inputs.
double loss(const MlpParams& p, const DenseMatrix& x, std::span<const double> y);
// Gradient of `loss`, laid out as w1, b1, w2, b2.
std::vector<double> gradient(const MlpParams& p, const DenseMatrix& x, std::span<const double> y);
std::vector<double> flatten(const MlpParams& p);
void unflatten(MlpParams& p, std::span<const double> flat);
double forward(const MlpParams& p, std::span<const double> x);
}  // namespace mlp

using Grid = std::vector<std::pair<std::string, std::vector<double>>>;

struct GridPoint {
  ModelSpec spec;
  double cv_mae = 0.0;
};

struct GridSearchResult {
  ModelSpec best;
  std::vector<GridPoint> evaluated;  // in enumeration order
};

enum class CvGrouping { kRows, kTask };

// Cartesian grid in axis order (last axis varies fastest). Axes missing
// from the grid take the family defaults. Ties keep the earlier point.
GridSearchResult grid_search(ModelKind kind, const Grid& grid, std::span<const TrainingRow> rows,
                             int folds, std::uint64_t seed, CvGrouping grouping = CvGrouping::kRows,
                             int jobs = 1);

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "perfest-metamodel";

std::string serialize_model(const TrainedMetaModel& model);
TrainedMetaModel deserialize_model(const std::string& text);
void save_model(const TrainedMetaModel& model, const std::filesystem::path& path);
TrainedMetaModel load_model(const std::filesystem::path& path);

}  // namespace perfest
