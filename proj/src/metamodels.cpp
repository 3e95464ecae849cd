#include "perfest/metamodels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "perfest/cross_validation.hpp"
#include "perfest/error.hpp"
#include "perfest/parallel.hpp"
#include "perfest/seeding.hpp"

namespace perfest {

namespace {

constexpr std::size_t kMinLeaf = 2;
constexpr double kMlpMinImprovement = 1e-8;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t as_count(double v) { return static_cast<std::size_t>(std::llround(v)); }

bool is_integral(double v) { return std::isfinite(v) && v == std::floor(v); }

std::size_t subsample_size(double ratio, std::size_t n) {
  return std::max<std::size_t>(1, as_count(ratio * static_cast<double>(n)));
}

DenseMatrix design_matrix(std::span<const TrainingRow> rows) {
  const std::size_t cols = rows.front().profile.vector.size();
  DenseMatrix x(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].profile.vector.begin(), rows[i].profile.vector.end(), x.row(i).begin());
  }
  return x;
}

Standardization fit_standardization(const DenseMatrix& x) {
  Standardization s;
  s.mean.assign(x.cols, 0.0);
  s.sd.assign(x.cols, 0.0);
  const double n = static_cast<double>(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) s.mean[j] += x(i, j);
  }
  for (auto& m : s.mean) m /= n;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x(i, j) - s.mean[j];
      s.sd[j] += d * d;
    }
  }
  for (auto& v : s.sd) {
    v = std::sqrt(v / n);
    if (!(v > 0.0)) v = 1.0;
  }
  return s;
}

DenseMatrix standardize(const DenseMatrix& x, const Standardization& s) {
  DenseMatrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      out.data[i * x.cols + j] = (x(i, j) - s.mean[j]) / s.sd[j];
    }
  }
  return out;
}

void check_rows(std::span<const TrainingRow> rows) {
  if (rows.empty()) throw InsufficientDataError("meta-model training needs at least one row");
  const auto& first = rows.front().profile;
  if (first.vector.empty()) throw ShapeError("training profiles are empty");
  for (const auto& r : rows) {
    if (r.profile.vector.size() != first.vector.size() || r.profile.dims != first.dims ||
        r.profile.kinds != first.kinds) {
      throw ShapeError("training profile " + r.profile.setting.str() +
                       " differs in dimension or feature kinds from " + first.setting.str());
    }
    if (!(r.target >= 0.0 && r.target <= 1.0)) {
      throw ValidationError("target", 0, "performance of " + r.profile.setting.str() +
                                             " outside [0, 1]");
    }
  }
}

// ---------------------------------------------------------------- k-NN

KnnParams train_knn(const DenseMatrix& xs, std::span<const double> y) {
  return KnnParams{xs, std::vector<double>(y.begin(), y.end())};
}

double predict_knn(const KnnParams& p, std::size_t k, std::span<const double> z) {
  const std::size_t n = p.points.rows;
  k = std::min(k, n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = p.points.row(i);
    double d = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double diff = row[j] - z[j];
      d += diff * diff;
    }
    dist[i] = {d, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += p.targets[dist[i].second];
  return sum / static_cast<double>(k);
}

// -------------------------------------------------------- random forest

ForestParams train_forest(const ModelSpec& spec, const DenseMatrix& x, std::span<const double> y,
                          std::uint64_t seed, int jobs) {
  const std::size_t n_trees = as_count(spec.param("n_trees"));
  TreeParams tp{static_cast<int>(spec.param("max_depth")), kMinLeaf};
  // Fraction of features tried at each split; absent means all of them.
  auto mf = spec.hyperparams.find("max_features");
  if (mf != spec.hyperparams.end()) {
    tp.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(mf->second * static_cast<double>(x.cols))));
  }
  const std::size_t m = subsample_size(spec.param("sampling_ratio"), x.rows);
  const PresortedColumns presorted(x);
  ForestParams out;
  out.trees.resize(n_trees);
  parallel_for(n_trees, jobs, [&](std::size_t t) {
    Rng rng(derive_seed(seed, {"forest-tree", std::to_string(t)}));
    std::uniform_int_distribution<std::size_t> pick(0, x.rows - 1);
    std::vector<std::size_t> sample(m);
    for (auto& s : sample) s = pick(rng);
    TreeParams params = tp;
    params.seed = derive_seed(seed, {"forest-split", std::to_string(t)});
    out.trees[t] = RegressionTree::fit(x, y, sample, params, &presorted);
  });
  return out;
}

// ------------------------------------------------- gradient boosting

double mean_squared(std::span<const double> y, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
  return s / static_cast<double>(y.size());
}

BoostParams train_boost(const ModelSpec& spec, const DenseMatrix& x, std::span<const double> y,
                        std::uint64_t seed) {
  const std::size_t rounds = as_count(spec.param("n_rounds"));
  const TreeParams tp{static_cast<int>(spec.param("max_depth")), kMinLeaf};
  const std::size_t m = subsample_size(spec.param("sampling_ratio"), x.rows);
  const std::size_t n = x.rows;

  BoostParams out;
  out.learning_rate = spec.param("learning_rate");
  out.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> fitted(n, out.base_score);
  std::vector<double> residual(n);
  out.training_mse.push_back(mean_squared(y, fitted));

  const PresortedColumns presorted(x);
  Rng rng(derive_seed(seed, "boosting"));
  std::vector<std::size_t> perm(n);
  std::vector<std::size_t> leaf_of(n);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - fitted[i];
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> sample(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(sample.begin(), sample.end());
    RegressionTree tree = RegressionTree::fit(x, residual, sample, tp, &presorted);

    // The structure comes from the subsample; leaf values are refit on all
    // rows so each round can only lower the training loss.
    auto& nodes = tree.nodes();
    std::vector<double> leaf_sum(nodes.size(), 0.0);
    std::vector<std::size_t> leaf_count(nodes.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_of[i] = tree.leaf_index(x.row(i));
      leaf_sum[leaf_of[i]] += residual[i];
      ++leaf_count[leaf_of[i]];
    }
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (leaf_count[k] > 0) nodes[k].value = leaf_sum[k] / static_cast<double>(leaf_count[k]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      fitted[i] += out.learning_rate * nodes[leaf_of[i]].value;
    }
    out.training_mse.push_back(mean_squared(y, fitted));
    out.trees.push_back(std::move(tree));
  }
  return out;
}

// ------------------------------------------------------------------ MLP

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

struct MlpPass {
  double loss = 0.0;
  std::vector<double> grad;
};

MlpPass mlp_pass(const MlpParams& p, const DenseMatrix& x, std::span<const double> y,
                 bool want_grad) {
  const auto n = static_cast<Eigen::Index>(x.rows);
  const auto d = static_cast<Eigen::Index>(p.inputs);
  const auto h = static_cast<Eigen::Index>(p.hidden);
  ConstMatMap xm(x.data.data(), n, d);
  ConstMatMap w1(p.w1.data(), h, d);
  ConstVecMap b1(p.b1.data(), h);
  ConstVecMap w2(p.w2.data(), h);
  ConstVecMap ym(y.data(), n);

  RowMajor a = (xm * w1.transpose()).rowwise() + b1.transpose();
  a = a.array().tanh();
  const Eigen::VectorXd out = (a * w2).array() + p.b2;
  const Eigen::VectorXd err = out - ym;
  MlpPass pass;
  pass.loss = 0.5 * err.squaredNorm() / static_cast<double>(n);
  if (!want_grad) return pass;

  const Eigen::VectorXd e = err / static_cast<double>(n);
  pass.grad.assign(p.w1.size() + p.b1.size() + p.w2.size() + 1, 0.0);
  double* g = pass.grad.data();
  MatMap gw1(g, h, d);
  Eigen::Map<Eigen::VectorXd> gb1(g + h * d, h);
  Eigen::Map<Eigen::VectorXd> gw2(g + h * d + h, h);
  const RowMajor dz = ((e * w2.transpose()).array() * (1.0 - a.array().square())).matrix();
  gw1.noalias() = dz.transpose() * xm;
  gb1 = dz.colwise().sum().transpose();
  gw2.noalias() = a.transpose() * e;
  g[h * d + 2 * h] = e.sum();
  return pass;
}

MlpParams train_mlp(const ModelSpec& spec, const DenseMatrix& xs, std::span<const double> y,
                    std::uint64_t seed) {
  MlpParams p;
  p.inputs = xs.cols;
  p.hidden = as_count(spec.param("hidden_width"));
  const double lr = spec.param("learning_rate");
  const std::size_t epochs = as_count(spec.param("epochs"));

  Rng rng(derive_seed(seed, "mlp-init"));
  const double bound = std::sqrt(6.0 / static_cast<double>(p.inputs + p.hidden));
  std::uniform_real_distribution<double> init(-bound, bound);
  p.w1.resize(p.hidden * p.inputs);
  for (auto& w : p.w1) w = init(rng);
  p.b1.assign(p.hidden, 0.0);
  // Zero output weights start the network at the mean target.
  p.w2.assign(p.hidden, 0.0);
  p.b2 = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<double> flat = mlp::flatten(p);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const MlpPass pass = mlp_pass(p, xs, y, true);
    if (!p.training_loss.empty() && p.training_loss.back() - pass.loss < kMlpMinImprovement) {
      p.training_loss.push_back(pass.loss);
      break;
    }
    p.training_loss.push_back(pass.loss);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= lr * pass.grad[i];
    mlp::unflatten(p, flat);
  }
  return p;
}

}  // namespace

namespace mlp {

double loss(const MlpParams& p, const DenseMatrix& x, std::span<const double> y) {
  return mlp_pass(p, x, y, false).loss;
}

std::vector<double> gradient(const MlpParams& p, const DenseMatrix& x, std::span<const double> y) {
  return mlp_pass(p, x, y, true).grad;
}

std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> flat;
  flat.reserve(p.w1.size() + p.b1.size() + p.w2.size() + 1);
  flat.insert(flat.end(), p.w1.begin(), p.w1.end());
  flat.insert(flat.end(), p.b1.begin(), p.b1.end());
  flat.insert(flat.end(), p.w2.begin(), p.w2.end());
  flat.push_back(p.b2);
  return flat;
}

void unflatten(MlpParams& p, std::span<const double> flat) {
  if (flat.size() != p.w1.size() + p.b1.size() + p.w2.size() + 1) {
    throw ShapeError("mlp: flat parameter vector has the wrong length");
  }
  auto it = flat.begin();
  std::copy_n(it, p.w1.size(), p.w1.begin());
  it += static_cast<std::ptrdiff_t>(p.w1.size());
  std::copy_n(it, p.b1.size(), p.b1.begin());
  it += static_cast<std::ptrdiff_t>(p.b1.size());
  std::copy_n(it, p.w2.size(), p.w2.begin());
  it += static_cast<std::ptrdiff_t>(p.w2.size());
  p.b2 = *it;
}

double forward(const MlpParams& p, std::span<const double> x) {
  double out = p.b2;
  for (std::size_t j = 0; j < p.hidden; ++j) {
    double z = p.b1[j];
    const double* w = p.w1.data() + j * p.inputs;
    for (std::size_t i = 0; i < p.inputs; ++i) z += w[i] * x[i];
    out += p.w2[j] * std::tanh(z);
  }
  return out;
}

}  // namespace mlp

// ------------------------------------------------------------ ModelSpec

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kKnn:
      return "KNN";
    case ModelKind::kMlp:
      return "MLP";
    case ModelKind::kRandomForest:
      return "RANDOM_FOREST";
    case ModelKind::kGbt:
      return "GBT";
  }
  return "KNN";
}

ModelKind model_kind_from_string(const std::string& name) {
  std::string u(name);
  std::transform(u.begin(), u.end(), u.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::replace(u.begin(), u.end(), '-', '_');
  if (u == "KNN") return ModelKind::kKnn;
  if (u == "MLP") return ModelKind::kMlp;
  if (u == "RANDOM_FOREST" || u == "RANDOMFOREST" || u == "RF") return ModelKind::kRandomForest;
  if (u == "GBT" || u == "XGBOOST" || u == "BOOSTING") return ModelKind::kGbt;
  throw ConfigError("unknown meta-model kind '" + name + "' (expected KNN, MLP, RANDOM_FOREST, GBT)");
}

std::vector<std::string> ModelSpec::required_hyperparams(ModelKind kind) {
  switch (kind) {
    case ModelKind::kKnn:
      return {"k"};
    case ModelKind::kMlp:
      return {"hidden_width", "learning_rate", "epochs"};
    case ModelKind::kRandomForest:
      return {"max_depth", "n_trees", "sampling_ratio"};
    case ModelKind::kGbt:
      return {"max_depth", "n_rounds", "learning_rate", "sampling_ratio"};
  }
  return {};
}

ModelSpec ModelSpec::defaults(ModelKind kind) {
  switch (kind) {
    case ModelKind::kKnn:
      return {kind, {{"k", 3}}};
    case ModelKind::kMlp:
      return {kind, {{"hidden_width", 64}, {"learning_rate", 1e-2}, {"epochs", 2000}}};
    case ModelKind::kRandomForest:
      return {kind,
              {{"max_depth", 10}, {"n_trees", 260}, {"sampling_ratio", 0.8}, {"max_features", 1.0 / 3.0}}};
    case ModelKind::kGbt:
      return {kind,
              {{"max_depth", 4}, {"n_rounds", 200}, {"learning_rate", 0.1}, {"sampling_ratio", 0.8}}};
  }
  return {};
}

double ModelSpec::param(const std::string& name) const {
  auto it = hyperparams.find(name);
  if (it == hyperparams.end()) {
    throw ConfigError(std::string(to_string(kind)) + " spec lacks hyperparameter '" + name + "'");
  }
  return it->second;
}

void ModelSpec::validate() const {
  for (const auto& name : required_hyperparams(kind)) param(name);
  auto positive_int = [&](const char* name) {
    const double v = param(name);
    if (!is_integral(v) || v < 1) {
      throw ConfigError(std::string(name) + " must be a positive integer");
    }
  };
  auto non_negative_int = [&](const char* name) {
    const double v = param(name);
    if (!is_integral(v) || v < 0) {
      throw ConfigError(std::string(name) + " must be a non-negative integer");
    }
  };
  auto ratio = [&](const char* name) {
    const double v = param(name);
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1]");
  };
  switch (kind) {
    case ModelKind::kKnn:
      positive_int("k");
      break;
    case ModelKind::kMlp:
      positive_int("hidden_width");
      non_negative_int("epochs");
      if (!(param("learning_rate") > 0.0)) throw ConfigError("learning_rate must be positive");
      break;
    case ModelKind::kRandomForest:
      non_negative_int("max_depth");
      positive_int("n_trees");
      ratio("sampling_ratio");
      if (hyperparams.contains("max_features")) ratio("max_features");
      break;
    case ModelKind::kGbt:
      non_negative_int("max_depth");
      non_negative_int("n_rounds");
      ratio("learning_rate");
      ratio("sampling_ratio");
      break;
  }
}

std::string ModelSpec::label() const {
  switch (kind) {
    case ModelKind::kKnn: {
      auto it = hyperparams.find("k");
      return (it == hyperparams.end() ? std::string("k") : std::to_string(as_count(it->second))) +
             "-NN";
    }
    case ModelKind::kMlp:
      return "MLP";
    case ModelKind::kRandomForest:
      return "RandomForest";
    case ModelKind::kGbt:
      return "GBT";
  }
  return "model";
}

std::vector<double> Standardization::apply(std::span<const double> x) const {
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean[j]) / sd[j];
  return z;
}

// ---------------------------------------------------------- train/predict

TrainedMetaModel train(const ModelSpec& spec, std::span<const TrainingRow> rows, std::uint64_t seed,
                       int jobs) {
  spec.validate();
  check_rows(rows);
  const DenseMatrix x = design_matrix(rows);
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = rows[i].target;

  TrainedMetaModel model;
  model.spec = spec;
  model.seed = seed;
  model.dims = rows.front().profile.dims;
  model.kinds = rows.front().profile.kinds;
  model.stats = fit_standardization(x);

  switch (spec.kind) {
    case ModelKind::kKnn:
      model.parameters = train_knn(standardize(x, model.stats), y);
      break;
    case ModelKind::kMlp:
      model.parameters = train_mlp(spec, standardize(x, model.stats), y, seed);
      break;
    case ModelKind::kRandomForest:
      model.parameters = train_forest(spec, x, y, seed, jobs);
      break;
    case ModelKind::kGbt:
      model.parameters = train_boost(spec, x, y, seed);
      break;
  }
  return model;
}

double predict_raw(const TrainedMetaModel& model, std::span<const double> v) {
  if (v.size() != model.stats.mean.size()) {
    throw ShapeError("profile has " + std::to_string(v.size()) + " entries, model expects " +
                     std::to_string(model.stats.mean.size()));
  }
  return std::visit(
      Overloaded{
          [&](const KnnParams& p) {
            return predict_knn(p, as_count(model.spec.param("k")), model.stats.apply(v));
          },
          [&](const MlpParams& p) { return mlp::forward(p, model.stats.apply(v)); },
          [&](const ForestParams& p) {
            double sum = 0.0;
            for (const auto& t : p.trees) sum += t.predict(v);
            return sum / static_cast<double>(p.trees.size());
          },
          [&](const BoostParams& p) {
            double f = p.base_score;
            for (const auto& t : p.trees) f += p.learning_rate * t.predict(v);
            return f;
          },
      },
      model.parameters);
}

double predict(const TrainedMetaModel& model, const FeatureProfile& profile) {
  if (profile.dims != model.dims || profile.kinds != model.kinds) {
    throw ShapeError("profile " + profile.setting.str() +
                     " does not match the model's dimension or feature kinds");
  }
  return std::clamp(predict_raw(model, profile.vector), 0.0, 1.0);
}

std::vector<double> tree_predictions(const TrainedMetaModel& model, std::span<const double> v) {
  const auto* forest = std::get_if<ForestParams>(&model.parameters);
  if (!forest) throw ConfigError("tree_predictions: model is not a random forest");
  std::vector<double> out;
  out.reserve(forest->trees.size());
  for (const auto& t : forest->trees) out.push_back(t.predict(v));
  return out;
}

// ------------------------------------------------------------ grid search

GridSearchResult grid_search(ModelKind kind, const Grid& grid, std::span<const TrainingRow> rows,
                             int folds, std::uint64_t seed, CvGrouping grouping, int jobs) {
  if (grid.empty()) throw ConfigError("grid search needs at least one axis");
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw ConfigError("grid axis '" + name + "' has no values");
  }
  check_rows(rows);

  std::vector<std::string> groups;
  if (grouping == CvGrouping::kTask) {
    for (const auto& r : rows) groups.push_back(r.profile.setting.task_id);
  }
  const auto split =
      grouping == CvGrouping::kTask
          ? kfold_split(rows.size(), folds, derive_seed(seed, "grid-cv"), std::span<const std::string>(groups))
          : kfold_split(rows.size(), folds, derive_seed(seed, "grid-cv"));

  std::size_t total = 1;
  for (const auto& axis : grid) total *= axis.second.size();

  GridSearchResult result;
  std::vector<std::size_t> idx(grid.size(), 0);
  for (std::size_t point = 0; point < total; ++point) {
    ModelSpec spec = ModelSpec::defaults(kind);
    for (std::size_t a = 0; a < grid.size(); ++a) spec.hyperparams[grid[a].first] = grid[a].second[idx[a]];
    spec.validate();

    double mae_sum = 0.0;
    for (std::size_t f = 0; f < split.size(); ++f) {
      std::vector<TrainingRow> train_rows;
      for (auto i : split[f].train) train_rows.push_back(rows[i]);
      const auto model =
          train(spec, train_rows, derive_seed(seed, {"grid-fold", std::to_string(f)}), jobs);
      double err = 0.0;
      for (auto i : split[f].test) err += std::abs(predict(model, rows[i].profile) - rows[i].target);
      mae_sum += err / static_cast<double>(split[f].test.size());
    }
    const double cv_mae = mae_sum / static_cast<double>(split.size());
    result.evaluated.push_back({spec, cv_mae});

    for (std::size_t a = grid.size(); a-- > 0;) {
      if (++idx[a] < grid[a].second.size()) break;
      idx[a] = 0;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.evaluated.size(); ++i) {
    if (result.evaluated[i].cv_mae < result.evaluated[best].cv_mae) best = i;
  }
  result.best = result.evaluated[best].spec;
  return result;
}

}  // namespace perfest
