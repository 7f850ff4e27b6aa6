#include "adarank/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "adarank/error.hpp"
#include "adarank/rng.hpp"

namespace adarank {
namespace {

// Generator targets a wider margin than the documented >= 4x floor so the
// per-task Bayes accuracy stays comfortably high.
constexpr double kSeparationTarget = 5.0;
constexpr double kCenterSeparationTarget = 2.0;

std::vector<std::vector<double>> gaussian_vectors(Rng& rng, std::size_t count, std::size_t dim) {
  std::vector<std::vector<double>> vs(count, std::vector<double>(dim));
  for (auto& v : vs) {
    for (double& x : v) x = rng.normal();
  }
  return vs;
}

double pair_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double min_pairwise_distance(const std::vector<std::vector<double>>& vs) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      best = std::min(best, pair_distance(vs[i], vs[j]));
    }
  }
  return best;
}

// Scale a point set about the origin until no pair is closer than min_dist.
void enforce_separation(std::vector<std::vector<double>>& vs, double min_dist) {
  if (vs.size() < 2) return;
  const double current = min_pairwise_distance(vs);
  if (current >= min_dist) return;
  if (current <= 0.0) throw NumericalError("suite generation: coincident points");
  const double factor = min_dist / current;
  for (auto& v : vs) {
    for (double& x : v) x *= factor;
  }
}

// Random orthogonal matrix from Gram-Schmidt over a Gaussian draw.
Matrix random_rotation(Rng& rng, std::size_t dim) {
  Matrix q(dim, dim);
  for (std::size_t col = 0; col < dim; ++col) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (std::size_t prev = 0; prev < col; ++prev) {
      double proj = 0.0;
      for (std::size_t i = 0; i < dim; ++i) proj += v[i] * q(i, prev);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * q(i, prev);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) throw NumericalError("suite generation: degenerate rotation draw");
    for (std::size_t i = 0; i < dim; ++i) q(i, col) = v[i] / norm;
  }
  return q;
}

Dataset sample_dataset(Rng& rng, const std::vector<std::vector<double>>& rotated_means,
                       const std::vector<double>& center, double spread,
                       std::size_t samples_per_class, std::size_t dim) {
  const std::size_t classes = rotated_means.size();
  Dataset ds;
  ds.inputs = Matrix(classes * samples_per_class, dim);
  ds.labels.resize(classes * samples_per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t sample = 0; sample < samples_per_class; ++sample, ++row) {
      for (std::size_t i = 0; i < dim; ++i) {
        ds.inputs(row, i) = center[i] + rotated_means[c][i] + spread * rng.normal();
      }
      ds.labels[row] = static_cast<int>(c);
    }
  }
  // Store in shuffled order: consumers that truncate a stream to its leading
  // rows must see a class mix, not the first class block.
  std::vector<int> order(ds.labels.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  Dataset shuffled;
  shuffled.inputs = Matrix(ds.inputs.rows(), dim);
  shuffled.labels.resize(ds.labels.size());
  for (std::size_t r = 0; r < ds.labels.size(); ++r) {
    const auto src = static_cast<std::size_t>(order[r]);
    for (std::size_t i = 0; i < dim; ++i) shuffled.inputs(r, i) = ds.inputs(src, i);
    shuffled.labels[r] = ds.labels[src];
  }
  return shuffled;
}

// ---- training loop -------------------------------------------------------

struct AdamMoments {
  Matrix m, v;
};

void adam_step(Matrix& w, const Matrix& g, AdamMoments& mom, double lr, std::int64_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g.data()[i];
    double& mi = mom.m.data()[i];
    double& vi = mom.v.data()[i];
    mi = b1 * mi + (1.0 - b1) * gi;
    vi = b2 * vi + (1.0 - b2) * gi * gi;
    w.data()[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + eps);
  }
}

void sgd_step(Matrix& w, const Matrix& g, double lr) {
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= lr * g.data()[i];
}

Matrix gather_rows(const Matrix& src, const std::vector<int>& idx, std::size_t lo, std::size_t hi) {
  Matrix out(hi - lo, src.cols());
  for (std::size_t r = lo; r < hi; ++r) {
    const int i = idx[r];
    for (std::size_t j = 0; j < src.cols(); ++j) out(r - lo, j) = src(static_cast<std::size_t>(i), j);
  }
  return out;
}

// Supervised loop over one dataset, updating backbone and head in place.
void train_loop(const ModelSpec& spec, WeightMap& backbone, Matrix& head, int task_id,
                const Dataset& data, std::size_t epochs, double lr, std::size_t batch_size,
                Optimizer opt, std::uint64_t seed) {
  const auto names = spec.backbone_layer_names();
  std::vector<AdamMoments> layer_moments;
  AdamMoments head_moments;
  if (opt == Optimizer::adam) {
    for (const auto& name : names) {
      const Matrix& w = backbone.at(name);
      layer_moments.push_back({Matrix(w.rows(), w.cols()), Matrix(w.rows(), w.cols())});
    }
    head_moments = {Matrix(head.rows(), head.cols()), Matrix(head.rows(), head.cols())};
  }

  std::vector<int> order(data.labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(seed, epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
      const std::size_t hi = std::min(lo + batch_size, order.size());
      Batch batch;
      batch.inputs = gather_rows(data.inputs, order, lo, hi);
      std::vector<int> labels(hi - lo);
      for (std::size_t r = lo; r < hi; ++r) labels[r - lo] = data.labels[static_cast<std::size_t>(order[r])];
      batch.labels = std::move(labels);
      batch.task_id = task_id;

      const TrainGradients grads = backward_train(spec, backbone, head, batch);
      ++step;
      if (!std::isfinite(grads.loss)) {
        throw NumericalError("training diverged at step " + std::to_string(step));
      }
      if (opt == Optimizer::adam) {
        for (std::size_t l = 0; l < names.size(); ++l) {
          adam_step(backbone.at(names[l]), grads.backbone.at(names[l]), layer_moments[l], lr, step);
        }
        adam_step(head, grads.head, head_moments, lr, step);
      } else {
        for (const auto& name : names) sgd_step(backbone.at(name), grads.backbone.at(name), lr);
        sgd_step(head, grads.head, lr);
      }
    }
  }
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

std::size_t TaskSuiteSpec::classes_for_task(std::size_t task) const {
  const double mult = difficulty_profile.empty() ? 1.0 : difficulty_profile[task];
  const auto scaled = static_cast<std::size_t>(std::llround(static_cast<double>(classes_per_task) * mult));
  return std::max<std::size_t>(2, scaled);
}

void TaskSuiteSpec::validate() const {
  if (num_tasks == 0) throw ConfigError("suite: num_tasks must be positive");
  if (input_dim < 2) throw ConfigError("suite: input_dim must be at least 2");
  if (classes_per_task < 2) throw ConfigError("suite: classes_per_task must be at least 2");
  if (!difficulty_profile.empty() && difficulty_profile.size() != num_tasks) {
    throw ConfigError("suite: difficulty_profile size " +
                      std::to_string(difficulty_profile.size()) + " does not match " +
                      std::to_string(num_tasks) + " tasks");
  }
  for (double m : difficulty_profile) {
    if (!(m > 0.0)) throw ConfigError("suite: difficulty multipliers must be positive");
  }
  if (train_samples_per_class == 0 || test_samples_per_class == 0) {
    throw ConfigError("suite: samples_per_class must be positive");
  }
  if (!(cluster_spread > 0.0)) throw ConfigError("suite: cluster_spread must be positive");
}

Suite generate_suite(const TaskSuiteSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.input_dim;

  // Task centers keep the per-task input distributions apart.
  Rng center_rng(Rng::mix(spec.rotation_seed, 0x5eedc0de));
  auto centers = gaussian_vectors(center_rng, spec.num_tasks, dim);
  for (auto& c : centers) {
    double norm = 0.0;
    for (double x : c) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericalError("suite generation: degenerate center draw");
    for (double& x : c) x *= 4.0 * spec.cluster_spread / norm;
  }
  enforce_separation(centers, kCenterSeparationTarget * spec.cluster_spread);

  Suite suite;
  suite.reserve(spec.num_tasks);
  for (std::size_t t = 0; t < spec.num_tasks; ++t) {
    const std::size_t classes = spec.classes_for_task(t);
    Rng rot_rng(Rng::mix(spec.rotation_seed, t));
    Rng data_rng(Rng::mix(spec.data_seed, t));

    auto means = gaussian_vectors(rot_rng, classes, dim);
    for (auto& m : means) {
      double norm = 0.0;
      for (double x : m) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-12) throw NumericalError("suite generation: degenerate mean draw");
      for (double& x : m) x *= kSeparationTarget * spec.cluster_spread / norm;
    }
    // Zero-mean the constellation so the task's input mean is its center.
    std::vector<double> avg(dim, 0.0);
    for (const auto& m : means) {
      for (std::size_t i = 0; i < dim; ++i) avg[i] += m[i] / static_cast<double>(classes);
    }
    for (auto& m : means) {
      for (std::size_t i = 0; i < dim; ++i) m[i] -= avg[i];
    }
    enforce_separation(means, kSeparationTarget * spec.cluster_spread);

    const Matrix rotation = random_rotation(rot_rng, dim);
    std::vector<std::vector<double>> rotated(classes, std::vector<double>(dim, 0.0));
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j) acc += rotation(i, j) * means[c][j];
        rotated[c][i] = acc;
      }
    }

    TaskData task;
    task.num_classes = classes;
    task.train = sample_dataset(data_rng, rotated, centers[t], spec.cluster_spread,
                                spec.train_samples_per_class, dim);
    task.test = sample_dataset(data_rng, rotated, centers[t], spec.cluster_spread,
                               spec.test_samples_per_class, dim);
    suite.push_back(std::move(task));
  }
  return suite;
}

ModelSpec make_model_spec(const TaskSuiteSpec& suite, std::vector<std::size_t> hidden_dims,
                          Activation activation) {
  ModelSpec spec;
  spec.input_dim = suite.input_dim;
  spec.hidden_dims = std::move(hidden_dims);
  spec.classes_per_task.clear();
  for (std::size_t t = 0; t < suite.num_tasks; ++t) {
    spec.classes_per_task.push_back(suite.classes_for_task(t));
  }
  spec.activation = activation;
  spec.validate();
  return spec;
}

Checkpoint init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Checkpoint ckpt;
  const auto names = spec.backbone_layer_names();
  for (std::size_t l = 0; l < names.size(); ++l) {
    Rng rng(Rng::mix(seed, l));
    const auto [rows, cols] = spec.backbone_layer_shape(l);
    Matrix w(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(rows - 1));
    for (std::size_t i = 0; i + 1 < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) w(i, j) = scale * rng.normal();
    }
    // Folded-bias row stays zero.
    ckpt.backbone.add(names[l], std::move(w));
  }
  ckpt.manifest["init_seed"] = seed;
  return ckpt;
}

Matrix init_head(const ModelSpec& spec, std::size_t task, std::uint64_t seed) {
  const auto [rows, cols] = spec.head_shape(task);
  Rng rng(Rng::mix(Rng::mix(seed, 0x4eadULL), task));
  Matrix w(rows, cols);
  const double scale = std::sqrt(2.0 / static_cast<double>(rows - 1));
  for (std::size_t i = 0; i + 1 < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) w(i, j) = scale * rng.normal();
  }
  return w;
}

Checkpoint pretrain(const ModelSpec& spec, const Suite& suite, const PretrainConfig& config) {
  spec.validate();
  if (suite.size() != spec.num_tasks()) {
    throw DimensionError("pretrain: suite has " + std::to_string(suite.size()) +
                         " tasks, model expects " + std::to_string(spec.num_tasks()));
  }
  Checkpoint ckpt = init_model(spec, config.seed);
  if (config.epochs == 0) {
    ckpt.manifest["pretrain"] = {{"epochs", 0}, {"seed", config.seed}};
    return ckpt;
  }

  // Pooled dataset over a global label space; offsets are per-task starts.
  std::size_t total_rows = 0, total_classes = 0;
  std::vector<std::size_t> offsets;
  for (const auto& task : suite) {
    offsets.push_back(total_classes);
    total_rows += task.train.inputs.rows();
    total_classes += task.num_classes;
  }
  Dataset pooled;
  pooled.inputs = Matrix(total_rows, spec.input_dim);
  pooled.labels.resize(total_rows);
  std::size_t row = 0;
  for (std::size_t t = 0; t < suite.size(); ++t) {
    const Dataset& train = suite[t].train;
    for (std::size_t r = 0; r < train.inputs.rows(); ++r, ++row) {
      for (std::size_t j = 0; j < spec.input_dim; ++j) pooled.inputs(row, j) = train.inputs(r, j);
      pooled.labels[row] = train.labels[r] + static_cast<int>(offsets[t]);
    }
  }

  // Throwaway pooled head over the union of class spaces.
  ModelSpec pooled_spec = spec;
  pooled_spec.classes_per_task = {total_classes};
  Matrix pooled_head = init_head(pooled_spec, 0, Rng::mix(config.seed, 0x9001ULL));
  train_loop(pooled_spec, ckpt.backbone, pooled_head, 0, pooled, config.epochs,
             config.learning_rate, config.batch_size, Optimizer::adam, config.seed);

  // Task-restricted accuracy of the pooled model, recorded for the quality gate.
  nlohmann::json pooled_acc = nlohmann::json::array();
  for (std::size_t t = 0; t < suite.size(); ++t) {
    const Matrix logits = forward(pooled_spec, ckpt.backbone, pooled_head, suite[t].test.inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      std::size_t best = offsets[t];
      for (std::size_t j = offsets[t]; j < offsets[t] + suite[t].num_classes; ++j) {
        if (logits(i, j) > logits(i, best)) best = j;
      }
      if (static_cast<int>(best - offsets[t]) == suite[t].test.labels[i]) ++hits;
    }
    pooled_acc.push_back(static_cast<double>(hits) / static_cast<double>(logits.rows()));
  }
  ckpt.manifest["pretrain"] = {{"epochs", config.epochs},
                               {"learning_rate", config.learning_rate},
                               {"batch_size", config.batch_size},
                               {"seed", config.seed},
                               {"pooled_accuracy", pooled_acc}};
  return ckpt;
}

Checkpoint finetune(const ModelSpec& spec, const Checkpoint& base, std::size_t task,
                    const TaskData& data, const TrainConfig& config) {
  spec.validate();
  if (task >= spec.num_tasks()) {
    throw ConfigError("finetune: task " + std::to_string(task) + " out of range");
  }
  Checkpoint out;
  for (const auto& name : spec.backbone_layer_names()) {
    out.backbone.add(name, base.backbone.at(name));
  }
  Matrix head = init_head(spec, task, Rng::mix(config.seed, task));
  train_loop(spec, out.backbone, head, static_cast<int>(task), data.train, config.epochs,
             config.learning_rate, config.batch_size, config.optimizer, config.seed);
  const double acc = evaluate_task(spec, out.backbone, head, data.test);
  out.heads.emplace(static_cast<int>(task), std::move(head));
  out.manifest["finetune"] = {{"task", task},
                              {"epochs", config.epochs},
                              {"learning_rate", config.learning_rate},
                              {"batch_size", config.batch_size},
                              {"optimizer", config.optimizer == Optimizer::adam ? "adam" : "sgd"},
                              {"seed", config.seed},
                              {"test_accuracy", acc}};
  return out;
}

double evaluate_task(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
                     const Dataset& test) {
  const Matrix logits = forward(spec, backbone, head, test.inputs);
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == test.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

AccuracyTable evaluate(const ModelSpec& spec, const WeightMap& backbone,
                       const std::vector<Matrix>& heads, const Suite& suite) {
  if (heads.size() != suite.size()) {
    throw DimensionError("evaluate: " + std::to_string(heads.size()) + " heads for " +
                         std::to_string(suite.size()) + " tasks");
  }
  AccuracyTable table;
  for (std::size_t t = 0; t < suite.size(); ++t) {
    table.per_task.push_back(evaluate_task(spec, backbone, heads[t], suite[t].test));
  }
  double acc = 0.0;
  for (double a : table.per_task) acc += a;
  table.mean = acc / static_cast<double>(table.per_task.size());
  return table;
}

namespace {

Matrix labels_to_row(const std::vector<int>& labels) {
  Matrix row(1, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) row(0, i) = static_cast<double>(labels[i]);
  return row;
}

std::vector<int> row_to_labels(const Matrix& row, std::size_t expected) {
  if (row.rows() != 1 || row.cols() != expected) {
    throw IoError("suite file: label row shape mismatch");
  }
  std::vector<int> labels(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    labels[i] = static_cast<int>(std::llround(row(0, i)));
  }
  return labels;
}

}  // namespace

void save_suite(const Suite& suite, const std::filesystem::path& path,
                const nlohmann::json& manifest_extra) {
  Checkpoint ckpt;
  std::vector<std::size_t> class_counts;
  for (std::size_t t = 0; t < suite.size(); ++t) {
    const std::string prefix = "task" + std::to_string(t) + ".";
    ckpt.backbone.add(prefix + "train.inputs", suite[t].train.inputs);
    ckpt.backbone.add(prefix + "train.labels", labels_to_row(suite[t].train.labels));
    ckpt.backbone.add(prefix + "test.inputs", suite[t].test.inputs);
    ckpt.backbone.add(prefix + "test.labels", labels_to_row(suite[t].test.labels));
    class_counts.push_back(suite[t].num_classes);
  }
  ckpt.manifest = manifest_extra;
  ckpt.manifest["suite"]["num_classes"] = class_counts;
  save_checkpoint(ckpt, path);
}

Suite load_suite(const std::filesystem::path& path, nlohmann::json* manifest_out) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.manifest.contains("suite")) {
    throw IoError("suite file: manifest block missing in '" + path.string() + "'");
  }
  const auto class_counts =
      ckpt.manifest.at("suite").at("num_classes").get<std::vector<std::size_t>>();
  Suite suite(class_counts.size());
  for (std::size_t t = 0; t < suite.size(); ++t) {
    const std::string prefix = "task" + std::to_string(t) + ".";
    suite[t].train.inputs = ckpt.backbone.at(prefix + "train.inputs");
    suite[t].train.labels =
        row_to_labels(ckpt.backbone.at(prefix + "train.labels"), suite[t].train.inputs.rows());
    suite[t].test.inputs = ckpt.backbone.at(prefix + "test.inputs");
    suite[t].test.labels =
        row_to_labels(ckpt.backbone.at(prefix + "test.labels"), suite[t].test.inputs.rows());
    suite[t].num_classes = class_counts[t];
  }
  if (manifest_out) *manifest_out = ckpt.manifest;
  return suite;
}

}  // namespace adarank
