#pragma once

#include <cstdint>
#include <vector>

#include "adarank/checkpoint.hpp"
#include "adarank/nn.hpp"

namespace adarank {

// Synthetic multi-task suite: each task is a Gaussian mixture whose class
// mean constellation lives in a task-specific random rotation of the input
// space, with per-task class counts scaled by difficulty_profile so the tasks
// have heterogeneous intrinsic structure. Class means within a task are kept
// at least 4 * cluster_spread apart so individually fine-tuned models can
// reach high accuracy.
struct TaskSuiteSpec {
  std::size_t num_tasks = 4;
  std::size_t input_dim = 32;
  std::size_t classes_per_task = 4;
  std::vector<double> difficulty_profile = {1.0, 2.0, 3.0, 4.0};
  std::size_t train_samples_per_class = 200;
  std::size_t test_samples_per_class = 200;
  double cluster_spread = 0.25;
  std::uint64_t rotation_seed = 101;
  std::uint64_t data_seed = 202;

  std::size_t classes_for_task(std::size_t task) const;
  void validate() const;
};

struct Dataset {
  Matrix inputs;            // samples x input_dim
  std::vector<int> labels;  // one per row
};

struct TaskData {
  Dataset train;
  Dataset test;
  std::size_t num_classes = 0;
};

using Suite = std::vector<TaskData>;

// Bit-for-bit deterministic in the suite spec (seeds included).
Suite generate_suite(const TaskSuiteSpec& spec);

// ModelSpec matching a suite: input dim and per-task class counts from the
// suite, hidden stack and activation from the caller.
ModelSpec make_model_spec(const TaskSuiteSpec& suite, std::vector<std::size_t> hidden_dims,
                          Activation activation);

enum class Optimizer { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 3e-3;
  std::size_t batch_size = 32;
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 7;
};

struct PretrainConfig {
  std::size_t epochs = 2;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 11;
};

// Seeded random initialization; backbone only, folded-bias rows start at 0.
Checkpoint init_model(const ModelSpec& spec, std::uint64_t seed);
Matrix init_head(const ModelSpec& spec, std::size_t task, std::uint64_t seed);

// Brief training on the pooled multi-task data with a throwaway pooled head.
// The returned checkpoint carries the shared backbone initialization; the
// manifest records the pooled model's task-restricted accuracies. Zero epochs
// returns the seeded initialization unchanged.
Checkpoint pretrain(const ModelSpec& spec, const Suite& suite, const PretrainConfig& config);

// Supervised training of backbone + task head from the given base;
// divergence (non-finite loss) aborts with the failing step in the message.
// The manifest records the task id, config and final test accuracy.
Checkpoint finetune(const ModelSpec& spec, const Checkpoint& base, std::size_t task,
                    const TaskData& data, const TrainConfig& config);

struct AccuracyTable {
  std::vector<double> per_task;
  double mean = 0.0;
};

double evaluate_task(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
                     const Dataset& test);

// Backbone + per-task heads on every task's test split; mean is unweighted.
AccuracyTable evaluate(const ModelSpec& spec, const WeightMap& backbone,
                       const std::vector<Matrix>& heads, const Suite& suite);

// Suite persistence in the checkpoint container: per task the entries
// "task<t>.<split>.inputs" (samples x dim) and "task<t>.<split>.labels"
// (1 x samples, integer-valued), with per-task class counts in the manifest.
void save_suite(const Suite& suite, const std::filesystem::path& path,
                const nlohmann::json& manifest_extra = nlohmann::json::object());
Suite load_suite(const std::filesystem::path& path, nlohmann::json* manifest_out = nullptr);

}  // namespace adarank
