#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adarank/checkpoint.hpp"
#include "adarank/matrix.hpp"

namespace adarank {

enum class Activation { relu, tanh };

// Multi-head MLP. Biases are folded into the weight matrices through a
// constant-1 column appended to every layer input, so each mergeable
// parameter is a single matrix: layer l maps (fan_in + 1) -> fan_out and the
// per-task heads map (hidden_last + 1) -> classes. Backbone layers are the
// shared, mergeable part; heads stay task-private.
struct ModelSpec {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden_dims = {64, 64};
  std::vector<std::size_t> classes_per_task = {4, 8, 12, 16};
  Activation activation = Activation::relu;

  std::size_t num_tasks() const { return classes_per_task.size(); }
  std::size_t num_backbone_layers() const { return hidden_dims.size(); }
  std::vector<std::string> backbone_layer_names() const;
  // (rows, cols) of backbone layer l, rows include the folded bias.
  std::pair<std::size_t, std::size_t> backbone_layer_shape(std::size_t l) const;
  std::pair<std::size_t, std::size_t> head_shape(std::size_t task) const;
  void validate() const;
};

struct Batch {
  Matrix inputs;
  std::optional<std::vector<int>> labels;
  int task_id = 0;
};

enum class LossKind { entropy, cross_entropy };

// Gradients of a scalar loss with respect to the backbone weights; keys match
// the backbone layer names exactly.
struct GradientBundle {
  WeightMap per_layer;
  double loss_value = 0.0;
};

// Backbone plus head gradients for supervised training.
struct TrainGradients {
  WeightMap backbone;
  Matrix head;
  double loss = 0.0;
};

Matrix augment_ones(const Matrix& x);

// Logits for a batch, deterministic. inputs is batch x input_dim.
Matrix forward(const ModelSpec& spec, const WeightMap& backbone, const Matrix& head,
               const Matrix& inputs);

// Row-wise log-softmax with the row max subtracted before exponentiation.
Matrix log_softmax_rows(const Matrix& logits);

// Shannon entropy of each row's softmax, p log p read as 0 when p = 0.
std::vector<double> row_entropies(const Matrix& logits);

// Batch means.
double entropy_loss(const Matrix& logits);
double cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels);

// Analytic gradient of the batch-mean loss w.r.t. every backbone layer.
GradientBundle backward_weight_grads(const ModelSpec& spec, const WeightMap& backbone,
                                     const Matrix& head, const Batch& batch, LossKind kind);

// Cross-entropy gradients for backbone and head together (training path).
TrainGradients backward_train(const ModelSpec& spec, const WeightMap& backbone,
                              const Matrix& head, const Batch& batch);

}  // namespace adarank
