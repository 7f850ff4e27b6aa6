#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "adarank/checkpoint.hpp"
#include "adarank/spectral.hpp"

namespace adarank {

enum class MergeMethod { weight_average, task_arithmetic, topk_svd, masked };
enum class TopkRankRule { fraction, per_task_share };

// Per-(task, layer) merge coefficients; constructible from a tied scalar.
class LambdaMap {
 public:
  LambdaMap() = default;
  static LambdaMap uniform(std::size_t tasks, std::size_t layers, double value);
  double at(std::size_t task, std::size_t layer) const;
  double& at(std::size_t task, std::size_t layer);
  std::size_t num_tasks() const { return tasks_; }
  std::size_t num_layers() const { return layers_; }

 private:
  std::size_t tasks_ = 0;
  std::size_t layers_ = 0;
  std::vector<double> values_;  // task-major
};

// [task][layer][component], 0/1.
using MaskBits = std::vector<std::vector<std::vector<std::uint8_t>>>;

struct MergePlan {
  MergeMethod method = MergeMethod::task_arithmetic;
  BaseKind base_kind = BaseKind::pretrained;
  bool whiten = false;
  LambdaMap lambda;
  std::optional<double> topk_fraction;
  std::optional<TopkRankRule> topk_rank_rule;
};

// Plain mean of the fine-tuned backbones, layer by layer.
WeightMap merge_weight_average(const std::vector<WeightMap>& backbones);

// base + sum_i lambda_{i,l} tau_i^l per layer, accumulated in ascending task
// order.
WeightMap merge_task_arithmetic(const WeightMap& base, const TaskVectorSet& vectors,
                                const LambdaMap& lambda);

// base + sum_i lambda_{i,l} U_i (diag(bits_i) * diag(s_i)) V_i^T per layer.
// The all-ones mask reproduces merge_task_arithmetic up to the SVD
// reconstruction error.
WeightMap merge_masked(const WeightMap& base, const SpectralSet& set, const MaskBits& bits,
                       const LambdaMap& lambda);

// Leading-component masks. fraction keeps floor(fraction * k) components per
// (task, layer); per_task_share keeps floor(k / num_tasks) per task.
MaskBits topk_mask(const SpectralSet& set, double fraction, TopkRankRule rule);
MaskBits full_mask(const SpectralSet& set);

WeightMap merge_topk(const WeightMap& base, const SpectralSet& set, double fraction,
                     TopkRankRule rule, const LambdaMap& lambda);

}  // namespace adarank
