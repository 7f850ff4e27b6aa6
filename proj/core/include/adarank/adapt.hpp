#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adarank/error.hpp"
#include "adarank/merge.hpp"
#include "adarank/nn.hpp"
#include "adarank/tasks.hpp"

namespace adarank {

enum class InitPolicy { all_ones, top_fraction, per_task_share };
enum class TaskReduction { sum, mean };

// Relaxed mask logits per (task, layer, component) plus the learned merge
// coefficients. A component is active when its logit is >= 0, equivalently
// sigmoid(logit / temperature) >= 0.5.
struct MaskState {
  std::vector<std::vector<std::vector<double>>> logits;  // [task][layer][component]
  double temperature = 10.0;
  LambdaMap lambda;
  bool learn_mask = true;
  bool learn_lambda = true;
  // Top-fraction cap: components at index >= floor(fraction * k) are clamped
  // to the inactive side for the whole run and excluded from learning.
  std::optional<double> range_restriction;
};

// Initial logit magnitude, expressed as a pre-temperature margin so that
// sigmoid(logit / T) starts at the same value for every temperature. The
// margin is small on purpose: Adam moves each coordinate by roughly the
// learning rate per step independent of gradient scale, so a few hundred
// steps at the default 1e-3 can only traverse a few tenths of a logit unit.
inline constexpr double kInitLogitMargin = 0.005;

std::vector<std::uint8_t> binarize(const std::vector<double>& logits, double temperature);
MaskBits binarize_all(const MaskState& state);

// Straight-through gradient: upstream * sigmoid'(logit / T) / T.
std::vector<double> ste_backward(const std::vector<double>& upstream,
                                 const std::vector<double>& logits, double temperature);

// s_r * u_r^T G v_r per component: the inner products that turn a weight
// gradient G into per-component sensitivities.
std::vector<double> component_couplings(const Matrix& weight_grad, const ThinSvd& svd);

// d(loss)/d(relaxed mask entry r) = lambda * s_r * u_r^T G v_r.
std::vector<double> mask_grad_from_weight_grad(const Matrix& weight_grad, const ThinSvd& svd,
                                               double lambda);

// d(loss)/d(lambda) = sum_r bits_r * s_r * u_r^T G v_r.
double lambda_grad_from_weight_grad(const Matrix& weight_grad, const ThinSvd& svd,
                                    const std::vector<std::uint8_t>& bits);

// fraction is consumed only by top_fraction.
MaskState init_mask(InitPolicy policy, const SpectralSet& set, double temperature,
                    const LambdaMap& lambda, double fraction = 0.0);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Flat first/second moments shaped exactly like the learnable vector.
struct AdamState {
  AdamConfig config;
  std::vector<double> m, v;
  std::int64_t step = 0;

  void resize(std::size_t n);
  void update(std::vector<double>& x, const std::vector<double>& g);
};

struct AdaptSettings {
  std::size_t steps = 300;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double data_fraction = 1.0;
  TaskReduction reduction = TaskReduction::sum;
  AdamConfig adam;
};

// Unlabeled view of a test split; the type carries no label field, so the
// entropy objective cannot touch ground truth.
struct UnlabeledStream {
  Matrix inputs;
};

// Keeps the first max(1, floor(fraction * rows)) rows.
UnlabeledStream make_stream(const Dataset& test, double data_fraction = 1.0);

struct AdaptRecord {
  std::size_t step = 0;
  double total_loss = 0.0;
  std::vector<double> per_task_loss;
  std::vector<std::vector<std::size_t>> active_bits;  // [task][layer]
};

struct AdaptTrace {
  std::vector<AdaptRecord> records;
};

struct AdaptResult {
  MaskState state;
  AdaptTrace trace;
};

// Entropy objective diverged; carries the trace recorded so far.
class AdaptDivergence : public NumericalError {
 public:
  AdaptDivergence(std::size_t step, AdaptTrace trace)
      : NumericalError("adapt: non-finite loss at step " + std::to_string(step)),
        step_(step),
        trace_(std::move(trace)) {}
  std::size_t step() const { return step_; }
  const AdaptTrace& trace() const { return trace_; }

 private:
  std::size_t step_;
  AdaptTrace trace_;
};

// Test-time adaptation: each step rebuilds the merged backbone from the
// current binarized masks, draws one batch per task from its shuffled cyclic
// stream, sums the per-task batch-mean entropies, and updates the learnable
// logits / lambdas through the straight-through estimator with Adam.
// Requires steps >= 1 and non-empty streams.
AdaptResult adapt(const ModelSpec& spec, const WeightMap& base, const SpectralSet& set,
                  const std::vector<Matrix>& heads, const std::vector<UnlabeledStream>& streams,
                  MaskState state, AdamState adam, const AdaptSettings& settings);

// Same loop with labels and a config-chosen loss; backs the supervised
// oracle. steps = 0 records the initial loss without updating.
AdaptResult adapt_engine(const ModelSpec& spec, const WeightMap& base, const SpectralSet& set,
                         const std::vector<Matrix>& heads, const std::vector<Matrix>& inputs,
                         const std::vector<const std::vector<int>*>& labels, LossKind kind,
                         MaskState state, AdamState adam, const AdaptSettings& settings);

// Mask state persistence in the checkpoint container: one "logits.<task>.<layer>"
// row vector per (task, layer) plus one "lambda.<task>" row vector per task.
void save_mask_state(const MaskState& state, const std::vector<std::string>& layers,
                     const std::filesystem::path& path,
                     const nlohmann::json& manifest_extra = nlohmann::json::object());
MaskState load_mask_state(const std::filesystem::path& path, std::vector<std::string>* layers_out = nullptr);

void write_trace_csv(const AdaptTrace& trace, std::size_t num_tasks,
                     const std::vector<std::string>& layers, const std::filesystem::path& path,
                     const std::string& value_label = "entropy");

}  // namespace adarank
