#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "adarank/adapt.hpp"
#include "adarank/merge.hpp"
#include "adarank/nn.hpp"
#include "adarank/spectral.hpp"
#include "adarank/tasks.hpp"

namespace adarank {

// Scalar objective over a full backbone plus its gradient w.r.t. one named
// layer. The diagnostics below never look past this interface, so synthetic
// losses with closed-form curvature slot in for verification.
struct LossProbe {
  std::function<double(const WeightMap&)> loss;
  std::function<Matrix(const WeightMap&, const std::string&)> layer_grad;
};

// Sum over tasks of the batch-mean loss on each task's dataset.
double multitask_loss(const ModelSpec& spec, const WeightMap& backbone,
                      const std::vector<Matrix>& heads, const std::vector<Dataset>& data,
                      LossKind kind);

// Probe over the summed per-task losses; heads and data are captured by value.
LossProbe make_suite_loss_probe(const ModelSpec& spec, std::vector<Matrix> heads,
                                std::vector<Dataset> data, LossKind kind);

struct SweepSettings {
  std::size_t excluded_task = 0;
  double lambda = 0.3;
  // Per layer, components 0, stride, 2*stride, ... below floor(top_fraction*k).
  double top_fraction = 0.1;
  std::size_t stride = 1;
  LossKind loss = LossKind::cross_entropy;
};

struct SweepRow {
  std::size_t component = 0;    // global index: components of earlier layers first
  std::size_t layer_index = 0;
  std::size_t local_index = 0;  // component index within its layer
  double sigma = 0.0;
  double net = 0.0;             // always the sum of per_task
  std::vector<double> per_task;
};

struct SweepReport {
  std::size_t excluded_task = 0;
  double lambda = 0.0;
  std::vector<SweepRow> rows;
};

// Holds task i out of the merge, then measures per-task loss deltas from
// re-adding each of task i's leading singular components one at a time:
// dL_t(r) = L_t(merged + lambda * s_ir) - L_t(merged).
SweepReport component_sweep(const ModelSpec& spec, const TaskVectorSet& vectors,
                            const SpectralSet& set, const std::vector<Matrix>& heads,
                            const std::vector<Dataset>& data, const SweepSettings& settings);

void write_sweep_csv(const SweepReport& report, std::size_t num_tasks,
                     const std::filesystem::path& path);

// One rank-1 direction of one layer: direction is the unit-Frobenius outer
// product u_r v_r^T and sigma its singular value.
struct LayerComponent {
  std::string layer;
  Matrix direction;
  double sigma = 0.0;
};

struct TaylorRow {
  std::size_t component = 0;
  double first_order = 0.0;  // sigma * <grad, direction>
  double quadratic = 0.0;    // sigma^2 * <direction, H direction>, central FD
  double direct = 0.0;       // L(theta + sigma * direction) - L(theta)
};

// Curvature probe step: 1e-4 * (1 + |layer|_F / sqrt(elements)).
double default_curvature_epsilon(const Matrix& layer_weights);

// Non-finite results throw NumericalError (extreme epsilon).
TaylorRow taylor_terms(const LossProbe& probe, const WeightMap& theta,
                       const LayerComponent& comp, double epsilon);

void write_taylor_csv(const std::vector<TaylorRow>& rows, const std::filesystem::path& path);

// L(theta+si+sj) - L(theta+si) - L(theta+sj) + L(theta), evaluated as
// (L_joint + L_base) - (L_i + L_j) so swapping the arguments is bit-exact.
double joint_interaction(const LossProbe& probe, const WeightMap& theta,
                         const std::string& layer, const Matrix& s_i, const Matrix& s_j);

struct RankRow {
  std::size_t task = 0;
  std::size_t layer_index = 0;
  std::size_t learned = 0;    // active mask bits
  std::size_t intrinsic = 0;  // components reaching the energy fraction
};

struct RankReport {
  std::vector<RankRow> rows;
  double correlation = 0.0;  // Spearman over (task, layer) pairs
  double energy_fraction = 0.95;
};

RankReport rank_report(const MaskState& state, const SpectralSet& set,
                       double energy_fraction = 0.95);

void write_rank_csv(const RankReport& report, const std::vector<std::string>& layers,
                    const std::filesystem::path& path);

// Tie-averaged rank correlation; 0 when either side has zero variance.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

// The adaptation loop driven by labeled cross-entropy instead of entropy: an
// upper-bound reference for what the unsupervised objective can reach.
AdaptResult supervised_oracle_adapt(const ModelSpec& spec, const WeightMap& base,
                                    const SpectralSet& set, const std::vector<Matrix>& heads,
                                    const std::vector<Dataset>& data, MaskState state,
                                    AdamState adam, const AdaptSettings& settings);

// One row per (task, layer), one 0/1 cell per component index, columns padded
// blank past each layer's count; final "cumulative" row counts active bits
// per component index across all rows.
void export_mask_heatmap(const MaskState& state, const std::vector<std::string>& layers,
                         const std::filesystem::path& path);

}  // namespace adarank
