#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adarank/adapt.hpp"
#include "adarank/merge.hpp"
#include "adarank/tasks.hpp"

namespace adarank {

struct ModelConfig {
  std::vector<std::size_t> hidden_dims = {64, 64};
  Activation activation = Activation::relu;
};

struct MergeConfig {
  MergeMethod method = MergeMethod::task_arithmetic;
  BaseKind base = BaseKind::pretrained;
  bool whiten = false;
  double lambda = 0.3;
  double topk_fraction = 0.16;
  TopkRankRule topk_rank_rule = TopkRankRule::fraction;
  // Path of a saved mask, resolved against out_dir when relative; required by
  // the masked method, which also takes its per-(task, layer) coefficients
  // from the mask file rather than from `lambda`.
  std::optional<std::string> mask_file;
};

struct AdaptConfig {
  std::size_t steps = 300;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;  // 0: derive from master seed
  double data_fraction = 1.0;
  double temperature = 10.0;
  bool learn_mask = true;
  bool learn_lambda = true;
  InitPolicy init_policy = InitPolicy::all_ones;
  double init_fraction = 0.16;
  std::optional<double> range_restriction;
  TaskReduction reduction = TaskReduction::sum;
};

struct AnalysisConfig {
  // any of: sweep, taylor, ranks, heatmap, oracle
  std::vector<std::string> selections;
  std::size_t sweep_excluded_task = 0;
  double sweep_top_fraction = 0.1;
  std::size_t sweep_stride = 1;
  LossKind sweep_loss = LossKind::cross_entropy;
  std::optional<double> sweep_lambda;  // defaults to merge.lambda
  std::size_t oracle_steps = 300;
  double energy_fraction = 0.95;
};

// Everything a run needs. Block seeds left at 0 are derived from the master
// seed, so one --seed flag re-seeds the whole pipeline while explicit block
// seeds stay pinnable.
struct RunConfig {
  RunConfig();

  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int workers = 1;
  TaskSuiteSpec suite;
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig finetune;
  MergeConfig merge;
  AdaptConfig adapt;
  AnalysisConfig analysis;
};

// Copy with every zero block seed replaced by a fixed mix of the master seed.
RunConfig resolve_seeds(const RunConfig& config);

// Range and consistency checks shared by every command; throws ConfigError.
void validate_run_config(const RunConfig& config);

nlohmann::json run_config_to_json(const RunConfig& config);

// Keys absent from the JSON keep their value from `base`; unknown keys throw.
RunConfig parse_run_config(const nlohmann::json& j, const RunConfig& base = RunConfig());
RunConfig load_run_config(const std::filesystem::path& path,
                          const RunConfig& base = RunConfig());

// Named presets: ta, cart, tsvm, adamerging-ablation, adarank.
void apply_profile(RunConfig& config, const std::string& name);
std::vector<std::string> profile_names();

// Digest of the canonical JSON with out_dir removed: where outputs land must
// not change what they contain.
std::string config_digest(const RunConfig& config);

}  // namespace adarank
