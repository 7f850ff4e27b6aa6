#include "adarank/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "adarank/checkpoint.hpp"
#include "adarank/error.hpp"
#include "adarank/rng.hpp"

namespace adarank {
namespace {

using nlohmann::json;

// Enum spellings used in config files and manifests.

template <typename E>
struct EnumName {
  const char* name;
  E value;
};

constexpr EnumName<Activation> kActivations[] = {
    {"relu", Activation::relu}, {"tanh", Activation::tanh}};
constexpr EnumName<Optimizer> kOptimizers[] = {
    {"sgd", Optimizer::sgd}, {"adam", Optimizer::adam}};
constexpr EnumName<MergeMethod> kMethods[] = {{"weight_average", MergeMethod::weight_average},
                                              {"task_arithmetic", MergeMethod::task_arithmetic},
                                              {"topk_svd", MergeMethod::topk_svd},
                                              {"masked", MergeMethod::masked}};
constexpr EnumName<BaseKind> kBases[] = {{"pretrained", BaseKind::pretrained},
                                         {"mean_of_finetuned", BaseKind::mean_of_finetuned}};
constexpr EnumName<TopkRankRule> kRankRules[] = {
    {"fraction", TopkRankRule::fraction}, {"per_task_share", TopkRankRule::per_task_share}};
constexpr EnumName<InitPolicy> kInitPolicies[] = {
    {"all_ones", InitPolicy::all_ones},
    {"top_fraction", InitPolicy::top_fraction},
    {"per_task_share", InitPolicy::per_task_share}};
constexpr EnumName<TaskReduction> kReductions[] = {{"sum", TaskReduction::sum},
                                                   {"mean", TaskReduction::mean}};
constexpr EnumName<LossKind> kLosses[] = {{"entropy", LossKind::entropy},
                                          {"cross_entropy", LossKind::cross_entropy}};

template <typename E, std::size_t N>
const char* enum_name(const EnumName<E> (&table)[N], E value) {
  for (const auto& row : table) {
    if (row.value == value) return row.name;
  }
  throw ConfigError("unknown enum value");
}

template <typename E, std::size_t N>
E enum_value(const EnumName<E> (&table)[N], const std::string& name, const char* field) {
  for (const auto& row : table) {
    if (name == row.name) return row.value;
  }
  std::string choices;
  for (const auto& row : table) {
    if (!choices.empty()) choices += ", ";
    choices += row.name;
  }
  throw ConfigError(std::string("config: ") + field + " must be one of {" + choices +
                    "}, got '" + name + "'");
}

void expect_keys(const json& j, const char* block, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config: ") + block + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&key](const char* k) { return key == k; }) == allowed.end()) {
      throw ConfigError(std::string("config: unknown key '") + key + "' in " + block);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<T>();
  }
}

template <typename E, std::size_t N>
void read_enum(const json& j, const char* key, const EnumName<E> (&table)[N], E& out) {
  if (!j.contains(key)) return;
  out = enum_value(table, j.at(key).get<std::string>(), key);
}

void parse_suite(const json& j, TaskSuiteSpec& s) {
  expect_keys(j, "suite",
              {"num_tasks", "input_dim", "classes_per_task", "difficulty_profile",
               "train_samples_per_class", "test_samples_per_class", "cluster_spread",
               "rotation_seed", "data_seed"});
  read(j, "num_tasks", s.num_tasks);
  read(j, "input_dim", s.input_dim);
  read(j, "classes_per_task", s.classes_per_task);
  read(j, "difficulty_profile", s.difficulty_profile);
  read(j, "train_samples_per_class", s.train_samples_per_class);
  read(j, "test_samples_per_class", s.test_samples_per_class);
  read(j, "cluster_spread", s.cluster_spread);
  read(j, "rotation_seed", s.rotation_seed);
  read(j, "data_seed", s.data_seed);
}

json suite_to_json(const TaskSuiteSpec& s) {
  return {{"num_tasks", s.num_tasks},
          {"input_dim", s.input_dim},
          {"classes_per_task", s.classes_per_task},
          {"difficulty_profile", s.difficulty_profile},
          {"train_samples_per_class", s.train_samples_per_class},
          {"test_samples_per_class", s.test_samples_per_class},
          {"cluster_spread", s.cluster_spread},
          {"rotation_seed", s.rotation_seed},
          {"data_seed", s.data_seed}};
}

}  // namespace

RunConfig::RunConfig() {
  // config-level zero means "derive from the master seed"; the library-level
  // struct defaults stay fixed values for direct use.
  suite.rotation_seed = 0;
  suite.data_seed = 0;
  pretrain.seed = 0;
  finetune.seed = 0;
  adapt.seed = 0;
}

RunConfig resolve_seeds(const RunConfig& config) {
  RunConfig out = config;
  if (out.suite.rotation_seed == 0) out.suite.rotation_seed = Rng::mix(out.seed, 1);
  if (out.suite.data_seed == 0) out.suite.data_seed = Rng::mix(out.seed, 2);
  if (out.pretrain.seed == 0) out.pretrain.seed = Rng::mix(out.seed, 3);
  if (out.finetune.seed == 0) out.finetune.seed = Rng::mix(out.seed, 4);
  if (out.adapt.seed == 0) out.adapt.seed = Rng::mix(out.seed, 5);
  return out;
}

void validate_run_config(const RunConfig& config) {
  config.suite.validate();
  if (config.workers < 1) throw ConfigError("config: workers must be at least 1");
  if (config.model.hidden_dims.empty()) {
    throw ConfigError("config: model needs at least one hidden layer");
  }
  for (std::size_t h : config.model.hidden_dims) {
    if (h == 0) throw ConfigError("config: hidden layer width must be positive");
  }
  if (!(config.merge.lambda == config.merge.lambda) || std::isinf(config.merge.lambda)) {
    throw ConfigError("config: merge lambda must be finite");
  }
  if (!(config.merge.topk_fraction > 0.0) || config.merge.topk_fraction > 1.0) {
    throw ConfigError("config: topk_fraction must lie in (0, 1]");
  }
  if (!(config.adapt.temperature > 0.0)) {
    throw ConfigError("config: adapt temperature must be positive");
  }
  if (config.adapt.batch_size == 0) throw ConfigError("config: adapt batch size must be positive");
  if (!(config.adapt.data_fraction > 0.0) || config.adapt.data_fraction > 1.0) {
    throw ConfigError("config: data_fraction must lie in (0, 1]");
  }
  if (config.adapt.init_policy == InitPolicy::top_fraction &&
      (config.adapt.init_fraction < 0.0 || config.adapt.init_fraction > 1.0)) {
    throw ConfigError("config: init_fraction must lie in [0, 1]");
  }
  if (config.adapt.range_restriction &&
      (*config.adapt.range_restriction <= 0.0 || *config.adapt.range_restriction > 1.0)) {
    throw ConfigError("config: range_restriction must lie in (0, 1]");
  }
  if (!(config.adapt.learning_rate > 0.0)) {
    throw ConfigError("config: adapt learning rate must be positive");
  }
  if (!(config.analysis.sweep_top_fraction > 0.0) || config.analysis.sweep_top_fraction > 1.0) {
    throw ConfigError("config: sweep_top_fraction must lie in (0, 1]");
  }
  if (config.analysis.sweep_stride == 0) {
    throw ConfigError("config: sweep_stride must be positive");
  }
  if (!(config.analysis.energy_fraction > 0.0) || config.analysis.energy_fraction > 1.0) {
    throw ConfigError("config: energy_fraction must lie in (0, 1]");
  }
  static const std::set<std::string> kSelections = {"sweep", "taylor", "ranks", "heatmap",
                                                    "oracle"};
  for (const std::string& s : config.analysis.selections) {
    if (kSelections.find(s) == kSelections.end()) {
      throw ConfigError("config: unknown analysis selection '" + s + "'");
    }
  }
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  j["suite"] = suite_to_json(c.suite);
  j["model"] = {{"hidden_dims", c.model.hidden_dims},
                {"activation", enum_name(kActivations, c.model.activation)}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"learning_rate", c.pretrain.learning_rate},
                   {"batch_size", c.pretrain.batch_size},
                   {"seed", c.pretrain.seed}};
  j["finetune"] = {{"epochs", c.finetune.epochs},
                   {"learning_rate", c.finetune.learning_rate},
                   {"batch_size", c.finetune.batch_size},
                   {"optimizer", enum_name(kOptimizers, c.finetune.optimizer)},
                   {"seed", c.finetune.seed}};
  j["merge"] = {{"method", enum_name(kMethods, c.merge.method)},
                {"base", enum_name(kBases, c.merge.base)},
                {"whiten", c.merge.whiten},
                {"lambda", c.merge.lambda},
                {"topk_fraction", c.merge.topk_fraction},
                {"topk_rank_rule", enum_name(kRankRules, c.merge.topk_rank_rule)},
                {"mask_file", c.merge.mask_file ? json(*c.merge.mask_file) : json()}};
  j["adapt"] = {{"steps", c.adapt.steps},
                {"learning_rate", c.adapt.learning_rate},
                {"beta1", c.adapt.beta1},
                {"beta2", c.adapt.beta2},
                {"epsilon", c.adapt.epsilon},
                {"batch_size", c.adapt.batch_size},
                {"seed", c.adapt.seed},
                {"data_fraction", c.adapt.data_fraction},
                {"temperature", c.adapt.temperature},
                {"learn_mask", c.adapt.learn_mask},
                {"learn_lambda", c.adapt.learn_lambda},
                {"init_policy", enum_name(kInitPolicies, c.adapt.init_policy)},
                {"init_fraction", c.adapt.init_fraction},
                {"range_restriction",
                 c.adapt.range_restriction ? json(*c.adapt.range_restriction) : json()},
                {"reduction", enum_name(kReductions, c.adapt.reduction)}};
  j["analysis"] = {{"selections", c.analysis.selections},
                   {"sweep_excluded_task", c.analysis.sweep_excluded_task},
                   {"sweep_top_fraction", c.analysis.sweep_top_fraction},
                   {"sweep_stride", c.analysis.sweep_stride},
                   {"sweep_loss", enum_name(kLosses, c.analysis.sweep_loss)},
                   {"sweep_lambda",
                    c.analysis.sweep_lambda ? json(*c.analysis.sweep_lambda) : json()},
                   {"oracle_steps", c.analysis.oracle_steps},
                   {"energy_fraction", c.analysis.energy_fraction}};
  return j;
}

RunConfig parse_run_config(const nlohmann::json& j, const RunConfig& base) {
  RunConfig c = base;
  try {
    expect_keys(j, "config",
                {"seed", "out_dir", "workers", "suite", "model", "pretrain", "finetune", "merge",
                 "adapt", "analysis"});
    read(j, "seed", c.seed);
    read(j, "out_dir", c.out_dir);
    read(j, "workers", c.workers);
    if (j.contains("suite")) parse_suite(j.at("suite"), c.suite);
    if (j.contains("model")) {
      const json& m = j.at("model");
      expect_keys(m, "model", {"hidden_dims", "activation"});
      read(m, "hidden_dims", c.model.hidden_dims);
      read_enum(m, "activation", kActivations, c.model.activation);
    }
    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      expect_keys(p, "pretrain", {"epochs", "learning_rate", "batch_size", "seed"});
      read(p, "epochs", c.pretrain.epochs);
      read(p, "learning_rate", c.pretrain.learning_rate);
      read(p, "batch_size", c.pretrain.batch_size);
      read(p, "seed", c.pretrain.seed);
    }
    if (j.contains("finetune")) {
      const json& f = j.at("finetune");
      expect_keys(f, "finetune", {"epochs", "learning_rate", "batch_size", "optimizer", "seed"});
      read(f, "epochs", c.finetune.epochs);
      read(f, "learning_rate", c.finetune.learning_rate);
      read(f, "batch_size", c.finetune.batch_size);
      read_enum(f, "optimizer", kOptimizers, c.finetune.optimizer);
      read(f, "seed", c.finetune.seed);
    }
    if (j.contains("merge")) {
      const json& m = j.at("merge");
      expect_keys(m, "merge",
                  {"method", "base", "whiten", "lambda", "topk_fraction", "topk_rank_rule",
                   "mask_file"});
      read_enum(m, "method", kMethods, c.merge.method);
      read_enum(m, "base", kBases, c.merge.base);
      read(m, "whiten", c.merge.whiten);
      read(m, "lambda", c.merge.lambda);
      read(m, "topk_fraction", c.merge.topk_fraction);
      read_enum(m, "topk_rank_rule", kRankRules, c.merge.topk_rank_rule);
      read_optional(m, "mask_file", c.merge.mask_file);
    }
    if (j.contains("adapt")) {
      const json& a = j.at("adapt");
      expect_keys(a, "adapt",
                  {"steps", "learning_rate", "beta1", "beta2", "epsilon", "batch_size", "seed",
                   "data_fraction", "temperature", "learn_mask", "learn_lambda", "init_policy",
                   "init_fraction", "range_restriction", "reduction"});
      read(a, "steps", c.adapt.steps);
      read(a, "learning_rate", c.adapt.learning_rate);
      read(a, "beta1", c.adapt.beta1);
      read(a, "beta2", c.adapt.beta2);
      read(a, "epsilon", c.adapt.epsilon);
      read(a, "batch_size", c.adapt.batch_size);
      read(a, "seed", c.adapt.seed);
      read(a, "data_fraction", c.adapt.data_fraction);
      read(a, "temperature", c.adapt.temperature);
      read(a, "learn_mask", c.adapt.learn_mask);
      read(a, "learn_lambda", c.adapt.learn_lambda);
      read_enum(a, "init_policy", kInitPolicies, c.adapt.init_policy);
      read(a, "init_fraction", c.adapt.init_fraction);
      read_optional(a, "range_restriction", c.adapt.range_restriction);
      read_enum(a, "reduction", kReductions, c.adapt.reduction);
    }
    if (j.contains("analysis")) {
      const json& a = j.at("analysis");
      expect_keys(a, "analysis",
                  {"selections", "sweep_excluded_task", "sweep_top_fraction", "sweep_stride",
                   "sweep_loss", "sweep_lambda", "oracle_steps", "energy_fraction"});
      read(a, "selections", c.analysis.selections);
      read(a, "sweep_excluded_task", c.analysis.sweep_excluded_task);
      read(a, "sweep_top_fraction", c.analysis.sweep_top_fraction);
      read(a, "sweep_stride", c.analysis.sweep_stride);
      read_enum(a, "sweep_loss", kLosses, c.analysis.sweep_loss);
      read_optional(a, "sweep_lambda", c.analysis.sweep_lambda);
      read(a, "oracle_steps", c.analysis.oracle_steps);
      read(a, "energy_fraction", c.analysis.energy_fraction);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, base);
}

void apply_profile(RunConfig& config, const std::string& name) {
  if (name == "ta") {
    config.merge.method = MergeMethod::task_arithmetic;
    config.merge.base = BaseKind::pretrained;
    config.merge.whiten = false;
    config.merge.lambda = 0.3;
    config.adapt.learn_mask = false;
    config.adapt.learn_lambda = false;
    config.adapt.init_policy = InitPolicy::all_ones;
    config.adapt.steps = 0;
  } else if (name == "cart") {
    config.merge.method = MergeMethod::topk_svd;
    config.merge.base = BaseKind::mean_of_finetuned;
    config.merge.whiten = false;
    config.merge.lambda = 2.3;
    config.merge.topk_fraction = 0.16;
    config.merge.topk_rank_rule = TopkRankRule::fraction;
    config.adapt.init_policy = InitPolicy::top_fraction;
    config.adapt.init_fraction = 0.16;
  } else if (name == "tsvm") {
    config.merge.method = MergeMethod::topk_svd;
    config.merge.base = BaseKind::pretrained;
    config.merge.whiten = true;
    config.merge.lambda = 1.0;
    config.merge.topk_rank_rule = TopkRankRule::per_task_share;
    config.adapt.init_policy = InitPolicy::per_task_share;
  } else if (name == "adamerging-ablation") {
    config.merge.method = MergeMethod::masked;
    config.merge.base = BaseKind::pretrained;
    config.merge.whiten = false;
    config.merge.lambda = 0.3;
    config.merge.mask_file = "mask.adrk";
    config.adapt.learn_mask = false;
    config.adapt.learn_lambda = true;
    config.adapt.init_policy = InitPolicy::all_ones;
  } else if (name == "adarank") {
    config.merge.method = MergeMethod::masked;
    config.merge.base = BaseKind::pretrained;
    config.merge.whiten = false;
    config.merge.lambda = 0.3;
    config.merge.mask_file = "mask.adrk";
    config.adapt.learn_mask = true;
    config.adapt.learn_lambda = true;
    config.adapt.init_policy = InitPolicy::all_ones;
  } else {
    std::string choices;
    for (const std::string& p : profile_names()) {
      if (!choices.empty()) choices += ", ";
      choices += p;
    }
    throw ConfigError("config: unknown profile '" + name + "' (available: " + choices + ")");
  }
}

std::vector<std::string> profile_names() {
  return {"ta", "cart", "tsvm", "adamerging-ablation", "adarank"};
}

std::string config_digest(const RunConfig& config) {
  json j = run_config_to_json(config);
  j.erase("out_dir");
  return digest_string(j.dump());
}

}  // namespace adarank
