#include "adarank/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "adarank/analysis.hpp"
#include "adarank/csv.hpp"
#include "adarank/error.hpp"
#include "adarank/version.hpp"

namespace adarank {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path ensure_out_dir(const RunConfig& config) {
  fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

json base_manifest(const RunConfig& config, const char* command) {
  json m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = command;
  m["config_digest"] = config_digest(config);
  m["inputs"] = json::object();
  m["outputs"] = json::object();
  return m;
}

void write_manifest(const fs::path& dir, const char* command, const json& manifest) {
  const fs::path path = dir / (std::string(command) + "_manifest.json");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void record_file(json& manifest, const char* section, const fs::path& path) {
  manifest[section][path.filename().string()] = digest_file(path);
}

fs::path require_file(const fs::path& dir, const char* name, const char* hint) {
  fs::path path = dir / name;
  if (!fs::exists(path)) {
    throw IoError("missing '" + path.string() + "'; " + hint);
  }
  return path;
}

// The pieces most commands need: suite, model spec, checkpoints, heads.
struct Workspace {
  Suite suite;
  ModelSpec spec;
  Checkpoint pretrained;
  std::vector<Checkpoint> tasks;
  std::vector<WeightMap> backbones;
  std::vector<Matrix> heads;
};

Suite load_suite_checked(const fs::path& dir, json* manifest_out = nullptr) {
  const fs::path path = require_file(dir, "suite.adrk", "run the gen command first");
  return load_suite(path, manifest_out);
}

ModelSpec spec_for_suite(const RunConfig& config, const Suite& suite) {
  ModelSpec spec;
  if (suite.empty()) throw ConfigError("suite has no tasks");
  spec.input_dim = suite.front().train.inputs.cols();
  spec.hidden_dims = config.model.hidden_dims;
  spec.activation = config.model.activation;
  spec.classes_per_task.clear();
  for (const TaskData& task : suite) spec.classes_per_task.push_back(task.num_classes);
  spec.validate();
  return spec;
}

Workspace load_workspace(const RunConfig& config, const fs::path& dir, json& manifest) {
  Workspace ws;
  const fs::path suite_path = require_file(dir, "suite.adrk", "run the gen command first");
  ws.suite = load_suite(suite_path);
  record_file(manifest, "inputs", suite_path);
  ws.spec = spec_for_suite(config, ws.suite);

  const fs::path pre_path = require_file(dir, "pretrained.adrk", "run the train command first");
  ws.pretrained = load_checkpoint(pre_path);
  record_file(manifest, "inputs", pre_path);

  for (std::size_t t = 0; t < ws.suite.size(); ++t) {
    const std::string name = "task" + std::to_string(t) + ".adrk";
    const fs::path path = require_file(dir, name.c_str(), "run the train command first");
    ws.tasks.push_back(load_checkpoint(path));
    record_file(manifest, "inputs", path);
    ws.backbones.push_back(ws.tasks.back().backbone);
    const auto it = ws.tasks.back().heads.find(static_cast<int>(t));
    if (it == ws.tasks.back().heads.end()) {
      throw IoError("'" + path.string() + "' is missing its task head");
    }
    ws.heads.push_back(it->second);
  }
  return ws;
}

std::vector<Dataset> test_datasets(const Suite& suite) {
  std::vector<Dataset> data;
  data.reserve(suite.size());
  for (const TaskData& task : suite) data.push_back(task.test);
  return data;
}

fs::path resolve_mask_path(const RunConfig& config, const fs::path& dir) {
  if (!config.merge.mask_file) {
    throw ConfigError("merge method 'masked' needs merge.mask_file (run the adapt command)");
  }
  fs::path p(*config.merge.mask_file);
  return p.is_absolute() ? p : dir / p;
}

MaskState init_mask_from_config(const RunConfig& config, const SpectralSet& set) {
  const LambdaMap lambda0 =
      LambdaMap::uniform(set.num_tasks(), set.num_layers(), config.merge.lambda);
  MaskState state = init_mask(config.adapt.init_policy, set, config.adapt.temperature, lambda0,
                              config.adapt.init_fraction);
  state.learn_mask = config.adapt.learn_mask;
  state.learn_lambda = config.adapt.learn_lambda;
  state.range_restriction = config.adapt.range_restriction;
  return state;
}

AdaptSettings adapt_settings_from_config(const RunConfig& config) {
  AdaptSettings settings;
  settings.steps = config.adapt.steps;
  settings.batch_size = config.adapt.batch_size;
  settings.seed = config.adapt.seed;
  settings.data_fraction = config.adapt.data_fraction;
  settings.reduction = config.adapt.reduction;
  settings.adam.learning_rate = config.adapt.learning_rate;
  settings.adam.beta1 = config.adapt.beta1;
  settings.adam.beta2 = config.adapt.beta2;
  settings.adam.epsilon = config.adapt.epsilon;
  return settings;
}

json accuracy_to_json(const AccuracyTable& table) {
  return {{"per_task", table.per_task}, {"mean", table.mean}};
}

// One accuracy row: model label, per-task accuracies, unweighted mean.
void accuracy_row(CsvWriter& csv, const std::string& label, const std::vector<double>& per_task,
                  double mean) {
  std::vector<std::string> cells = {label};
  for (double a : per_task) cells.push_back(format_g17(a));
  cells.push_back(format_g17(mean));
  csv.row(cells);
}

}  // namespace

void cmd_gen(const RunConfig& raw, bool force) {
  const RunConfig config = resolve_seeds(raw);
  validate_run_config(config);
  const fs::path dir = ensure_out_dir(config);
  const fs::path suite_path = dir / "suite.adrk";
  if (fs::exists(suite_path) && !force) {
    throw ConfigError("'" + suite_path.string() + "' exists; pass --force to regenerate");
  }

  const Suite suite = generate_suite(config.suite);
  json extra;
  extra["generator"] = {{"tool", kToolName}, {"version", kToolVersion}};
  save_suite(suite, suite_path, extra);

  json manifest = base_manifest(config, "gen");
  record_file(manifest, "outputs", suite_path);
  write_manifest(dir, "gen", manifest);
}

void cmd_train(const RunConfig& raw) {
  const RunConfig config = resolve_seeds(raw);
  validate_run_config(config);
  const fs::path dir = ensure_out_dir(config);

  json manifest = base_manifest(config, "train");
  json suite_manifest;
  const Suite suite = load_suite_checked(dir, &suite_manifest);
  record_file(manifest, "inputs", dir / "suite.adrk");
  const ModelSpec spec = spec_for_suite(config, suite);

  Checkpoint pretrained = pretrain(spec, suite, config.pretrain);
  pretrained.manifest["config_digest"] = config_digest(config);
  const fs::path pre_path = dir / "pretrained.adrk";
  save_checkpoint(pretrained, pre_path);
  record_file(manifest, "outputs", pre_path);
  manifest["pretrain"] = pretrained.manifest["pretrain"];

  json accuracies = json::object();
  for (std::size_t t = 0; t < suite.size(); ++t) {
    Checkpoint ckpt = finetune(spec, pretrained, t, suite[t], config.finetune);
    ckpt.manifest["config_digest"] = config_digest(config);
    const fs::path path = dir / ("task" + std::to_string(t) + ".adrk");
    save_checkpoint(ckpt, path);
    record_file(manifest, "outputs", path);
    accuracies["task_" + std::to_string(t)] = ckpt.manifest["finetune"]["test_accuracy"];
  }
  manifest["finetune_test_accuracy"] = accuracies;
  write_manifest(dir, "train", manifest);
}

void cmd_merge(const RunConfig& raw) {
  const RunConfig config = resolve_seeds(raw);
  validate_run_config(config);
  const fs::path dir = ensure_out_dir(config);

  json manifest = base_manifest(config, "merge");
  Workspace ws = load_workspace(config, dir, manifest);

  const WeightMap* pretrained_ptr = &ws.pretrained.backbone;
  WeightMap merged;
  json method_info;
  method_info["method"] = run_config_to_json(config)["merge"]["method"];
  method_info["lambda"] = config.merge.lambda;

  switch (config.merge.method) {
    case MergeMethod::weight_average: {
      merged = merge_weight_average(ws.backbones);
      break;
    }
    case MergeMethod::task_arithmetic: {
      const TaskVectorSet vectors =
          build_task_vectors(ws.backbones, config.merge.base, pretrained_ptr);
      const LambdaMap lambda = LambdaMap::uniform(
          vectors.num_tasks(), vectors.base.size(), config.merge.lambda);
      merged = merge_task_arithmetic(vectors.base, vectors, lambda);
      break;
    }
    case MergeMethod::topk_svd: {
      const TaskVectorSet vectors =
          build_task_vectors(ws.backbones, config.merge.base, pretrained_ptr);
      const SpectralSet set = decompose(vectors, config.merge.whiten, config.workers);
      const LambdaMap lambda =
          LambdaMap::uniform(set.num_tasks(), set.num_layers(), config.merge.lambda);
      merged = merge_topk(vectors.base, set, config.merge.topk_fraction,
                          config.merge.topk_rank_rule, lambda);
      method_info["topk_fraction"] = config.merge.topk_fraction;
      break;
    }
    case MergeMethod::masked: {
      const fs::path mask_path = resolve_mask_path(config, dir);
      if (!fs::exists(mask_path)) {
        throw IoError("missing mask file '" + mask_path.string() + "'; run the adapt command");
      }
      const MaskState state = load_mask_state(mask_path);
      record_file(manifest, "inputs", mask_path);
      const TaskVectorSet vectors =
          build_task_vectors(ws.backbones, config.merge.base, pretrained_ptr);
      const SpectralSet set = decompose(vectors, config.merge.whiten, config.workers);
      merged = merge_masked(vectors.base, set, binarize_all(state), state.lambda);
      method_info["mask_file"] = mask_path.filename().string();
      break;
    }
  }

  Checkpoint out;
  out.backbone = std::move(merged);
  for (std::size_t t = 0; t < ws.heads.size(); ++t) {
    out.heads[static_cast<int>(t)] = ws.heads[t];
  }
  const AccuracyTable table = evaluate(ws.spec, out.backbone, ws.heads, ws.suite);
  out.manifest["merge"] = method_info;
  out.manifest["accuracy"] = accuracy_to_json(table);
  out.manifest["config_digest"] = config_digest(config);

  const fs::path merged_path = dir / "merged.adrk";
  save_checkpoint(out, merged_path);
  record_file(manifest, "outputs", merged_path);
  manifest["merge"] = method_info;
  manifest["accuracy"] = accuracy_to_json(table);
  write_manifest(dir, "merge", manifest);
}

void cmd_adapt(const RunConfig& raw) {
  const RunConfig config = resolve_seeds(raw);
  validate_run_config(config);
  const fs::path dir = ensure_out_dir(config);

  json manifest = base_manifest(config, "adapt");
  Workspace ws = load_workspace(config, dir, manifest);

  const TaskVectorSet vectors =
      build_task_vectors(ws.backbones, config.merge.base, &ws.pretrained.backbone);
  const SpectralSet set = decompose(vectors, config.merge.whiten, config.workers);

  MaskState state = init_mask_from_config(config, set);
  const AdaptSettings settings = adapt_settings_from_config(config);
  const fs::path mask_path = dir / "mask.adrk";
  const fs::path trace_path = dir / "adapt_trace.csv";

  AdaptTrace trace;
  if (config.adapt.steps == 0) {
    // nothing to optimize: persist the initialization and an empty trace
  } else {
    std::vector<UnlabeledStream> streams;
    streams.reserve(ws.suite.size());
    for (const TaskData& task : ws.suite) {
      streams.push_back(make_stream(task.test, config.adapt.data_fraction));
    }
    AdamState adam;
    adam.config = settings.adam;
    try {
      AdaptResult result = adapt(ws.spec, vectors.base, set, ws.heads, streams, std::move(state),
                                 std::move(adam), settings);
      state = std::move(result.state);
      trace = std::move(result.trace);
    } catch (const AdaptDivergence& e) {
      // leave the partial trace behind for inspection, then surface the error
      write_trace_csv(e.trace(), set.num_tasks(), set.layers, trace_path);
      throw;
    }
  }

  json extra;
  extra["config_digest"] = config_digest(config);
  save_mask_state(state, set.layers, mask_path, extra);
  write_trace_csv(trace, set.num_tasks(), set.layers, trace_path);
  record_file(manifest, "outputs", mask_path);
  record_file(manifest, "outputs", trace_path);
  manifest["adapt"] = {{"steps", config.adapt.steps},
                       {"data_fraction", config.adapt.data_fraction}};
  if (!trace.records.empty()) {
    manifest["adapt"]["initial_entropy"] = trace.records.front().total_loss;
    manifest["adapt"]["final_entropy"] = trace.records.back().total_loss;
  }
  write_manifest(dir, "adapt", manifest);
}

void cmd_eval(const RunConfig& raw) {
  const RunConfig config = resolve_seeds(raw);
  validate_run_config(config);
  const fs::path dir = ensure_out_dir(config);

  json manifest = base_manifest(config, "eval");
  Workspace ws = load_workspace(config, dir, manifest);

  const fs::path csv_path = dir / "accuracy.csv";
  CsvWriter csv(csv_path);
  std::vector<std::string> header = {"model"};
  for (std::size_t t = 0; t < ws.suite.size(); ++t) header.push_back("task_" + std::to_string(t));
  header.push_back("mean");
  csv.row(header);

  // Each fine-tuned model on its own task: the per-task ceiling.
  std::vector<double> individual;
  for (std::size_t t = 0; t < ws.suite.size(); ++t) {
    individual.push_back(
        evaluate_task(ws.spec, ws.backbones[t], ws.heads[t], ws.suite[t].test));
  }
  double individual_mean = 0.0;
  for (double a : individual) individual_mean += a;
  individual_mean /= static_cast<double>(individual.size());
  accuracy_row(csv, "individual", individual, individual_mean);
  manifest["accuracy"]["individual"] = {{"per_task", individual}, {"mean", individual_mean}};

  const fs::path merged_path = dir / "merged.adrk";
  if (fs::exists(merged_path)) {
    const Checkpoint merged = load_checkpoint(merged_path);
    record_file(manifest, "inputs", merged_path);
    const AccuracyTable table = evaluate(ws.spec, merged.backbone, ws.heads, ws.suite);
    accuracy_row(csv, "merged", table.per_task, table.mean);
    manifest["accuracy"]["merged"] = accuracy_to_json(table);
  }
  csv.close();
  record_file(manifest, "outputs", csv_path);
  write_manifest(dir, "eval", manifest);
}

void cmd_analyze(const RunConfig& raw) {
  const RunConfig config = resolve_seeds(raw);
  validate_run_config(config);
  const fs::path dir = ensure_out_dir(config);

  json manifest = base_manifest(config, "analyze");
  const std::set<std::string> selected(config.analysis.selections.begin(),
                                       config.analysis.selections.end());
  if (selected.empty()) {
    manifest["warning"] = "no analyses selected";
    write_manifest(dir, "analyze", manifest);
    return;
  }
  manifest["selections"] = config.analysis.selections;

  Workspace ws = load_workspace(config, dir, manifest);
  const TaskVectorSet vectors =
      build_task_vectors(ws.backbones, config.merge.base, &ws.pretrained.backbone);
  const SpectralSet set = decompose(vectors, config.merge.whiten, config.workers);
  const std::vector<Dataset> data = test_datasets(ws.suite);
  const double sweep_lambda = config.analysis.sweep_lambda.value_or(config.merge.lambda);

  if (selected.count("sweep") != 0) {
    SweepSettings settings;
    settings.excluded_task = config.analysis.sweep_excluded_task;
    settings.lambda = sweep_lambda;
    settings.top_fraction = config.analysis.sweep_top_fraction;
    settings.stride = config.analysis.sweep_stride;
    settings.loss = config.analysis.sweep_loss;
    const SweepReport report = component_sweep(ws.spec, vectors, set, ws.heads, data, settings);
    const fs::path path = dir / "sweep.csv";
    write_sweep_csv(report, ws.suite.size(), path);
    record_file(manifest, "outputs", path);
    manifest["sweep"] = {{"rows", report.rows.size()}, {"lambda", sweep_lambda}};
  }

  if (selected.count("taylor") != 0) {
    const std::size_t i = config.analysis.sweep_excluded_task;
    if (i >= set.num_tasks()) throw ConfigError("analysis: sweep_excluded_task out of range");
    // Same held-out merge and component window as the sweep, so rows align.
    WeightMap merged;
    for (std::size_t n = 0; n < vectors.base.size(); ++n) {
      Matrix acc = vectors.base.matrix(n);
      for (std::size_t j = 0; j < vectors.num_tasks(); ++j) {
        if (j == i) continue;
        acc += sweep_lambda * vectors.per_task[j].at(vectors.base.name(n));
      }
      merged.add(vectors.base.name(n), std::move(acc));
    }
    const LossProbe probe =
        make_suite_loss_probe(ws.spec, ws.heads, data, config.analysis.sweep_loss);
    std::vector<TaylorRow> rows;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < set.num_layers(); ++l) {
      const ThinSvd& f = set.at(i, l);
      const std::size_t k = f.num_components();
      const auto window = static_cast<std::size_t>(
          std::floor(config.analysis.sweep_top_fraction * static_cast<double>(k)));
      const double epsilon = default_curvature_epsilon(merged.at(set.layers[l]));
      for (std::size_t r = 0; r < window; r += config.analysis.sweep_stride) {
        std::vector<double> unit(k, 0.0);
        unit[r] = 1.0;
        LayerComponent comp;
        comp.layer = set.layers[l];
        comp.direction = scaled_outer_sum(f, unit);
        comp.sigma = sweep_lambda * f.s[r];
        TaylorRow row = taylor_terms(probe, merged, comp, epsilon);
        row.component = offset + r;
        rows.push_back(row);
      }
      offset += k;
    }
    const fs::path path = dir / "taylor.csv";
    write_taylor_csv(rows, path);
    record_file(manifest, "outputs", path);
    manifest["taylor"] = {{"rows", rows.size()}};
  }

  const bool needs_mask = selected.count("ranks") != 0 || selected.count("heatmap") != 0;
  if (needs_mask) {
    const fs::path mask_path = require_file(dir, "mask.adrk", "run the adapt command first");
    const MaskState state = load_mask_state(mask_path);
    record_file(manifest, "inputs", mask_path);
    if (selected.count("ranks") != 0) {
      const RankReport report = rank_report(state, set, config.analysis.energy_fraction);
      const fs::path path = dir / "ranks.csv";
      write_rank_csv(report, set.layers, path);
      record_file(manifest, "outputs", path);
      manifest["ranks"] = {{"correlation", report.correlation},
                           {"energy_fraction", report.energy_fraction}};
    }
    if (selected.count("heatmap") != 0) {
      const fs::path path = dir / "heatmap.csv";
      export_mask_heatmap(state, set.layers, path);
      record_file(manifest, "outputs", path);
    }
  }

  if (selected.count("oracle") != 0) {
    MaskState state = init_mask_from_config(config, set);
    AdaptSettings settings = adapt_settings_from_config(config);
    settings.steps = config.analysis.oracle_steps;
    std::vector<Dataset> sliced;
    sliced.reserve(data.size());
    for (const Dataset& d : data) {
      const UnlabeledStream stream = make_stream(d, config.adapt.data_fraction);
      Dataset cut;
      cut.inputs = stream.inputs;
      cut.labels.assign(d.labels.begin(),
                        d.labels.begin() + static_cast<std::ptrdiff_t>(stream.inputs.rows()));
      sliced.push_back(std::move(cut));
    }
    AdamState adam;
    adam.config = settings.adam;
    const AdaptResult result = supervised_oracle_adapt(ws.spec, vectors.base, set, ws.heads,
                                                       sliced, std::move(state), std::move(adam),
                                                       settings);
    const fs::path path = dir / "oracle_trace.csv";
    write_trace_csv(result.trace, set.num_tasks(), set.layers, path, "cross_entropy");
    record_file(manifest, "outputs", path);
    manifest["oracle"] = {{"steps", config.analysis.oracle_steps}};
    if (!result.trace.records.empty()) {
      manifest["oracle"]["final_cross_entropy"] = result.trace.records.back().total_loss;
    }
  }

  write_manifest(dir, "analyze", manifest);
}

}  // namespace adarank
