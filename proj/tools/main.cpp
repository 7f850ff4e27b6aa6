#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "adarank/commands.hpp"
#include "adarank/error.hpp"
#include "adarank/version.hpp"

namespace {

// 0 ok, 2 bad config or usage, 3 numerical failure, 4 I/O failure, 1 other.
int run(int argc, char** argv) {
  CLI::App app{"model merging and test-time adaptation workbench"};
  app.set_version_flag("--version", std::string(adarank::kToolName) + " " +
                                        std::string(adarank::kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::string profile;
  std::uint64_t seed = 0;
  int workers = 0;
  bool force = false;

  app.add_option("--config", config_path, "JSON run config; missing keys keep defaults");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_option("--seed", seed, "master seed (overrides config, re-derives block seeds)");
  app.add_option("--profile", profile, "preset: ta, cart, tsvm, adamerging-ablation, adarank");
  app.add_option("--workers", workers, "max worker threads (overrides config)");

  auto* gen = app.add_subcommand("gen", "generate the task suite");
  gen->add_flag("--force", force, "overwrite an existing suite");
  auto* train = app.add_subcommand("train", "pretrain and fine-tune per-task checkpoints");
  auto* merge = app.add_subcommand("merge", "merge fine-tuned checkpoints into one model");
  auto* adapt = app.add_subcommand("adapt", "tune masks and coefficients on unlabeled test data");
  auto* eval = app.add_subcommand("eval", "write the accuracy table");
  auto* analyze = app.add_subcommand("analyze", "run the selected diagnostics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  adarank::RunConfig config;
  if (!profile.empty()) adarank::apply_profile(config, profile);
  if (!config_path.empty()) config = adarank::load_run_config(config_path, config);
  if (app.count("--seed") != 0) {
    config.seed = seed;
    // a fresh master seed re-derives every block seed
    config.suite.rotation_seed = 0;
    config.suite.data_seed = 0;
    config.pretrain.seed = 0;
    config.finetune.seed = 0;
    config.adapt.seed = 0;
  }
  if (!out_dir.empty()) config.out_dir = out_dir;
  if (app.count("--workers") != 0) config.workers = workers;

  if (gen->parsed()) {
    adarank::cmd_gen(config, force);
  } else if (train->parsed()) {
    adarank::cmd_train(config);
  } else if (merge->parsed()) {
    adarank::cmd_merge(config);
  } else if (adapt->parsed()) {
    adarank::cmd_adapt(config);
  } else if (eval->parsed()) {
    adarank::cmd_eval(config);
  } else if (analyze->parsed()) {
    adarank::cmd_analyze(config);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const adarank::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const adarank::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const adarank::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
