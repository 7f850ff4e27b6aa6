#pragma once

#include "adarank/config.hpp"

namespace adarank {

// Subcommand bodies. Each reads and writes only under config.out_dir, writes
// a <command>_manifest.json recording the config digest plus input and output
// content digests, and reports failure by throwing (the CLI maps the error
// taxonomy to exit codes). Outputs carry no timestamps or absolute paths, so
// equal inputs and seeds reproduce byte-identical files.
//
// Files: gen -> suite.adrk; train -> pretrained.adrk, task<t>.adrk;
// merge -> merged.adrk; adapt -> mask.adrk, adapt_trace.csv; eval ->
// accuracy.csv; analyze -> sweep.csv / taylor.csv / ranks.csv / heatmap.csv /
// oracle_trace.csv per the selection list.

void cmd_gen(const RunConfig& config, bool force);
void cmd_train(const RunConfig& config);
void cmd_merge(const RunConfig& config);
void cmd_adapt(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_analyze(const RunConfig& config);

}  // namespace adarank
