#pragma once
// Command implementations behind the CLI. Exposed as plain functions so tests
// can drive them in-process; run_cli owns argument parsing and exit-code
// mapping (0 ok, 2 usage/config, 3 data, 4 numeric abort).

#include "tkg/config.hpp"

namespace tkg {

int run_cli(int argc, char** argv);

int cmd_train(const RunConfig& rc);
int cmd_eval(const RunConfig& rc);
int cmd_ablate(const RunConfig& rc);
int cmd_analyze(const RunConfig& rc);
int cmd_synth(const RunConfig& rc);
int cmd_inspect(const RunConfig& rc);

// shared data pipeline: load, augment, split, optional horizon truncation
TkgDataset load_pipeline(const RunConfig& rc);

} // namespace tkg
