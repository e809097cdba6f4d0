#pragma once

#include <map>
#include <string>

#include "flashdistill/config.hpp"

namespace flashdistill {

// Registry of valid keys (with defaults) per CLI command.
const std::map<std::string, std::string>& default_config(const std::string& command);

// Each command resolves its config, writes a config_resolved.json snapshot
// into its run directory, and is idempotent per run_id: a completed run with
// a matching snapshot is not redone, a conflicting snapshot is an error.
// Returns the run directory.
std::string cmd_train_teacher(const RunConfig& cfg);
std::string cmd_distill(const RunConfig& cfg);
std::string cmd_sample(const RunConfig& cfg);
std::string cmd_eval(const RunConfig& cfg);
std::string cmd_ablate(const RunConfig& cfg);

// Full CLI: flashdistill <command> [--config file] [--key value]...
// Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace flashdistill
