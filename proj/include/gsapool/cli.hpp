#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gsapool/model.hpp"

namespace gsapool {

/// A fully resolved run request: command, dataset location and every model
/// and training knob. Flag values take precedence over config-file entries,
/// which take precedence over the defaults below.
struct RunSpec {
  std::string command;  // train | ablate | stats | export-embeddings | gradcheck
  std::string dataset = "synthetic";
  std::string data_dir = "data";
  std::string out_dir = "runs";
  std::string axis;  // ablate only: ratio | alpha | kernel | fusion
  int synthetic_size = 500;
  int jobs = 1;
  ModelConfig model;
  TrainConfig train;
  bool alpha_overridden = false;  // otherwise 0.6 on DD, 0.4 elsewhere
};

struct UsageError : std::runtime_error {
  int exit_code;
  explicit UsageError(const std::string& msg, int code = 2)
      : std::runtime_error(msg), exit_code(code) {}
};

/// Parses `args` (without the program name; args[0] is the command).
/// Throws UsageError on unknown commands, flags or bad values.
RunSpec parse_run_spec(const std::vector<std::string>& args);

/// Executes a run; returns the process exit status.
int run(const RunSpec& spec);

int cli_main(int argc, char** argv);

// exposed for tests
Dataset load_dataset_for(const RunSpec& spec);
std::string canonical_dataset_name(const std::string& name);

}  // namespace gsapool
