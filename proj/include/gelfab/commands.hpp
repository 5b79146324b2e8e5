#pragma once

// Subcommands of the gelfab tool. Each reads its inputs and writes its
// outputs at the paths named in the run configuration.

#include <cstdint>
#include <string>
#include <vector>

#include "gelfab/config.hpp"

namespace gelfab {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
  kExitIncompatible = 5,
};

struct GenSummary {
  std::size_t fabrics = 0;
  std::size_t observations = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

struct IngestSummary {
  std::size_t fabrics = 0;
  std::size_t observations = 0;
  std::vector<std::string> errors;
};

struct TrainSummary {
  std::size_t iterations = 0;
  double final_loss = 0.0;
};

GenSummary cmd_gen(const RunConfig& cfg);
IngestSummary cmd_ingest(const RunConfig& cfg, const std::string& root);
TrainSummary cmd_train(const RunConfig& cfg);
std::vector<PrecisionCell> cmd_eval(const RunConfig& cfg, std::uint32_t workers = 1);
ConfusionMatrix cmd_confuse(const RunConfig& cfg, std::uint32_t workers = 1);

/// Clusters fabrics on normalized attributes and marks the test split.
/// Fabrics whose attributes do not vary all land in cluster 0.
void cluster_and_split(Dataset& ds, std::size_t k, int n_test, std::uint64_t seed);

/// Parses arguments and dispatches; returns a process exit code.
int run_cli(int argc, char** argv);

}  // namespace gelfab
