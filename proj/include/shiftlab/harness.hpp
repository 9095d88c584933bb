#pragma once

#include <string>
#include <vector>

#include "shiftlab/config.hpp"

namespace shiftlab {

struct ResultsRow {
  std::string experiment;
  std::string mode;  // train mode or AL strategy
  std::uint64_t seed = 0;
  int round = 0;  // epoch for train runs, AL round otherwise
  double mpca = 0.0;
  double seconds = 0.0;
};

/// Header experiment,mode,seed,round,mpca,seconds; rows sorted by
/// (mode, seed, round); reals to 6 decimals; write is atomic.
void write_results_csv(std::vector<ResultsRow> rows, const std::string& path);

/// Baselines / DA training per seed; emits per-epoch target-test mpca rows
/// (round 0 = untrained model) to <out>/results.csv.
void cmd_train(const ExperimentConfig& cfg, int workers);

/// run_active_learning per (strategy, seed); emits per-round rows to
/// <out>/al_rounds.csv.
void cmd_al(const ExperimentConfig& cfg, int workers);

/// Grid over (lr, l2), one seeded run per cell, selection by validation
/// mpca; emits <out>/grid.csv and <out>/grid_best.csv.
void cmd_grid(const ExperimentConfig& cfg, int workers);

/// Consumes an `al` CSV and writes the pairwise per-round p-value table to
/// <out>/significance.csv.
void cmd_significance(const ExperimentConfig& cfg);

/// Dispatch; returns the process exit code (0 on success).
int run_command(const ExperimentConfig& cfg, const std::string& command,
                int workers);

/// Exit codes used by the CLI, one per error class.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUnknown = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;
inline constexpr int kExitIo = 5;

}  // namespace shiftlab
