#pragma once

#include <string>
#include <vector>

#include "shiftlab/active_learning.hpp"
#include "shiftlab/data.hpp"
#include "shiftlab/model.hpp"
#include "shiftlab/stats.hpp"

namespace shiftlab {

/// Complete declarative experiment record. Parsed from flat `key = value`
/// text with dotted key paths; unknown keys are rejected and
/// parse -> serialize -> parse is the identity.
struct ExperimentConfig {
  std::string experiment = "exp";
  std::vector<std::uint64_t> seeds;  // empty: train.seed + 0..runs-1
  std::string out_dir = "out";
  bool timing = false;  // emit wall-clock seconds instead of 0

  struct DatasetCfg {
    std::string kind = "synthetic";  // synthetic | folder
    int classes = 5;
    int dim = 2;
    int per_class = 55;
    double sigma = 0.3;
    double theta_deg = 45.0;
    std::vector<double> translate;
    std::uint64_t seed = 7;
    std::string path;
    int image_size = 32;
    std::string features = "flatten";  // flatten | meanpool
    bool augment = false;

    bool operator==(const DatasetCfg&) const = default;
  } dataset;

  TrainConfig train;

  struct AlCfg {
    std::vector<StrategyKind> strategies = {StrategyKind::Random};
    int k = 10;
    int rounds = 30;
    double lambda = 0.5;
    double emoc_lr = 0.0;
    int emoc_eval = 100;
    bool certainty_invert = false;

    bool operator==(const AlCfg&) const = default;
  } al;

  GridSpec grid;
  std::string significance_input;  // empty: <out_dir>/al_rounds.csv

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Constraint checks; every failure names the offending key.
void validate_config(const ExperimentConfig& cfg);

/// True if the raw text assigns the key (used for output-dir fallback logic).
bool config_text_has_key(const std::string& text, const std::string& key);

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& cfg);

Dataset build_dataset(const ExperimentConfig& cfg);

}  // namespace shiftlab
