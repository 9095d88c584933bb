#include <doctest.h>

#include "shiftlab/config.hpp"

using namespace shiftlab;

TEST_CASE("empty config text yields valid defaults") {
  ExperimentConfig cfg = parse_config_text("");
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.epochs == 100);
  CHECK(cfg.train.runs == 3);
  CHECK(cfg.train.mode == TrainMode::Uada);
  CHECK(cfg.train.norm == NormKind::TransNorm);
  CHECK(cfg.al.k == 10);
  CHECK(cfg.al.rounds == 30);
  CHECK(cfg.dataset.kind == "synthetic");
  CHECK(cfg.grid.lrs == std::vector<double>{1e-3, 1e-4});
  CHECK(cfg.grid.l2s == std::vector<double>{0.001, 0.01, 0.05, 0.1, 0.15});
  CHECK(effective_seeds(cfg) == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("config parses keys, comments and lists") {
  const std::string text = R"(
# a comment line
experiment = demo
seeds = 5,6,7
train.mode = source_only
train.norm = batch
train.lr = 0.0005   # trailing comment
train.hidden = 32,16
dataset.translate = 1.5,-2.5
al.strategies = random,emoc
)";
  ExperimentConfig cfg = parse_config_text(text);
  CHECK(cfg.experiment == "demo");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{5, 6, 7});
  CHECK(cfg.train.mode == TrainMode::SourceOnly);
  CHECK(cfg.train.norm == NormKind::BatchNorm);
  CHECK(cfg.train.lr == 0.0005);
  CHECK(cfg.train.hidden == std::vector<int>{32, 16});
  CHECK(cfg.dataset.translate == std::vector<double>{1.5, -2.5});
  CHECK(cfg.al.strategies ==
        std::vector<StrategyKind>{StrategyKind::Random, StrategyKind::Emoc});
}

TEST_CASE("config rejects unknown keys and bad values naming them") {
  CHECK_THROWS_WITH_AS(parse_config_text("train.lrr = 1"),
                       doctest::Contains("train.lrr"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("train.lr = fast"),
                       doctest::Contains("train.lr"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("train.batch_size = 3.5"),
                       doctest::Contains("train.batch_size"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just a line"), ConfigError);
}

TEST_CASE("config constraint violations name the key") {
  CHECK_THROWS_WITH_AS(parse_config_text("train.batch_size = 3"),
                       doctest::Contains("train.batch_size"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("train.lr = 0"),
                       doctest::Contains("train.lr"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("train.mode = uada\ntrain.source_fraction = 1.0"),
      doctest::Contains("source_fraction"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("train.mode = source_only\ntrain.norm = trans"),
      doctest::Contains("train.norm"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("train.norm = group_ws\ntrain.groups = 7"),
      doctest::Contains("train.groups"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("seeds = 4,4"),
                       doctest::Contains("seeds"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("dataset.sigma = -1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("al.lambda = 1.5"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("grid.lrs = "), ConfigError);
}

TEST_CASE("parse -> serialize -> parse is the identity") {
  const std::string text = R"(
experiment = roundtrip
seeds = 11,12
output.timing = true
dataset.kind = synthetic
dataset.classes = 7
dataset.sigma = 0.12345678901234567
dataset.translate = 0.25,3.75,1,0,0,0,0
dataset.dim = 7
train.mode = uada_semi
train.norm = dan
train.lr = 0.0001
train.l2 = 0.0625
train.hidden = 24,24
al.strategies = divdis,iwerm
al.lambda = 0.25
grid.lrs = 0.01,0.001
significance.input = some/where.csv
)";
  ExperimentConfig cfg = parse_config_text(text);
  ExperimentConfig again = parse_config_text(serialize_config(cfg));
  CHECK(cfg == again);

  // defaults round-trip too
  ExperimentConfig defaults = parse_config_text("");
  CHECK(defaults == parse_config_text(serialize_config(defaults)));
}

TEST_CASE("config_text_has_key sees only real assignments") {
  const std::string text = "# output.dir = hidden\noutput.timing = true\n";
  CHECK(!config_text_has_key(text, "output.dir"));
  CHECK(config_text_has_key(text, "output.timing"));
}

TEST_CASE("build_dataset honors the synthetic spec") {
  ExperimentConfig cfg = parse_config_text(
      "dataset.classes = 4\ndataset.per_class = 10\ndataset.theta_deg = 90\n");
  Dataset data = build_dataset(cfg);
  CHECK(data.num_classes == 4);
  CHECK(data.dim == 2);
  const std::size_t total = data.source.train.size() + data.source.val.size() +
                            data.source.test.size();
  CHECK(total == 40);

  ExperimentConfig folder = parse_config_text("dataset.kind = folder\n");
  CHECK_THROWS_WITH_AS(build_dataset(folder), doctest::Contains("dataset.path"),
                       ConfigError);
}
