#include "shiftlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include "shiftlab/io_util.hpp"

namespace shiftlab {

namespace {

double elapsed_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

// Runs the jobs with at most `workers` in flight; results stay in job order.
void run_jobs(std::vector<std::function<void()>>& jobs, int workers) {
  if (workers <= 1) {
    for (auto& job : jobs) job();
    return;
  }
  std::size_t next = 0;
  while (next < jobs.size()) {
    std::vector<std::future<void>> window;
    for (int w = 0; w < workers && next < jobs.size(); ++w, ++next) {
      window.push_back(std::async(std::launch::async, jobs[next]));
    }
    for (auto& f : window) f.get();
  }
}

Pool pool_for_mode(const Dataset& data, TrainMode mode) {
  switch (mode) {
    case TrainMode::SourceOnly: return Pool::source_baseline(data);
    case TrainMode::TargetOnly: return Pool::target_baseline(data);
    case TrainMode::Uada:
    case TrainMode::UadaSemi: return Pool::uada(data);
  }
  throw ConfigError("unknown train mode");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

void write_results_csv(std::vector<ResultsRow> rows, const std::string& path) {
  std::sort(rows.begin(), rows.end(),
            [](const ResultsRow& a, const ResultsRow& b) {
              if (a.mode != b.mode) return a.mode < b.mode;
              if (a.seed != b.seed) return a.seed < b.seed;
              return a.round < b.round;
            });
  std::string text = "experiment,mode,seed,round,mpca,seconds\n";
  char buf[64];
  for (const ResultsRow& row : rows) {
    text += row.experiment + "," + row.mode + "," + std::to_string(row.seed) +
            "," + std::to_string(row.round);
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", row.mpca, row.seconds);
    text += buf;
    text += "\n";
  }
  atomic_write_file(path, text);
}

void cmd_train(const ExperimentConfig& cfg, int workers) {
  const Dataset data = build_dataset(cfg);
  const std::vector<std::uint64_t> seeds = effective_seeds(cfg);
  std::vector<std::vector<ResultsRow>> per_seed(seeds.size());

  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    jobs.push_back([&, i] {
      const auto start = std::chrono::steady_clock::now();
      TrainConfig tc = cfg.train;
      tc.seed = seeds[i];
      Pool pool = pool_for_mode(data, tc.mode);
      UadaModel model = UadaModel::build(tc, data.dim, data.num_classes, tc.seed);
      std::vector<ResultsRow>& rows = per_seed[i];
      auto emit = [&](int epoch) {
        rows.push_back({cfg.experiment, to_string(tc.mode), seeds[i], epoch,
                        evaluate_mpca(model, data.target.test, Domain::Target,
                                      data.num_classes),
                        cfg.timing ? elapsed_seconds(start) : 0.0});
      };
      emit(0);
      train(model, pool, tc,
            [&](int epoch, const LossReport&) { emit(epoch + 1); });
    });
  }
  run_jobs(jobs, workers);

  std::vector<ResultsRow> rows;
  for (auto& part : per_seed) {
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_results_csv(std::move(rows),
                    (std::filesystem::path(cfg.out_dir) / "results.csv").string());
}

void cmd_al(const ExperimentConfig& cfg, int workers) {
  const Dataset data = build_dataset(cfg);
  const std::vector<std::uint64_t> seeds = effective_seeds(cfg);

  struct Arm {
    StrategyKind strategy;
    std::uint64_t seed;
  };
  std::vector<Arm> arms;
  for (StrategyKind s : cfg.al.strategies) {
    for (std::uint64_t seed : seeds) arms.push_back({s, seed});
  }
  std::vector<std::vector<ResultsRow>> per_arm(arms.size());

  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    jobs.push_back([&, i] {
      const auto start = std::chrono::steady_clock::now();
      ALConfig al;
      al.strategy = arms[i].strategy;
      al.k = cfg.al.k;
      al.rounds = cfg.al.rounds;
      al.seed = arms[i].seed;
      al.lambda_divdis = cfg.al.lambda;
      al.emoc_lr = cfg.al.emoc_lr;
      al.emoc_eval_size = cfg.al.emoc_eval;
      al.certainty_invert = cfg.al.certainty_invert;
      TrainConfig tc = cfg.train;
      tc.seed = arms[i].seed;
      for (const RoundResult& r : run_active_learning(tc, al, data)) {
        per_arm[i].push_back({cfg.experiment, to_string(arms[i].strategy),
                              arms[i].seed, r.round, r.mpca,
                              cfg.timing ? elapsed_seconds(start) : 0.0});
      }
    });
  }
  run_jobs(jobs, workers);

  std::vector<ResultsRow> rows;
  for (auto& part : per_arm) {
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_results_csv(std::move(rows),
                    (std::filesystem::path(cfg.out_dir) / "al_rounds.csv").string());
}

void cmd_grid(const ExperimentConfig& cfg, int workers) {
  const Dataset data = build_dataset(cfg);
  // Validation split of the domain whose labels the mode may read: target for
  // the target-only upper bound, source otherwise (keeps UADA label-free).
  const bool validate_on_target = cfg.train.mode == TrainMode::TargetOnly;
  const std::vector<Sample>& val =
      validate_on_target ? data.target.val : data.source.val;
  const Domain val_domain = validate_on_target ? Domain::Target : Domain::Source;

  auto train_fn = [&](double lr, double l2) {
    TrainConfig tc = cfg.train;
    tc.lr = lr;
    tc.l2 = l2;
    Pool pool = pool_for_mode(data, tc.mode);
    UadaModel model = UadaModel::build(tc, data.dim, data.num_classes, tc.seed);
    train(model, pool, tc);
    return evaluate_mpca(model, val, val_domain, data.num_classes);
  };
  const GridResult result = grid_search(cfg.grid, train_fn, workers);

  std::string text = "lr,l2,mpca,status\n";
  char buf[96];
  for (const GridCell& cell : result.cells) {
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6f,%s\n", cell.lr, cell.l2,
                  cell.failed ? 0.0 : cell.score,
                  cell.failed ? "failed" : "ok");
    text += buf;
  }
  const std::filesystem::path out(cfg.out_dir);
  atomic_write_file((out / "grid.csv").string(), text);
  std::snprintf(buf, sizeof(buf), "lr,l2,mpca\n%.6g,%.6g,%.6f\n",
                result.best_lr, result.best_l2, result.best_score);
  atomic_write_file((out / "grid_best.csv").string(), buf);
  std::cout << "grid best: lr=" << result.best_lr << " l2=" << result.best_l2
            << " val_mpca=" << result.best_score << "\n";
}

void cmd_significance(const ExperimentConfig& cfg) {
  const std::string input =
      cfg.significance_input.empty()
          ? (std::filesystem::path(cfg.out_dir) / "al_rounds.csv").string()
          : cfg.significance_input;
  std::istringstream in(read_file(input));
  std::string line;
  if (!std::getline(in, line)) throw DataError("significance: empty input " + input);
  const auto header = split_csv_line(line);
  if (header.size() < 5 || header[1] != "mode" || header[3] != "round") {
    throw DataError("significance: unexpected CSV header in " + input);
  }

  // strategy -> seed -> round -> mpca
  std::map<std::string, std::map<std::uint64_t, std::map<int, double>>> per;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 5) throw DataError("significance: short row in " + input);
    per[cells[1]][std::stoull(cells[2])][std::stoi(cells[3])] =
        std::stod(cells[4]);
  }

  std::vector<StrategyRuns> runs;
  for (const auto& [name, by_seed] : per) {
    StrategyRuns sr;
    sr.name = name;
    for (const auto& [seed, by_round] : by_seed) {
      std::vector<double> run;
      for (const auto& [round, mpca] : by_round) {
        if (round != static_cast<int>(run.size())) {
          throw DataError("significance: strategy " + name + " seed " +
                          std::to_string(seed) + " is missing round " +
                          std::to_string(run.size()));
        }
        run.push_back(mpca);
      }
      sr.per_run.push_back(std::move(run));
    }
    runs.push_back(std::move(sr));
  }
  const SignificanceTable table = significance_matrix(runs);
  write_significance_csv(
      table, (std::filesystem::path(cfg.out_dir) / "significance.csv").string());
}

int run_command(const ExperimentConfig& cfg, const std::string& command,
                int workers) {
  try {
    if (command == "train") {
      cmd_train(cfg, workers);
    } else if (command == "al") {
      cmd_al(cfg, workers);
    } else if (command == "grid") {
      cmd_grid(cfg, workers);
    } else if (command == "significance") {
      cmd_significance(cfg);
    } else {
      std::cerr << "unknown command: " << command << "\n";
      return kExitConfig;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace shiftlab
