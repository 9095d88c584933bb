#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shiftlab/common.hpp"

namespace shiftlab {

struct ClassAccuracy {
  double mpca = 0.0;
  Vector recalls;
};

/// recall_c = correct_c / total_c; mpca = mean over classes. Every class in
/// [0, num_classes) must occur at least once in `truths`.
ClassAccuracy mean_per_class_accuracy(const std::vector<int>& preds,
                                      const std::vector<int>& truths,
                                      int num_classes);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;  // p < 0.05
  bool degenerate = false;   // zero variance with unequal means
};

/// Two-sample t-test; pooled variance with df = n1+n2-2 by default, Welch
/// variance/df when `welch`. Two-tailed p via the regularized incomplete
/// beta function. Zero pooled variance: equal means -> t=0, p=1; unequal
/// means -> p=0 with the degenerate flag set.
TTestResult students_ttest(std::span<const double> a, std::span<const double> b,
                           bool welch = false);

/// I_x(a, b) by numerical quadrature (t = sin^2 theta substitution removes the
/// endpoint singularities), absolute error < 1e-9.
double regularized_incomplete_beta(double x, double a, double b);

double student_t_two_tailed_p(double t, double df);

/// Per-strategy mean-per-class accuracies: per_run[run][round].
struct StrategyRuns {
  std::string name;
  std::vector<std::vector<double>> per_run;
};

/// Pairwise per-round t-tests over every unordered strategy pair, pairs in
/// sorted-name order.
struct SignificanceTable {
  std::vector<std::string> pairs;
  std::vector<std::vector<TTestResult>> cells;  // [pair][round]
  int rounds = 0;
};

SignificanceTable significance_matrix(const std::vector<StrategyRuns>& runs);

/// Schema: pair,round_0,...,round_R with p-values to 4 decimals.
void write_significance_csv(const SignificanceTable& table,
                            const std::string& path);

struct GridSpec {
  std::vector<double> lrs = {1e-3, 1e-4};
  std::vector<double> l2s = {0.001, 0.01, 0.05, 0.1, 0.15};
  bool operator==(const GridSpec&) const = default;
};

struct GridCell {
  double lr = 0.0;
  double l2 = 0.0;
  double score = 0.0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  double best_lr = 0.0;
  double best_l2 = 0.0;
  double best_score = 0.0;
  std::vector<GridCell> cells;
};

/// Runs train_fn per (lr, l2) cell; selects the best validation score with
/// ties broken by smaller l2, then smaller lr (so the result is independent
/// of enumeration order). A throwing cell is marked failed; only all cells
/// failing is an error. workers > 1 fans cells out across threads.
GridResult grid_search(const GridSpec& grid,
                       const std::function<double(double lr, double l2)>& train_fn,
                       int workers = 1);

struct RunAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1); 0 for a single run
};

RunAggregate aggregate_runs(std::span<const double> values);

}  // namespace shiftlab
