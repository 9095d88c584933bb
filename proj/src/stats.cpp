#include "shiftlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <map>

#include "shiftlab/io_util.hpp"

namespace shiftlab {

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

// Adaptive Simpson on a smooth integrand.
double simpson(const std::function<double(double)>& f, double a, double b,
               double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(f, a, m, fa, flm, fm);
  const double right = simpson(f, m, b, fm, frm, fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = simpson(f, a, b, fa, fm, fb);
  // Keep the error small relative to the integral itself so tail p-values
  // stay accurate; the absolute floor still bounds the cost.
  const double eff = std::max(1e-16, std::min(tol, 1e-11 * std::abs(whole)));
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, eff, 48);
}

}  // namespace

ClassAccuracy mean_per_class_accuracy(const std::vector<int>& preds,
                                      const std::vector<int>& truths,
                                      int num_classes) {
  if (preds.size() != truths.size()) {
    throw ShapeError("mean_per_class_accuracy: " + std::to_string(preds.size()) +
                     " predictions vs " + std::to_string(truths.size()) +
                     " truths");
  }
  std::vector<long> total(num_classes, 0), correct(num_classes, 0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] < 0 || truths[i] >= num_classes) {
      throw DataError("mean_per_class_accuracy: truth label " +
                      std::to_string(truths[i]) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    }
    ++total[truths[i]];
    if (preds[i] == truths[i]) ++correct[truths[i]];
  }
  ClassAccuracy result;
  result.recalls = Vector::Zero(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    if (total[c] == 0) {
      throw DataError("mean_per_class_accuracy: class " + std::to_string(c) +
                      " has no truth instances");
    }
    result.recalls(c) = static_cast<double>(correct[c]) / total[c];
  }
  result.mpca = result.recalls.mean();
  return result;
}

double regularized_incomplete_beta(double x, double a, double b) {
  if (a <= 0.0 || b <= 0.0) {
    throw ConfigError("regularized_incomplete_beta: a and b must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // t = sin^2(theta): I_x(a,b) = 2/B(a,b) * int_0^phi sin^(2a-1) cos^(2b-1).
  const double phi = std::asin(std::sqrt(x));
  const double pa = 2.0 * a - 1.0;
  const double pb = 2.0 * b - 1.0;
  auto f = [pa, pb](double theta) {
    return std::pow(std::sin(theta), pa) * std::pow(std::cos(theta), pb);
  };
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double integral = integrate(f, 0.0, phi, 1e-12);
  const double value = 2.0 * std::exp(-log_beta) * integral;
  return std::clamp(value, 0.0, 1.0);
}

double student_t_two_tailed_p(double t, double df) {
  if (df <= 0.0) throw ConfigError("student_t_two_tailed_p: df must be positive");
  if (t == 0.0) return 1.0;
  const double x = df / (df + t * t);
  return regularized_incomplete_beta(x, df / 2.0, 0.5);
}

TTestResult students_ttest(std::span<const double> a, std::span<const double> b,
                           bool welch) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 < 2 || n2 < 2) {
    throw DataError("students_ttest: both samples need >= 2 values");
  }
  const double m1 = mean_of(a), m2 = mean_of(b);
  const double v1 = sample_var(a, m1), v2 = sample_var(b, m2);

  TTestResult result;
  double se;
  if (welch) {
    const double q1 = v1 / n1, q2 = v2 / n2;
    se = std::sqrt(q1 + q2);
    result.df = (q1 + q2) * (q1 + q2) /
                (q1 * q1 / (n1 - 1) + q2 * q2 / (n2 - 1));
    if (se == 0.0) result.df = static_cast<double>(n1 + n2 - 2);
  } else {
    result.df = static_cast<double>(n1 + n2 - 2);
    const double pooled = ((n1 - 1) * v1 + (n2 - 1) * v2) / result.df;
    se = std::sqrt(pooled * (1.0 / n1 + 1.0 / n2));
  }

  if (se == 0.0) {
    if (m1 == m2) {
      result.t = 0.0;
      result.p = 1.0;
    } else {
      result.t = m1 < m2 ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
      result.p = 0.0;
      result.degenerate = true;
    }
  } else {
    result.t = (m1 - m2) / se;
    result.p = student_t_two_tailed_p(result.t, result.df);
  }
  result.significant = result.p < 0.05;
  return result;
}

SignificanceTable significance_matrix(const std::vector<StrategyRuns>& runs) {
  if (runs.size() < 2) {
    throw DataError("significance_matrix: need >= 2 strategies");
  }
  std::vector<const StrategyRuns*> sorted;
  for (const auto& r : runs) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const StrategyRuns* x, const StrategyRuns* y) {
              return x->name < y->name;
            });

  int rounds = -1;
  for (const StrategyRuns* s : sorted) {
    if (s->per_run.size() < 2) {
      throw DataError("significance_matrix: strategy " + s->name + " has " +
                      std::to_string(s->per_run.size()) + " runs, need >= 2");
    }
    for (const auto& run : s->per_run) {
      if (rounds < 0) rounds = static_cast<int>(run.size());
      if (static_cast<int>(run.size()) != rounds) {
        throw DataError("significance_matrix: strategy " + s->name +
                        " has a run with " + std::to_string(run.size()) +
                        " rounds, expected " + std::to_string(rounds));
      }
    }
  }
  if (rounds <= 0) {
    throw DataError("significance_matrix: no rounds present");
  }

  SignificanceTable table;
  table.rounds = rounds;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      table.pairs.push_back(sorted[i]->name + "-" + sorted[j]->name);
      std::vector<TTestResult> row;
      for (int r = 0; r < rounds; ++r) {
        std::vector<double> x, y;
        for (const auto& run : sorted[i]->per_run) x.push_back(run[r]);
        for (const auto& run : sorted[j]->per_run) y.push_back(run[r]);
        row.push_back(students_ttest(x, y));
      }
      table.cells.push_back(std::move(row));
    }
  }
  return table;
}

void write_significance_csv(const SignificanceTable& table,
                            const std::string& path) {
  std::string text = "pair";
  for (int r = 0; r < table.rounds; ++r) text += ",round_" + std::to_string(r);
  text += "\n";
  char buf[32];
  for (std::size_t i = 0; i < table.pairs.size(); ++i) {
    text += table.pairs[i];
    for (const TTestResult& cell : table.cells[i]) {
      std::snprintf(buf, sizeof(buf), ",%.4f", cell.p);
      text += buf;
    }
    text += "\n";
  }
  atomic_write_file(path, text);
}

GridResult grid_search(const GridSpec& grid,
                       const std::function<double(double, double)>& train_fn,
                       int workers) {
  if (grid.lrs.empty() || grid.l2s.empty()) {
    throw ConfigError("grid_search: empty grid");
  }
  GridResult result;
  for (double lr : grid.lrs) {
    for (double l2 : grid.l2s) {
      result.cells.push_back({lr, l2, 0.0, false, ""});
    }
  }
  auto run_cell = [&](GridCell& cell) {
    try {
      cell.score = train_fn(cell.lr, cell.l2);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
  };
  if (workers <= 1) {
    for (GridCell& cell : result.cells) run_cell(cell);
  } else {
    std::size_t next = 0;
    while (next < result.cells.size()) {
      std::vector<std::future<void>> window;
      for (int w = 0; w < workers && next < result.cells.size(); ++w, ++next) {
        window.push_back(std::async(std::launch::async, run_cell,
                                    std::ref(result.cells[next])));
      }
      for (auto& f : window) f.get();
    }
  }

  const GridCell* best = nullptr;
  for (const GridCell& cell : result.cells) {
    if (cell.failed) continue;
    if (!best || cell.score > best->score ||
        (cell.score == best->score &&
         (cell.l2 < best->l2 || (cell.l2 == best->l2 && cell.lr < best->lr)))) {
      best = &cell;
    }
  }
  if (!best) throw DataError("grid_search: every cell failed");
  result.best_lr = best->lr;
  result.best_l2 = best->l2;
  result.best_score = best->score;
  return result;
}

RunAggregate aggregate_runs(std::span<const double> values) {
  if (values.empty()) throw DataError("aggregate_runs: empty input");
  RunAggregate agg;
  agg.mean = mean_of(values);
  agg.stddev = values.size() > 1 ? std::sqrt(sample_var(values, agg.mean)) : 0.0;
  return agg;
}

}  // namespace shiftlab
