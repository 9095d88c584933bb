#pragma once

#include <string>
#include <vector>

#include "shiftlab/model.hpp"
#include "shiftlab/pool.hpp"

namespace shiftlab {

enum class StrategyKind { Random, Certainty, DivDis, Iwerm, Emoc };

std::string to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& name);

struct ALConfig {
  StrategyKind strategy = StrategyKind::Random;
  int k = 10;
  int rounds = 30;
  std::uint64_t seed = 1;
  double lambda_divdis = 0.5;
  double emoc_lr = 0.0;  // 0: use the training lr
  int emoc_eval_size = 100;
  bool certainty_invert = false;  // select least certain instead

  bool operator==(const ALConfig&) const = default;
};

struct RoundResult {
  int round = 0;
  std::vector<long> selected_ids;  // empty on the final evaluation round
  double mpca = 0.0;
};

/// Entropy H(p) per row; selection takes the k smallest (most certain).
Vector score_certainty(const Matrix& probs);

/// w(x) = gd/(1-gd) (gd clamped like BCE), score = w * H(p); larger is
/// selected first.
Vector score_iwerm(const Matrix& probs, const Vector& gd);

/// Greedy margin + cosine-diversity selection. First pick: largest
/// u = 1 - (p(1) - p(2)); then lambda*u + (1-lambda)*(1 - max cos to the
/// selected set). Ties break on the smallest id. Returns ids in greedy order.
std::vector<long> select_divdis(const Matrix& probs, const Matrix& feats,
                                const std::vector<long>& ids, int k,
                                double lambda);

/// Expected model output change: for each candidate, the label-posterior-
/// weighted mean absolute posterior change on eval_x after one supervised SGD
/// step (rate emoc_lr, no decay) on that candidate. Probes step G_F+G_L only
/// and restore the model bit-exactly afterwards.
Vector score_emoc(UadaModel& model, const Matrix& cand_x, const Matrix& eval_x,
                  double emoc_lr);

/// Dispatch over the five strategies; returned ids are sorted ascending.
std::vector<long> select_batch(StrategyKind strategy, UadaModel& model,
                               const Pool& pool, int k, std::uint64_t seed,
                               const ALConfig& cfg, double train_lr);

/// Round loop: retrain a UadaSemi model from scratch (fresh seed derived from
/// (seed, round)), evaluate target-test mpca, select k ids with the trained
/// model and annotate them. Round 0's mpca is the accuracy before any
/// annotation; with `rounds` annotation rounds the result has rounds+1
/// entries.
std::vector<RoundResult> run_active_learning(const TrainConfig& base,
                                             const ALConfig& al,
                                             const Dataset& data, Pool& pool);
std::vector<RoundResult> run_active_learning(const TrainConfig& base,
                                             const ALConfig& al,
                                             const Dataset& data);

}  // namespace shiftlab
