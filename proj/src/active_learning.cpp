#include "shiftlab/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace shiftlab {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Random: return "random";
    case StrategyKind::Certainty: return "certainty";
    case StrategyKind::DivDis: return "divdis";
    case StrategyKind::Iwerm: return "iwerm";
    case StrategyKind::Emoc: return "emoc";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& name) {
  if (name == "random") return StrategyKind::Random;
  if (name == "certainty") return StrategyKind::Certainty;
  if (name == "divdis") return StrategyKind::DivDis;
  if (name == "iwerm") return StrategyKind::Iwerm;
  if (name == "emoc") return StrategyKind::Emoc;
  throw ConfigError("unknown strategy: " + name);
}

namespace {

double row_entropy(const Matrix& probs, Eigen::Index row) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    const double p = probs(row, c);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double cosine(const Matrix& feats, Eigen::Index a, Eigen::Index b) {
  const double na = feats.row(a).norm();
  const double nb = feats.row(b).norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return feats.row(a).dot(feats.row(b)) / (na * nb);
}

/// k ids with the smallest (score, id); ascending=false flips the score order.
std::vector<long> top_k(const Vector& scores, const std::vector<long>& ids,
                        int k, bool ascending) {
  std::vector<int> idx(ids.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const double sa = ascending ? scores(a) : -scores(a);
    const double sb = ascending ? scores(b) : -scores(b);
    if (sa != sb) return sa < sb;
    return ids[a] < ids[b];
  });
  std::vector<long> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back(ids[idx[i]]);
  return out;
}

}  // namespace

Vector score_certainty(const Matrix& probs) {
  Vector scores(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    scores(i) = row_entropy(probs, i);
  }
  return scores;
}

Vector score_iwerm(const Matrix& probs, const Vector& gd) {
  if (gd.size() != probs.rows()) {
    throw ShapeError("score_iwerm: " + std::to_string(gd.size()) +
                     " discriminator outputs for " +
                     std::to_string(probs.rows()) + " rows");
  }
  Vector scores(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double g = std::clamp(gd(i), kProbEps, 1.0 - kProbEps);
    scores(i) = g / (1.0 - g) * row_entropy(probs, i);
  }
  return scores;
}

std::vector<long> select_divdis(const Matrix& probs, const Matrix& feats,
                                const std::vector<long>& ids, int k,
                                double lambda) {
  const Eigen::Index n = probs.rows();
  if (k > n) {
    throw DataError("select_divdis: k=" + std::to_string(k) + " exceeds pool " +
                    std::to_string(n));
  }
  Vector margin_u(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double top1 = -1.0, top2 = -1.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(i, c);
      if (p > top1) {
        top2 = top1;
        top1 = p;
      } else if (p > top2) {
        top2 = p;
      }
    }
    margin_u(i) = 1.0 - (top1 - top2);
  }

  std::vector<bool> taken(n, false);
  std::vector<long> selected;
  std::vector<int> selected_rows;
  while (static_cast<int>(selected.size()) < k) {
    int best = -1;
    double best_score = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double score;
      if (selected.empty()) {
        score = margin_u(i);
      } else {
        double max_cos = -1.0;
        for (int s : selected_rows) {
          max_cos = std::max(max_cos, cosine(feats, i, s));
        }
        score = lambda * margin_u(i) + (1.0 - lambda) * (1.0 - max_cos);
      }
      if (best < 0 || score > best_score ||
          (score == best_score && ids[i] < ids[best])) {
        best = static_cast<int>(i);
        best_score = score;
      }
    }
    taken[best] = true;
    selected.push_back(ids[best]);
    selected_rows.push_back(best);
  }
  return selected;
}

Vector score_emoc(UadaModel& model, const Matrix& cand_x, const Matrix& eval_x,
                  double emoc_lr) {
  const int classes = model.num_classes();
  UadaModel::Prediction base = model.predict(eval_x, Domain::Target);
  UadaModel::Prediction cand = model.predict(cand_x, Domain::Target);

  std::vector<Param*> probe_params = model.gf_params();
  for (Param* p : model.gl_params()) probe_params.push_back(p);
  std::vector<Matrix> saved;
  saved.reserve(probe_params.size());
  for (Param* p : probe_params) saved.push_back(p->value);

  Vector scores = Vector::Zero(cand_x.rows());
  Tape tape;
  for (Eigen::Index i = 0; i < cand_x.rows(); ++i) {
    for (int y = 0; y < classes; ++y) {
      const double weight = cand.probs(i, y);
      // Hypothetical supervised step on (x, y); inference-mode normalization
      // since the probe batch is a single row.
      zero_grads(probe_params);
      tape.clear();
      NodePtr x = tape.leaf(cand_x.row(i));
      NodePtr feats =
          model.features(tape, x, DomainMask::all_target(1), /*training=*/false);
      NodePtr loss =
          softmax_cross_entropy(tape, model.class_logits(tape, feats), {y});
      tape.backward(loss);
      sgd_step(probe_params, emoc_lr, 0.0);

      UadaModel::Prediction probed = model.predict(eval_x, Domain::Target);
      const double change =
          (probed.probs - base.probs).array().abs().sum() /
          static_cast<double>(base.probs.rows() * base.probs.cols());
      scores(i) += weight * change;

      for (std::size_t p = 0; p < probe_params.size(); ++p) {
        probe_params[p]->value = saved[p];
      }
    }
  }
  zero_grads(probe_params);
  return scores;
}

std::vector<long> select_batch(StrategyKind strategy, UadaModel& model,
                               const Pool& pool, int k, std::uint64_t seed,
                               const ALConfig& cfg, double train_lr) {
  const auto& unlabeled = pool.unlabeled_tgt();
  const int n = static_cast<int>(unlabeled.size());
  if (k > n) {
    throw DataError("select_batch: k=" + std::to_string(k) +
                    " exceeds unlabeled pool of " + std::to_string(n));
  }
  std::vector<long> ids;
  std::vector<const Vector*> xs;
  ids.reserve(n);
  xs.reserve(n);
  for (const Pool::Item& item : unlabeled) {
    ids.push_back(item.id);
    xs.push_back(&item.x);
  }

  std::vector<long> picked;
  switch (strategy) {
    case StrategyKind::Random: {
      picked = ids;
      std::mt19937_64 rng(mix_seed(seed, 0x8A2D));
      std::shuffle(picked.begin(), picked.end(), rng);
      picked.resize(k);
      break;
    }
    case StrategyKind::Certainty: {
      auto pred = model.predict(stack_features(xs), Domain::Target);
      picked = top_k(score_certainty(pred.probs), ids, k,
                     /*ascending=*/!cfg.certainty_invert);
      break;
    }
    case StrategyKind::Iwerm: {
      auto pred = model.predict(stack_features(xs), Domain::Target);
      picked = top_k(score_iwerm(pred.probs, pred.gd), ids, k,
                     /*ascending=*/false);
      break;
    }
    case StrategyKind::DivDis: {
      auto pred = model.predict(stack_features(xs), Domain::Target);
      picked = select_divdis(pred.probs, pred.feats, ids, k, cfg.lambda_divdis);
      break;
    }
    case StrategyKind::Emoc: {
      // Fixed seeded evaluation subset of the unlabeled pool.
      const int eval_n = std::min(cfg.emoc_eval_size, n);
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(mix_seed(seed, 0xE0C));
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<const Vector*> eval_xs;
      for (int i = 0; i < eval_n; ++i) eval_xs.push_back(xs[order[i]]);
      const double lr = cfg.emoc_lr > 0.0 ? cfg.emoc_lr : train_lr;
      Vector scores = score_emoc(model, stack_features(xs),
                                 stack_features(eval_xs), lr);
      picked = top_k(scores, ids, k, /*ascending=*/false);
      break;
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::vector<RoundResult> run_active_learning(const TrainConfig& base,
                                             const ALConfig& al,
                                             const Dataset& data, Pool& pool) {
  const long needed = static_cast<long>(al.rounds) * al.k;
  if (needed > static_cast<long>(pool.unlabeled_tgt().size())) {
    throw ConfigError("run_active_learning: " + std::to_string(al.rounds) +
                      " rounds x k=" + std::to_string(al.k) + " needs " +
                      std::to_string(needed) + " unlabeled samples, pool has " +
                      std::to_string(pool.unlabeled_tgt().size()));
  }
  std::vector<RoundResult> results;
  for (int round = 0; round <= al.rounds; ++round) {
    TrainConfig cfg = base;
    cfg.mode = TrainMode::UadaSemi;
    cfg.seed = mix_seed(al.seed, 1000 + static_cast<std::uint64_t>(round));
    UadaModel model = UadaModel::build(cfg, data.dim, data.num_classes, cfg.seed);
    train(model, pool, cfg);
    const double mpca =
        evaluate_mpca(model, data.target.test, Domain::Target, data.num_classes);

    RoundResult result{round, {}, mpca};
    if (round < al.rounds) {
      if (al.k > static_cast<int>(pool.unlabeled_tgt().size())) {
        throw DataError("run_active_learning: pool exhausted at round " +
                        std::to_string(round));
      }
      result.selected_ids = select_batch(
          al.strategy, model, pool, al.k,
          mix_seed(al.seed, 5000 + static_cast<std::uint64_t>(round)), al,
          cfg.lr);
      for (long id : result.selected_ids) pool.annotate(id);
    }
    results.push_back(std::move(result));
  }
  return results;
}

std::vector<RoundResult> run_active_learning(const TrainConfig& base,
                                             const ALConfig& al,
                                             const Dataset& data) {
  Pool pool = Pool::uada(data);
  return run_active_learning(base, al, data, pool);
}

}  // namespace shiftlab
