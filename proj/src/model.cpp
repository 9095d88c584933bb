#include "shiftlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "shiftlab/stats.hpp"

namespace shiftlab {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::SourceOnly: return "source_only";
    case TrainMode::TargetOnly: return "target_only";
    case TrainMode::Uada: return "uada";
    case TrainMode::UadaSemi: return "uada_semi";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "source_only") return TrainMode::SourceOnly;
  if (name == "target_only") return TrainMode::TargetOnly;
  if (name == "uada") return TrainMode::Uada;
  if (name == "uada_semi") return TrainMode::UadaSemi;
  throw ConfigError("unknown train mode: " + name);
}

namespace {

bool adversarial(TrainMode mode) {
  return mode == TrainMode::Uada || mode == TrainMode::UadaSemi;
}

Matrix uniform_init(int rows, int cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
  }
  return w;
}

}  // namespace

NodePtr confusion_loss(Tape& tape, const NodePtr& p) {
  const Eigen::Index rows = p->value.rows();
  if (rows > 0 && p->value.cols() != 1) {
    throw ShapeError("confusion_loss expects a column of probabilities, got " +
                     shape_str(p->value));
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double pc = std::clamp(p->value(i, 0), kProbEps, 1.0 - kProbEps);
    loss -= std::log(1.0 - pc);
  }
  Matrix v(1, 1);
  v(0, 0) = loss;
  auto out = tape.leaf(std::move(v));
  if (rows > 0) {
    tape.record([p, out] {
      const double g = out->grad(0, 0);
      for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
        const double raw = p->value(i, 0);
        if (raw <= kProbEps || raw >= 1.0 - kProbEps) continue;
        p->grad(i, 0) += g / (1.0 - raw);
      }
    });
  }
  return out;
}

UadaModel UadaModel::build(const TrainConfig& cfg, int input_dim,
                           int num_classes, std::uint64_t seed) {
  if (input_dim < 1 || num_classes < 2) {
    throw ConfigError("build: input_dim must be >= 1 and num_classes >= 2");
  }
  for (int h : cfg.hidden) {
    if (h < 1) throw ConfigError("build: hidden widths must be positive");
  }
  for (int h : cfg.gd_hidden) {
    if (h < 1) throw ConfigError("build: gd hidden widths must be positive");
  }
  UadaModel model;
  model.norm_ = cfg.norm;
  model.input_dim_ = input_dim;
  model.num_classes_ = num_classes;

  std::mt19937_64 rng(seed);
  int in = input_dim;
  for (int width : cfg.hidden) {
    Block block;
    block.w = Param(uniform_init(in, width, rng));
    block.b = Param(Matrix::Zero(1, width), /*decay_flag=*/false);
    block.norm = NormState(width, cfg.groups);
    model.gf_.push_back(std::move(block));
    in = width;
  }
  model.feature_dim_ = in;

  model.gl_.w = Param(uniform_init(in, num_classes, rng));
  model.gl_.b = Param(Matrix::Zero(1, num_classes), /*decay_flag=*/false);

  int din = in;
  for (int width : cfg.gd_hidden) {
    Dense layer;
    layer.w = Param(uniform_init(din, width, rng));
    layer.b = Param(Matrix::Zero(1, width), /*decay_flag=*/false);
    model.gd_.push_back(std::move(layer));
    din = width;
  }
  Dense head;
  head.w = Param(uniform_init(din, 1, rng));
  head.b = Param(Matrix::Zero(1, 1), /*decay_flag=*/false);
  model.gd_.push_back(std::move(head));
  return model;
}

NodePtr UadaModel::features(Tape& tape, const NodePtr& x, const DomainMask& mask,
                            bool training) {
  NodePtr h = x;
  for (Block& block : gf_) {
    NodePtr w = norm_ == NormKind::GroupNormWS
                    ? weight_standardize(tape, block.w)
                    : watch(tape, block.w);
    h = linear(tape, h, w, watch(tape, block.b));
    switch (norm_) {
      case NormKind::BatchNorm:
        h = batch_norm(tape, h, block.norm, training);
        break;
      case NormKind::GroupNormWS:
        h = group_norm(tape, h, block.norm);
        break;
      case NormKind::DomainAgnostic:
        h = dan_norm(tape, h, mask, block.norm, training);
        break;
      case NormKind::TransNorm:
        h = trans_norm(tape, h, mask, block.norm, training);
        break;
    }
    h = relu(tape, h);
  }
  return h;
}

NodePtr UadaModel::class_logits(Tape& tape, const NodePtr& feats) {
  return linear(tape, feats, gl_.w, gl_.b);
}

NodePtr UadaModel::domain_prob(Tape& tape, const NodePtr& feats) {
  NodePtr h = feats;
  for (std::size_t i = 0; i + 1 < gd_.size(); ++i) {
    h = relu(tape, linear(tape, h, gd_[i].w, gd_[i].b));
  }
  return sigmoid(tape, linear(tape, h, gd_.back().w, gd_.back().b));
}

std::vector<Param*> UadaModel::gf_params() {
  std::vector<Param*> out;
  for (Block& block : gf_) {
    out.push_back(&block.w);
    out.push_back(&block.b);
    out.push_back(&block.norm.gamma);
    out.push_back(&block.norm.beta);
  }
  return out;
}

std::vector<Param*> UadaModel::gl_params() { return {&gl_.w, &gl_.b}; }

std::vector<Param*> UadaModel::gd_params() {
  std::vector<Param*> out;
  for (Dense& layer : gd_) {
    out.push_back(&layer.w);
    out.push_back(&layer.b);
  }
  return out;
}

std::vector<Param*> UadaModel::params() {
  std::vector<Param*> out = gf_params();
  for (Param* p : gl_params()) out.push_back(p);
  for (Param* p : gd_params()) out.push_back(p);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix sm = logits;
  for (Eigen::Index i = 0; i < sm.rows(); ++i) {
    const double m = sm.row(i).maxCoeff();
    sm.row(i) = (sm.row(i).array() - m).exp();
    sm.row(i) /= sm.row(i).sum();
  }
  return sm;
}

UadaModel::Prediction UadaModel::predict(const Matrix& x, Domain domain) {
  Tape tape;
  DomainMask mask = domain == Domain::Source
                        ? DomainMask::all_source(static_cast<int>(x.rows()))
                        : DomainMask::all_target(static_cast<int>(x.rows()));
  NodePtr feats = features(tape, tape.leaf(x), mask, /*training=*/false);
  NodePtr logits = class_logits(tape, feats);
  NodePtr gd = domain_prob(tape, feats);
  Prediction pred;
  pred.probs = softmax_rows(logits->value);
  pred.feats = feats->value;
  pred.gd = gd->value.col(0);
  return pred;
}

LossReport train_step(UadaModel& model, const Batch& batch,
                      const TrainConfig& cfg, Tape& tape) {
  LossReport report;
  const int rows = static_cast<int>(batch.x.rows());
  if (batch.mask.size() != rows ||
      static_cast<int>(batch.labels.size()) != rows) {
    throw ShapeError("train_step: batch rows, labels and mask disagree");
  }

  std::vector<int> labeled;
  std::vector<int> labels;
  for (int i = 0; i < rows; ++i) {
    if (batch.labels[i] >= 0) {
      labeled.push_back(i);
      labels.push_back(batch.labels[i]);
    }
  }
  if (labeled.empty()) {
    throw DataError("train_step: batch has no labeled rows");
  }
  if (adversarial(cfg.mode)) {
    if (batch.mask.source_rows().empty() || batch.mask.target_rows().empty()) {
      throw DataError("train_step: UADA batch missing a domain");
    }
  }

  auto all = model.params();
  auto gf = model.gf_params();
  auto gl = model.gl_params();
  auto gd = model.gd_params();
  std::vector<Param*> gf_gl = gf;
  gf_gl.insert(gf_gl.end(), gl.begin(), gl.end());

  // 1. classification
  zero_grads(all);
  tape.clear();
  {
    NodePtr x = tape.leaf(batch.x);
    NodePtr feats = model.features(tape, x, batch.mask, /*training=*/true);
    NodePtr sel = gather_rows(tape, feats, labeled);
    NodePtr loss = softmax_cross_entropy(tape, model.class_logits(tape, sel), labels);
    report.cls_loss = loss->value(0, 0);
    tape.backward(loss);
    sgd_step(gf_gl, cfg.lr, cfg.l2, cfg.momentum);
  }
  if (!adversarial(cfg.mode)) return report;

  // 2. discriminator on detached features
  zero_grads(all);
  tape.clear();
  {
    NodePtr x = tape.leaf(batch.x);
    NodePtr feats = model.features(tape, x, batch.mask, /*training=*/true);
    NodePtr detached = tape.leaf(feats->value);
    NodePtr p = model.domain_prob(tape, detached);
    Vector targets(rows);
    for (int i = 0; i < rows; ++i) targets(i) = batch.mask.is_source[i] ? 0.0 : 1.0;
    NodePtr loss = binary_cross_entropy(tape, p, targets);
    report.dom_loss = loss->value(0, 0);
    tape.backward(loss);
    sgd_step(gd, cfg.lr, 0.0, cfg.momentum);
  }

  // 3. confusion into G_F only
  zero_grads(all);
  tape.clear();
  {
    NodePtr x = tape.leaf(batch.x);
    NodePtr feats = model.features(tape, x, batch.mask, /*training=*/true);
    NodePtr p = model.domain_prob(tape, feats);
    NodePtr sel = gather_rows(tape, p, batch.mask.target_rows());
    NodePtr loss = confusion_loss(tape, sel);
    report.conf_loss = loss->value(0, 0);
    NodePtr weighted =
        cfg.conf_weight == 1.0 ? loss : scale(tape, loss, cfg.conf_weight);
    tape.backward(weighted);
    sgd_step(gf, cfg.lr, 0.0, cfg.momentum);
  }
  return report;
}

std::vector<LossReport> train(UadaModel& model, const Pool& pool,
                              const TrainConfig& cfg,
                              const EpochCallback& on_epoch) {
  std::vector<LossReport> history;
  Tape tape;
  const std::uint64_t batch_seed = mix_seed(cfg.seed, 0xBA7C);

  auto run_epochs = [&](auto&& next_epoch_batches) {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      LossReport acc;
      int steps = 0;
      for (Batch& batch : next_epoch_batches()) {
        LossReport rep = train_step(model, batch, cfg, tape);
        acc.cls_loss += rep.cls_loss;
        acc.dom_loss += rep.dom_loss;
        acc.conf_loss += rep.conf_loss;
        ++steps;
      }
      acc.cls_loss /= steps;
      acc.dom_loss /= steps;
      acc.conf_loss /= steps;
      history.push_back(acc);
      if (on_epoch) on_epoch(epoch, acc);
    }
  };

  if (!adversarial(cfg.mode)) {
    const auto& items = cfg.mode == TrainMode::SourceOnly ? pool.labeled_src()
                                                          : pool.labeled_tgt();
    if (items.size() < 2) {
      throw DataError("train: " + to_string(cfg.mode) +
                      " needs >= 2 labeled samples, pool has " +
                      std::to_string(items.size()));
    }
    std::vector<BatchItem> batch_items;
    for (const Pool::Item& item : items) {
      batch_items.push_back({item.id, &item.x, item.y});
    }
    SimpleBatcher batcher(std::move(batch_items), cfg.batch_size,
                          /*as_source=*/true, batch_seed);
    run_epochs([&] { return batcher.epoch(); });
    return history;
  }

  if (pool.labeled_src().empty()) {
    throw DataError("train: UADA modes need a labeled source pool");
  }
  std::vector<BatchItem> src_items, tgt_items;
  for (const Pool::Item& item : pool.labeled_src()) {
    src_items.push_back({item.id, &item.x, item.y});
  }
  const bool semi = cfg.mode == TrainMode::UadaSemi;
  for (const Pool::Item& item : pool.labeled_tgt()) {
    tgt_items.push_back({item.id, &item.x, semi ? item.y : -1});
  }
  for (const Pool::Item& item : pool.unlabeled_tgt()) {
    tgt_items.push_back({item.id, &item.x, -1});
  }
  if (tgt_items.empty()) {
    throw DataError("train: UADA modes need target training samples");
  }
  MixedBatcher batcher(std::move(src_items), std::move(tgt_items),
                       cfg.batch_size, cfg.source_fraction, batch_seed);
  run_epochs([&] {
    std::vector<Batch> batches;
    for (int s = 0; s < batcher.steps_per_epoch(); ++s) {
      batches.push_back(batcher.next());
    }
    return batches;
  });
  return history;
}

std::vector<int> predict_classes(UadaModel& model,
                                 const std::vector<Sample>& samples,
                                 Domain domain) {
  if (samples.empty()) return {};
  UadaModel::Prediction pred = model.predict(stack_features(samples), domain);
  std::vector<int> classes(samples.size());
  for (Eigen::Index i = 0; i < pred.probs.rows(); ++i) {
    Eigen::Index best;
    pred.probs.row(i).maxCoeff(&best);
    classes[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return classes;
}

double evaluate_mpca(UadaModel& model, const std::vector<Sample>& test,
                     Domain domain, int num_classes) {
  std::vector<int> preds = predict_classes(model, test, domain);
  std::vector<int> truths;
  truths.reserve(test.size());
  for (const Sample& s : test) truths.push_back(s.y);
  return mean_per_class_accuracy(preds, truths, num_classes).mpca;
}

}  // namespace shiftlab
