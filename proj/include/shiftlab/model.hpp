#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shiftlab/autodiff.hpp"
#include "shiftlab/data.hpp"
#include "shiftlab/normalization.hpp"
#include "shiftlab/pool.hpp"

namespace shiftlab {

enum class TrainMode { SourceOnly, TargetOnly, Uada, UadaSemi };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::Uada;
  NormKind norm = NormKind::TransNorm;
  double lr = 1e-3;
  double l2 = 0.0;
  double momentum = 0.0;
  int batch_size = 32;
  int epochs = 100;
  int runs = 3;
  std::uint64_t seed = 1;
  double conf_weight = 1.0;
  std::vector<int> hidden = {64, 64};
  std::vector<int> gd_hidden = {32};
  int groups = 8;
  double source_fraction = 0.5;

  bool operator==(const TrainConfig&) const = default;
};

struct LossReport {
  double cls_loss = 0.0;
  double dom_loss = 0.0;
  double conf_loss = 0.0;
};

/// Eq.-style target confusion loss: -sum log(1 - p) over the rows of p,
/// which must be discriminator outputs on target-domain rows (clamped like
/// BCE). Empty input yields 0.
NodePtr confusion_loss(Tape& tape, const NodePtr& p);

/// Feature extractor G_F (linear + norm + relu blocks), label predictor G_L
/// (linear to class logits) and domain discriminator G_D (small MLP ending in
/// a sigmoid read as P(domain = target)). Value-semantic: a copy is an
/// independent deep clone.
class UadaModel {
 public:
  struct Block {
    Param w, b;
    NormState norm;
  };
  struct Dense {
    Param w, b;
  };

  UadaModel() = default;

  /// Deterministic uniform fan-in initialization from the seed.
  static UadaModel build(const TrainConfig& cfg, int input_dim, int num_classes,
                         std::uint64_t seed);

  NodePtr features(Tape& tape, const NodePtr& x, const DomainMask& mask,
                   bool training);
  NodePtr class_logits(Tape& tape, const NodePtr& feats);
  NodePtr domain_prob(Tape& tape, const NodePtr& feats);

  std::vector<Param*> gf_params();
  std::vector<Param*> gl_params();
  std::vector<Param*> gd_params();
  std::vector<Param*> params();

  struct Prediction {
    Matrix probs;  // BxC, rows sum to 1
    Matrix feats;  // BxF
    Vector gd;     // B, strictly inside (0,1)
  };
  Prediction predict(const Matrix& x, Domain domain);

  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  int feature_dim() const { return feature_dim_; }
  NormKind norm_kind() const { return norm_; }

  std::vector<Block>& gf_blocks() { return gf_; }
  Dense& gl() { return gl_; }
  std::vector<Dense>& gd_layers() { return gd_; }

 private:
  std::vector<Block> gf_;
  Dense gl_;
  std::vector<Dense> gd_;
  NormKind norm_ = NormKind::BatchNorm;
  int input_dim_ = 0, num_classes_ = 0, feature_dim_ = 0;
};

Matrix softmax_rows(const Matrix& logits);

/// One optimization step = up to three sequential sub-updates:
///   1. classification: softmax CE on the labeled rows, SGD on G_F+G_L (+L2);
///   2. discriminator: BCE on detached features, SGD on G_D only;
///   3. confusion: conf_weight * confusion_loss on the target rows, SGD on
///      G_F only.
/// Baseline modes run sub-update 1 alone. The tape is reused and left spent.
LossReport train_step(UadaModel& model, const Batch& batch,
                      const TrainConfig& cfg, Tape& tape);

using EpochCallback = std::function<void(int epoch, const LossReport&)>;

/// Full training loop: epochs x steps_per_epoch seeded batches, deterministic
/// per seed. Returns the per-epoch loss history (mean over steps).
std::vector<LossReport> train(UadaModel& model, const Pool& pool,
                              const TrainConfig& cfg,
                              const EpochCallback& on_epoch = nullptr);

std::vector<int> predict_classes(UadaModel& model,
                                 const std::vector<Sample>& samples,
                                 Domain domain);

double evaluate_mpca(UadaModel& model, const std::vector<Sample>& test,
                     Domain domain, int num_classes);

}  // namespace shiftlab
