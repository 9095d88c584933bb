#pragma once

#include <string>
#include <vector>

#include "shiftlab/autodiff.hpp"
#include "shiftlab/common.hpp"

namespace shiftlab {

enum class NormKind { BatchNorm, GroupNormWS, DomainAgnostic, TransNorm };

std::string to_string(NormKind kind);
NormKind norm_kind_from_string(const std::string& name);

/// Per-row domain flags for a mixed batch: true = source, false = target.
struct DomainMask {
  std::vector<bool> is_source;

  static DomainMask all_source(int n) { return {std::vector<bool>(n, true)}; }
  static DomainMask all_target(int n) { return {std::vector<bool>(n, false)}; }

  int size() const { return static_cast<int>(is_source.size()); }
  std::vector<int> source_rows() const;
  std::vector<int> target_rows() const;
};

/// Learnable scale/shift plus per-domain running statistics for inference.
/// BatchNorm is domain-blind and only ever touches the source slot.
struct NormState {
  Param gamma;  // 1xC, init 1, no decay
  Param beta;   // 1xC, init 0, no decay
  double eps = 1e-5;
  double momentum = 0.1;
  Vector run_mean_src, run_var_src;
  Vector run_mean_tgt, run_var_tgt;
  int groups = 1;  // GroupNormWS only

  NormState() = default;
  explicit NormState(int channels, int groups_ = 1);
  int channels() const { return static_cast<int>(gamma.value.cols()); }
};

/// Classic batch normalization over the full batch (biased variance).
/// Training requires B >= 2 and updates the source-slot running statistics;
/// inference normalizes with them.
NodePtr batch_norm(Tape& tape, const NodePtr& x, NormState& state, bool training);

/// Per-sample normalization of channel groups; stateless, identical in
/// training and inference. state.groups must divide C.
NodePtr group_norm(Tape& tape, const NodePtr& x, NormState& state);

/// Standardizes each output-channel column of a weight matrix to zero mean /
/// unit variance (eps-regularized); gradients flow through the statistics.
NodePtr weight_standardize(Tape& tape, const NodePtr& w);
NodePtr weight_standardize(Tape& tape, Param& w);
inline constexpr double kWsEps = 1e-5;

/// Domain-agnostic normalization: statistics from source rows only, applied
/// to every row. Training requires >= 2 source rows; running statistics track
/// the source domain and are used for all inputs at inference.
NodePtr dan_norm(Tape& tape, const NodePtr& x, const DomainMask& mask,
                 NormState& state, bool training);

/// Transferable normalization: per-domain statistics (shared gamma/beta),
/// output scaled by (1 + alpha) where alpha weights channels by the closeness
/// of their source/target statistics. alpha is computed outside the tape and
/// is a constant for the backward pass. Training requires >= 2 rows per
/// domain; inference uses each row's declared domain's running statistics and
/// alpha from running statistics.
NodePtr trans_norm(Tape& tape, const NodePtr& x, const DomainMask& mask,
                   NormState& state, bool training);

/// d_c = |mu_s/sqrt(var_s+eps) - mu_t/sqrt(var_t+eps)|,
/// alpha_c = C * (1+d_c)^-1 / sum_j (1+d_j)^-1. Sums to C by construction.
Vector transferability_alpha(const Vector& mean_src, const Vector& var_src,
                             const Vector& mean_tgt, const Vector& var_tgt,
                             double eps);

}  // namespace shiftlab
