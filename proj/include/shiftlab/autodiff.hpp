#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "shiftlab/common.hpp"

namespace shiftlab {

/// Trainable tensor: value plus accumulated gradient of the same shape.
/// `decay` marks whether L2 regularization applies (weights yes; biases and
/// normalization scale/shift no).
struct Param {
  Matrix value;
  Matrix grad;
  bool decay = true;
  Matrix velocity;  // momentum buffer, allocated on first momentum step

  Param() = default;
  explicit Param(Matrix v, bool decay_flag = true)
      : value(std::move(v)), decay(decay_flag) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

/// One tensor variable produced by a recorded forward pass.
struct Node {
  Matrix value;
  Matrix grad;
  explicit Node(Matrix v) : value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
};
using NodePtr = std::shared_ptr<Node>;

/// Reverse-mode tape. Forward ops append one backward action each; backward()
/// replays them in exact reverse execution order, exactly once per recording.
class Tape {
 public:
  /// Constant input node; nothing recorded, no gradient flows past it.
  NodePtr leaf(Matrix v) { return std::make_shared<Node>(std::move(v)); }

  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

  /// Seeds d(loss)=1 and runs the reverse pass. `loss` must be scalar (1x1).
  /// Calling again without re-recording throws TapeError.
  void backward(const NodePtr& loss);

  void clear() {
    records_.clear();
    spent_ = false;
  }
  std::size_t size() const { return records_.size(); }
  bool spent() const { return spent_; }

 private:
  std::vector<std::function<void()>> records_;
  bool spent_ = false;
};

/// Brings a parameter into the graph; the reverse pass accumulates the node's
/// gradient into `p.grad`. The param must outlive the tape.
NodePtr watch(Tape& tape, Param& p);

/// y = x*w + b (b broadcast over rows). x: BxI, w: IxO, b: 1xO.
NodePtr linear(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& b);
NodePtr linear(Tape& tape, const NodePtr& x, Param& w, Param& b);

/// Elementwise max(0, x); the subgradient at exactly 0 is taken as 0.
NodePtr relu(Tape& tape, const NodePtr& x);

/// Numerically stable logistic; outputs strictly inside (0, 1).
NodePtr sigmoid(Tape& tape, const NodePtr& x);

/// y = x[rows, :]; the backward pass scatter-adds into the gathered rows.
NodePtr gather_rows(Tape& tape, const NodePtr& x, std::vector<int> rows);

NodePtr sum(Tape& tape, const NodePtr& x);
NodePtr square(Tape& tape, const NodePtr& x);
NodePtr scale(Tape& tape, const NodePtr& x, double c);

/// Mean over the batch of -log softmax(logits)[label], stabilized by row-max
/// subtraction. labels must lie in [0, C).
NodePtr softmax_cross_entropy(Tape& tape, const NodePtr& logits,
                              const std::vector<int>& labels);

/// Mean of -[t*log p + (1-t)*log(1-p)] with p clamped to [kProbEps, 1-kProbEps].
/// p: Bx1 column, targets in {0, 1}.
NodePtr binary_cross_entropy(Tape& tape, const NodePtr& p, const Vector& targets);

/// Clamp applied to probabilities before any log (saturated discriminators).
inline constexpr double kProbEps = 1e-7;

/// value <- value - lr*(grad + l2*value*[decay]) per param, then grads are
/// zeroed. momentum > 0 routes the effective gradient through a velocity
/// buffer. lr == 0 is the identity on values; lr < 0 is rejected.
void sgd_step(std::span<Param* const> params, double lr, double l2,
              double momentum = 0.0);
void sgd_step(std::initializer_list<Param*> params, double lr, double l2,
              double momentum = 0.0);

void zero_grads(std::span<Param* const> params);

/// Central-difference gradient check. `eval(true)` must run a fresh forward +
/// backward pass (grads land in the params); `eval(false)` only evaluates the
/// scalar. Returns max over coordinates of |analytic - numeric| /
/// max(1, |analytic|, |numeric|).
double grad_check(const std::function<double(bool with_grad)>& eval,
                  std::span<Param* const> params, double eps = 1e-5);

}  // namespace shiftlab
