#include "shiftlab/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace shiftlab {

void Tape::backward(const NodePtr& loss) {
  if (spent_) {
    throw TapeError("backward on a spent tape: re-record the forward pass first");
  }
  if (loss->value.rows() != 1 || loss->value.cols() != 1) {
    throw ShapeError("backward expects a scalar loss, got " + shape_str(loss->value));
  }
  loss->grad(0, 0) = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  spent_ = true;
}

NodePtr watch(Tape& tape, Param& p) {
  auto node = std::make_shared<Node>(p.value);
  tape.record([node, &p] { p.grad += node->grad; });
  return node;
}

NodePtr linear(Tape& tape, const NodePtr& x, const NodePtr& w, const NodePtr& b) {
  if (x->value.cols() != w->value.rows()) {
    throw ShapeError("linear: x is " + shape_str(x->value) + " but w is " +
                     shape_str(w->value));
  }
  if (b->value.rows() != 1 || b->value.cols() != w->value.cols()) {
    throw ShapeError("linear: w is " + shape_str(w->value) + " but b is " +
                     shape_str(b->value));
  }
  Matrix y = x->value * w->value;
  y.rowwise() += b->value.row(0);
  auto out = tape.leaf(std::move(y));
  tape.record([x, w, b, out] {
    x->grad.noalias() += out->grad * w->value.transpose();
    w->grad.noalias() += x->value.transpose() * out->grad;
    b->grad.row(0) += out->grad.colwise().sum();
  });
  return out;
}

NodePtr linear(Tape& tape, const NodePtr& x, Param& w, Param& b) {
  return linear(tape, x, watch(tape, w), watch(tape, b));
}

NodePtr relu(Tape& tape, const NodePtr& x) {
  auto out = tape.leaf(x->value.cwiseMax(0.0));
  tape.record([x, out] {
    x->grad.array() +=
        out->grad.array() * (x->value.array() > 0.0).cast<double>();
  });
  return out;
}

NodePtr sigmoid(Tape& tape, const NodePtr& x) {
  Matrix s = x->value.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  auto out = tape.leaf(std::move(s));
  tape.record([x, out] {
    x->grad.array() +=
        out->grad.array() * out->value.array() * (1.0 - out->value.array());
  });
  return out;
}

NodePtr gather_rows(Tape& tape, const NodePtr& x, std::vector<int> rows) {
  Matrix y(static_cast<Eigen::Index>(rows.size()), x->value.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x->value.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) +
                       " out of range for " + shape_str(x->value));
    }
    y.row(static_cast<Eigen::Index>(i)) = x->value.row(rows[i]);
  }
  auto out = tape.leaf(std::move(y));
  tape.record([x, out, rows = std::move(rows)] {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x->grad.row(rows[i]) += out->grad.row(static_cast<Eigen::Index>(i));
    }
  });
  return out;
}

NodePtr sum(Tape& tape, const NodePtr& x) {
  Matrix y(1, 1);
  y(0, 0) = x->value.sum();
  auto out = tape.leaf(std::move(y));
  tape.record([x, out] { x->grad.array() += out->grad(0, 0); });
  return out;
}

NodePtr square(Tape& tape, const NodePtr& x) {
  auto out = tape.leaf(x->value.cwiseProduct(x->value));
  tape.record([x, out] {
    x->grad.array() += 2.0 * out->grad.array() * x->value.array();
  });
  return out;
}

NodePtr scale(Tape& tape, const NodePtr& x, double c) {
  auto out = tape.leaf(x->value * c);
  tape.record([x, out, c] { x->grad += c * out->grad; });
  return out;
}

NodePtr softmax_cross_entropy(Tape& tape, const NodePtr& logits,
                              const std::vector<int>& labels) {
  const Eigen::Index batch = logits->value.rows();
  const Eigen::Index classes = logits->value.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(y) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
  Matrix sm = logits->value;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double m = sm.row(i).maxCoeff();
    sm.row(i) = (sm.row(i).array() - m).exp();
    const double z = sm.row(i).sum();
    sm.row(i) /= z;
    loss += std::log(z) - (logits->value(i, labels[i]) - m);
  }
  loss /= static_cast<double>(batch);
  Matrix out_v(1, 1);
  out_v(0, 0) = loss;
  auto out = tape.leaf(std::move(out_v));
  tape.record([logits, out, sm = std::move(sm), labels] {
    const double g = out->grad(0, 0) / static_cast<double>(sm.rows());
    Matrix d = sm;
    for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, labels[i]) -= 1.0;
    logits->grad += g * d;
  });
  return out;
}

NodePtr binary_cross_entropy(Tape& tape, const NodePtr& p, const Vector& targets) {
  const Eigen::Index batch = p->value.rows();
  if (p->value.cols() != 1 || targets.size() != batch) {
    throw ShapeError("binary_cross_entropy: p is " + shape_str(p->value) +
                     ", targets length " + std::to_string(targets.size()));
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double pc = std::clamp(p->value(i, 0), kProbEps, 1.0 - kProbEps);
    loss -= targets(i) * std::log(pc) + (1.0 - targets(i)) * std::log(1.0 - pc);
  }
  loss /= static_cast<double>(batch);
  Matrix out_v(1, 1);
  out_v(0, 0) = loss;
  auto out = tape.leaf(std::move(out_v));
  tape.record([p, out, targets] {
    const double g = out->grad(0, 0) / static_cast<double>(p->value.rows());
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      const double raw = p->value(i, 0);
      if (raw <= kProbEps || raw >= 1.0 - kProbEps) continue;  // clamped: flat
      p->grad(i, 0) += g * (-targets(i) / raw + (1.0 - targets(i)) / (1.0 - raw));
    }
  });
  return out;
}

void sgd_step(std::span<Param* const> params, double lr, double l2,
              double momentum) {
  if (lr < 0.0) throw ConfigError("sgd_step: negative learning rate");
  if (l2 < 0.0) throw ConfigError("sgd_step: negative l2");
  for (Param* p : params) {
    Matrix eff = p->grad;
    if (p->decay && l2 != 0.0) eff += l2 * p->value;
    if (momentum > 0.0) {
      if (p->velocity.size() == 0) {
        p->velocity = Matrix::Zero(p->value.rows(), p->value.cols());
      }
      p->velocity = momentum * p->velocity + eff;
      p->value -= lr * p->velocity;
    } else {
      p->value -= lr * eff;
    }
    p->grad.setZero();
  }
}

void sgd_step(std::initializer_list<Param*> params, double lr, double l2,
              double momentum) {
  sgd_step(std::span<Param* const>(params.begin(), params.size()), lr, l2,
           momentum);
}

void zero_grads(std::span<Param* const> params) {
  for (Param* p : params) p->zero_grad();
}

double grad_check(const std::function<double(bool)>& eval,
                  std::span<Param* const> params, double eps) {
  zero_grads(params);
  eval(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param* p = params[k];
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + eps;
        const double up = eval(false);
        p->value(i, j) = saved - eps;
        const double down = eval(false);
        p->value(i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[k](i, j);
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  zero_grads(params);
  return worst;
}

}  // namespace shiftlab
