#include "shiftlab/normalization.hpp"

#include <cmath>
#include <utility>

namespace shiftlab {

namespace {

using RowVector = Eigen::RowVectorXd;

// Per-channel mean and biased variance over the given rows.
void subset_stats(const Matrix& x, const std::vector<int>& rows, Vector& mean,
                  Vector& var) {
  const double m = static_cast<double>(rows.size());
  mean = Vector::Zero(x.cols());
  for (int r : rows) mean += x.row(r).transpose();
  mean /= m;
  var = Vector::Zero(x.cols());
  for (int r : rows) {
    var.array() += (x.row(r).transpose() - mean).array().square();
  }
  var /= m;
}

void update_running(Vector& run_mean, Vector& run_var, const Vector& mean,
                    const Vector& var, double momentum) {
  run_mean = (1.0 - momentum) * run_mean + momentum * mean;
  run_var = (1.0 - momentum) * run_var + momentum * var;
}

// y = gamma .* (x - mean)/sqrt(var+eps) + beta for every row, statistics taken
// from `stat_rows`. Backward pushes the statistic-path terms onto the stat
// rows only; every row gets the direct term.
NodePtr standardize_with_stats(Tape& tape, const NodePtr& x, NormState& state,
                               std::vector<int> stat_rows, const Vector& mean,
                               const Vector& var) {
  Vector sdev = (var.array() + state.eps).sqrt();
  Matrix xhat = x->value;
  xhat.rowwise() -= mean.transpose();
  xhat.array().rowwise() /= sdev.transpose().array();

  Matrix y = xhat;
  y.array().rowwise() *= state.gamma.value.row(0).array();
  y.rowwise() += state.beta.value.row(0);
  auto out = tape.leaf(std::move(y));

  RowVector gval = state.gamma.value.row(0);
  tape.record([x, out, &state, stat_rows = std::move(stat_rows), mean, sdev,
               xhat = std::move(xhat), gval] {
    const Matrix& dy = out->grad;
    state.gamma.grad.row(0) +=
        (dy.array() * xhat.array()).colwise().sum().matrix();
    state.beta.grad.row(0) += dy.colwise().sum();

    Matrix h = dy.array().rowwise() * gval.array();
    Matrix cen = x->value;
    cen.rowwise() -= mean.transpose();
    RowVector h_sum = h.colwise().sum();
    RowVector hc_sum = (h.array() * cen.array()).colwise().sum();

    x->grad.array() += h.array().rowwise() / sdev.transpose().array();
    const double m = static_cast<double>(stat_rows.size());
    const RowVector t1 = h_sum.array() / (m * sdev.transpose().array());
    const RowVector t2inv =
        hc_sum.array() / (m * sdev.transpose().array().cube());
    for (int r : stat_rows) {
      x->grad.row(r).array() -= t1.array() + cen.row(r).array() * t2inv.array();
    }
  });
  return out;
}

// Inference path shared by batch_norm / dan_norm: frozen statistics, so the
// op is an elementwise affine map.
NodePtr affine_with_running(Tape& tape, const NodePtr& x, NormState& state,
                            const Vector& run_mean, const Vector& run_var) {
  Vector sdev = (run_var.array() + state.eps).sqrt();
  Matrix xhat = x->value;
  xhat.rowwise() -= run_mean.transpose();
  xhat.array().rowwise() /= sdev.transpose().array();
  Matrix y = xhat;
  y.array().rowwise() *= state.gamma.value.row(0).array();
  y.rowwise() += state.beta.value.row(0);
  auto out = tape.leaf(std::move(y));

  RowVector gval = state.gamma.value.row(0);
  tape.record([x, out, &state, sdev, xhat = std::move(xhat), gval] {
    const Matrix& dy = out->grad;
    state.gamma.grad.row(0) +=
        (dy.array() * xhat.array()).colwise().sum().matrix();
    state.beta.grad.row(0) += dy.colwise().sum();
    x->grad.array() += (dy.array().rowwise() * gval.array()).rowwise() /
                       sdev.transpose().array();
  });
  return out;
}

}  // namespace

std::string to_string(NormKind kind) {
  switch (kind) {
    case NormKind::BatchNorm: return "batch";
    case NormKind::GroupNormWS: return "group_ws";
    case NormKind::DomainAgnostic: return "dan";
    case NormKind::TransNorm: return "trans";
  }
  return "?";
}

NormKind norm_kind_from_string(const std::string& name) {
  if (name == "batch") return NormKind::BatchNorm;
  if (name == "group_ws") return NormKind::GroupNormWS;
  if (name == "dan") return NormKind::DomainAgnostic;
  if (name == "trans") return NormKind::TransNorm;
  throw ConfigError("unknown normalization kind: " + name);
}

std::vector<int> DomainMask::source_rows() const {
  std::vector<int> rows;
  for (int i = 0; i < size(); ++i) {
    if (is_source[i]) rows.push_back(i);
  }
  return rows;
}

std::vector<int> DomainMask::target_rows() const {
  std::vector<int> rows;
  for (int i = 0; i < size(); ++i) {
    if (!is_source[i]) rows.push_back(i);
  }
  return rows;
}

NormState::NormState(int channels, int groups_)
    : gamma(Matrix::Ones(1, channels), /*decay_flag=*/false),
      beta(Matrix::Zero(1, channels), /*decay_flag=*/false),
      run_mean_src(Vector::Zero(channels)),
      run_var_src(Vector::Ones(channels)),
      run_mean_tgt(Vector::Zero(channels)),
      run_var_tgt(Vector::Ones(channels)),
      groups(groups_) {}

NodePtr batch_norm(Tape& tape, const NodePtr& x, NormState& state,
                   bool training) {
  if (!training) {
    return affine_with_running(tape, x, state, state.run_mean_src,
                               state.run_var_src);
  }
  if (x->value.rows() < 2) {
    throw DataError("batch too small for batch statistics");
  }
  std::vector<int> all(x->value.rows());
  for (int i = 0; i < static_cast<int>(all.size()); ++i) all[i] = i;
  Vector mean, var;
  subset_stats(x->value, all, mean, var);
  update_running(state.run_mean_src, state.run_var_src, mean, var,
                 state.momentum);
  return standardize_with_stats(tape, x, state, std::move(all), mean, var);
}

NodePtr dan_norm(Tape& tape, const NodePtr& x, const DomainMask& mask,
                 NormState& state, bool training) {
  if (!training) {
    return affine_with_running(tape, x, state, state.run_mean_src,
                               state.run_var_src);
  }
  if (mask.size() != x->value.rows()) {
    throw ShapeError("dan_norm: mask length " + std::to_string(mask.size()) +
                     " for batch " + shape_str(x->value));
  }
  std::vector<int> src = mask.source_rows();
  if (src.size() < 2) {
    throw DataError("dan_norm needs >= 2 source rows for batch statistics");
  }
  Vector mean, var;
  subset_stats(x->value, src, mean, var);
  update_running(state.run_mean_src, state.run_var_src, mean, var,
                 state.momentum);
  return standardize_with_stats(tape, x, state, std::move(src), mean, var);
}

NodePtr group_norm(Tape& tape, const NodePtr& x, NormState& state) {
  const Eigen::Index batch = x->value.rows();
  const Eigen::Index channels = x->value.cols();
  if (state.groups < 1 || channels % state.groups != 0) {
    throw ConfigError("group_norm: groups=" + std::to_string(state.groups) +
                      " does not divide channels=" + std::to_string(channels));
  }
  const Eigen::Index gsize = channels / state.groups;

  Matrix xhat(batch, channels);
  Matrix sdev(batch, state.groups);
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (int g = 0; g < state.groups; ++g) {
      auto block = x->value.row(i).segment(g * gsize, gsize);
      const double mu = block.mean();
      const double var = (block.array() - mu).square().mean();
      const double s = std::sqrt(var + state.eps);
      sdev(i, g) = s;
      xhat.row(i).segment(g * gsize, gsize) = (block.array() - mu) / s;
    }
  }
  Matrix y = xhat;
  y.array().rowwise() *= state.gamma.value.row(0).array();
  y.rowwise() += state.beta.value.row(0);
  auto out = tape.leaf(std::move(y));

  RowVector gval = state.gamma.value.row(0);
  tape.record([x, out, &state, xhat = std::move(xhat), sdev = std::move(sdev),
               gval, gsize] {
    const Matrix& dy = out->grad;
    state.gamma.grad.row(0) +=
        (dy.array() * xhat.array()).colwise().sum().matrix();
    state.beta.grad.row(0) += dy.colwise().sum();

    const double n = static_cast<double>(gsize);
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      for (Eigen::Index g = 0; g < sdev.cols(); ++g) {
        auto h = (dy.row(i).segment(g * gsize, gsize).array() *
                  gval.segment(g * gsize, gsize).array())
                     .eval();
        auto xh = xhat.row(i).segment(g * gsize, gsize).array();
        const double s = sdev(i, g);
        const double s1 = h.sum();
        const double s2 = (h * xh).sum();  // sum h*(x-mu)/s
        x->grad.row(i).segment(g * gsize, gsize).array() +=
            h / s - s1 / (n * s) - xh * s2 / (n * s);
      }
    }
  });
  return out;
}

NodePtr weight_standardize(Tape& tape, const NodePtr& w) {
  const Eigen::Index fan_in = w->value.rows();
  if (fan_in < 2) {
    throw ConfigError("weight_standardize: needs >= 2 input rows, got " +
                      std::to_string(fan_in));
  }
  RowVector mean = w->value.colwise().mean();
  Matrix cen = w->value.rowwise() - mean;
  RowVector var = cen.array().square().colwise().mean();
  RowVector sdev = (var.array() + kWsEps).sqrt();
  Matrix what = cen.array().rowwise() / sdev.array();
  auto out = tape.leaf(what);

  tape.record([w, out, cen = std::move(cen), sdev, fan_in] {
    const Matrix& dy = out->grad;
    const double m = static_cast<double>(fan_in);
    RowVector s1 = dy.colwise().sum();
    RowVector s2 = (dy.array() * cen.array()).colwise().sum();
    w->grad.array() += dy.array().rowwise() / sdev.array();
    w->grad.array() -=
        ((Matrix::Ones(dy.rows(), 1) * (s1.array() / (m * sdev.array())).matrix())
             .array() +
         cen.array().rowwise() * (s2.array() / (m * sdev.array().cube())));
  });
  return out;
}

NodePtr weight_standardize(Tape& tape, Param& w) {
  return weight_standardize(tape, watch(tape, w));
}

Vector transferability_alpha(const Vector& mean_src, const Vector& var_src,
                             const Vector& mean_tgt, const Vector& var_tgt,
                             double eps) {
  Vector d = (mean_src.array() / (var_src.array() + eps).sqrt() -
              mean_tgt.array() / (var_tgt.array() + eps).sqrt())
                 .abs();
  Vector w = (1.0 + d.array()).inverse();
  return static_cast<double>(d.size()) * w / w.sum();
}

NodePtr trans_norm(Tape& tape, const NodePtr& x, const DomainMask& mask,
                   NormState& state, bool training) {
  if (mask.size() != x->value.rows()) {
    throw ShapeError("trans_norm: mask length " + std::to_string(mask.size()) +
                     " for batch " + shape_str(x->value));
  }
  if (!training) {
    // Frozen running statistics per declared domain; alpha from running stats.
    Vector alpha = transferability_alpha(state.run_mean_src, state.run_var_src,
                                         state.run_mean_tgt, state.run_var_tgt,
                                         state.eps);
    RowVector amp = (1.0 + alpha.array()).transpose();
    Vector sdev_s = (state.run_var_src.array() + state.eps).sqrt();
    Vector sdev_t = (state.run_var_tgt.array() + state.eps).sqrt();
    Matrix xhat(x->value.rows(), x->value.cols());
    for (Eigen::Index i = 0; i < x->value.rows(); ++i) {
      const Vector& mu = mask.is_source[i] ? state.run_mean_src : state.run_mean_tgt;
      const Vector& sd = mask.is_source[i] ? sdev_s : sdev_t;
      xhat.row(i) = ((x->value.row(i).transpose() - mu).array() / sd.array())
                        .transpose();
    }
    Matrix y = xhat;
    y.array().rowwise() *= state.gamma.value.row(0).array();
    y.rowwise() += state.beta.value.row(0);
    y.array().rowwise() *= amp.array();
    auto out = tape.leaf(std::move(y));

    RowVector gval = state.gamma.value.row(0);
    std::vector<bool> is_source = mask.is_source;
    tape.record([x, out, &state, xhat = std::move(xhat), gval, amp, sdev_s,
                 sdev_t, is_source = std::move(is_source)] {
      Matrix da = out->grad.array().rowwise() * amp.array();
      state.gamma.grad.row(0) +=
          (da.array() * xhat.array()).colwise().sum().matrix();
      state.beta.grad.row(0) += da.colwise().sum();
      Matrix h = da.array().rowwise() * gval.array();
      for (Eigen::Index i = 0; i < h.rows(); ++i) {
        const Vector& sd = is_source[i] ? sdev_s : sdev_t;
        x->grad.row(i).array() += h.row(i).array() / sd.transpose().array();
      }
    });
    return out;
  }

  std::vector<int> src = mask.source_rows();
  std::vector<int> tgt = mask.target_rows();
  if (src.size() < 2 || tgt.size() < 2) {
    throw DataError(
        "trans_norm training batch must contain >= 2 rows of each domain");
  }
  Vector mean_s, var_s, mean_t, var_t;
  subset_stats(x->value, src, mean_s, var_s);
  subset_stats(x->value, tgt, mean_t, var_t);
  update_running(state.run_mean_src, state.run_var_src, mean_s, var_s,
                 state.momentum);
  update_running(state.run_mean_tgt, state.run_var_tgt, mean_t, var_t,
                 state.momentum);

  // alpha is a constant for the backward pass by construction.
  Vector alpha =
      transferability_alpha(mean_s, var_s, mean_t, var_t, state.eps);
  RowVector amp = (1.0 + alpha.array()).transpose();

  Vector sdev_s = (var_s.array() + state.eps).sqrt();
  Vector sdev_t = (var_t.array() + state.eps).sqrt();
  Matrix xhat(x->value.rows(), x->value.cols());
  for (int r : src) {
    xhat.row(r) = ((x->value.row(r).transpose() - mean_s).array() /
                   sdev_s.array())
                      .transpose();
  }
  for (int r : tgt) {
    xhat.row(r) = ((x->value.row(r).transpose() - mean_t).array() /
                   sdev_t.array())
                      .transpose();
  }
  Matrix y = xhat;
  y.array().rowwise() *= state.gamma.value.row(0).array();
  y.rowwise() += state.beta.value.row(0);
  y.array().rowwise() *= amp.array();
  auto out = tape.leaf(std::move(y));

  RowVector gval = state.gamma.value.row(0);
  tape.record([x, out, &state, xhat = std::move(xhat), gval, amp,
               src = std::move(src), tgt = std::move(tgt), mean_s, mean_t,
               sdev_s, sdev_t] {
    Matrix da = out->grad.array().rowwise() * amp.array();
    state.gamma.grad.row(0) +=
        (da.array() * xhat.array()).colwise().sum().matrix();
    state.beta.grad.row(0) += da.colwise().sum();
    Matrix h = da.array().rowwise() * gval.array();

    auto domain_backward = [&](const std::vector<int>& rows, const Vector& mean,
                               const Vector& sdev) {
      const double m = static_cast<double>(rows.size());
      RowVector h_sum = RowVector::Zero(h.cols());
      RowVector hc_sum = RowVector::Zero(h.cols());
      for (int r : rows) {
        h_sum += h.row(r);
        hc_sum.array() +=
            h.row(r).array() * (x->value.row(r) - mean.transpose()).array();
      }
      const RowVector t1 = h_sum.array() / (m * sdev.transpose().array());
      const RowVector t2inv =
          hc_sum.array() / (m * sdev.transpose().array().cube());
      for (int r : rows) {
        x->grad.row(r).array() +=
            h.row(r).array() / sdev.transpose().array() - t1.array() -
            (x->value.row(r) - mean.transpose()).array() * t2inv.array();
      }
    };
    domain_backward(src, mean_s, sdev_s);
    domain_backward(tgt, mean_t, sdev_t);
  });
  return out;
}

}  // namespace shiftlab
