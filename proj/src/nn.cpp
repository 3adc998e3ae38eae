#include "pcbd/nn.hpp"

#include <algorithm>
#include <cmath>

#include "pcbd/error.hpp"

namespace pcbd::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

Tensor broadcast_rows(const Tensor& global, Index segment) {
  Tensor out(global.rows() * segment, global.cols());
  for (Index b = 0; b < global.rows(); ++b) {
    out.middleRows(b * segment, segment).rowwise() = global.row(b);
  }
  return out;
}

// Column reductions walk rows so row-major storage is read contiguously.
Eigen::RowVectorXd col_sum(const Tensor& x) {
  Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(x.cols());
  for (Index i = 0; i < x.rows(); ++i) s += x.row(i);
  return s;
}

Eigen::RowVectorXd col_dot(const Tensor& a, const Tensor& b) {
  Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(a.cols());
  for (Index i = 0; i < a.rows(); ++i) s.array() += a.row(i).array() * b.row(i).array();
  return s;
}

}  // namespace

Dense::Dense(Index in, Index out, Kind kind) : kind_(kind) {
  weight_.value = Tensor::Zero(in, out);
  bias_.value = Tensor::Zero(1, out);
  if (has_bn()) {
    gamma_.value = Tensor::Ones(1, out);
    beta_.value = Tensor::Zero(1, out);
    running_mean_ = Tensor::Zero(1, out);
    running_var_ = Tensor::Ones(1, out);
  }
  zero_grad();
}

void Dense::init(SeededRng& rng) {
  const double fan_in = double(in_dim());
  const double bound = kind_ == Kind::Linear ? std::sqrt(3.0 / fan_in) : std::sqrt(6.0 / fan_in);
  for (Index i = 0; i < weight_.value.size(); ++i) weight_.value.data()[i] = rng.uniform(-bound, bound);
  bias_.value.setZero();
}

Tensor Dense::affine(const Tensor& x) const {
  require(x.cols() == in_dim(), "Dense input has " + std::to_string(x.cols()) + " columns, expected " +
                                    std::to_string(in_dim()));
  Tensor pre(x.rows(), out_dim());
  pre.noalias() = x * weight_.value;
  // Batch norm absorbs the bias; activate() applies it where it matters.
  if (!has_bn()) pre.rowwise() += bias_.value.row(0);
  return pre;
}

Tensor Dense::affine(const Tensor& local, const Tensor& global, Index segment) const {
  const Index c1 = local.cols();
  require(c1 + global.cols() == in_dim(), "Dense concat input width mismatch");
  require(segment > 0 && local.rows() == global.rows() * segment, "Dense concat segment mismatch");
  Tensor pre(local.rows(), out_dim());
  pre.noalias() = local * weight_.value.topRows(c1);
  Tensor g(global.rows(), out_dim());
  g.noalias() = global * weight_.value.bottomRows(global.cols());
  if (!has_bn()) g.rowwise() += bias_.value.row(0);
  for (Index b = 0; b < global.rows(); ++b) {
    pre.middleRows(b * segment, segment).rowwise() += g.row(b);
  }
  return pre;
}

Tensor Dense::activate(Tensor pre, Mode mode, Cache* cache) const {
  const bool relu = kind_ != Kind::Linear;
  if (!has_bn()) {
    if (relu) pre = pre.cwiseMax(0.0);
    return pre;
  }
  const Index rows = pre.rows();
  const bool train = mode == Mode::Train;
  Eigen::RowVectorXd shift, var;
  if (train) {
    // One pass of shifted sums; the first row as shift keeps the variance stable.
    const Eigen::RowVectorXd k0 = pre.row(0);
    Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(pre.cols());
    Eigen::RowVectorXd s2 = Eigen::RowVectorXd::Zero(pre.cols());
    for (Index i = 0; i < rows; ++i) {
      const auto d = pre.row(i).array() - k0.array();
      s1.array() += d;
      s2.array() += d * d;
    }
    const double n = double(rows);
    const Eigen::RowVectorXd m1 = s1 / n;
    shift = k0 + m1;
    var = (s2 / n).array() - m1.array().square();
    var = var.cwiseMax(0.0);
    if (cache) {
      cache->batch_mean = shift + bias_.value.row(0);
      cache->batch_var = var;
    }
  } else {
    shift = running_mean_.row(0) - bias_.value.row(0);
    var = running_var_.row(0);
  }
  const Eigen::RowVectorXd inv_std = (var.array() + kBnEps).rsqrt().matrix();
  const auto gamma = gamma_.value.row(0).array();
  const auto beta = beta_.value.row(0).array();
  if (cache) {
    cache->xhat->resize(rows, pre.cols());
    cache->inv_std = inv_std;
  }
  for (Index i = 0; i < rows; ++i) {
    auto r = pre.row(i).array();
    r -= shift.array();
    r *= inv_std.array();
    if (cache) cache->xhat->row(i) = r.matrix();
    r = r * gamma + beta;
    if (relu) r = r.max(0.0);
  }
  return pre;
}

Tensor Dense::record(Tensor pre, Mode mode) {
  Cache cache{&xhat_, {}, {}, {}};
  Tensor out = activate(std::move(pre), mode, &cache);
  mode_ = mode;
  rows_ = out.rows();
  inv_std_ = std::move(cache.inv_std);
  // The batch-norm ReLU mask is recomputed from xhat in backward.
  if (kind_ == Kind::Relu) out_ = out;
  if (has_bn() && mode == Mode::Train) {
    const double n = double(out.rows());
    const double unbias = out.rows() > 1 ? n / (n - 1.0) : 1.0;
    running_mean_ = kBnMomentum * running_mean_ + (1.0 - kBnMomentum) * Tensor(cache.batch_mean);
    running_var_ = kBnMomentum * running_var_ + (1.0 - kBnMomentum) * Tensor(cache.batch_var * unbias);
  }
  return out;
}

Tensor Dense::forward(Tensor x, Mode mode) {
  Tensor pre = affine(x);
  in_ = std::move(x);
  fused_ = false;
  return record(std::move(pre), mode);
}

Tensor Dense::forward(Tensor local, const Tensor& global, Index segment, Mode mode) {
  Tensor pre = affine(local, global, segment);
  in_ = std::move(local);
  global_ = global;
  segment_ = segment;
  fused_ = true;
  return record(std::move(pre), mode);
}

Tensor Dense::infer(const Tensor& x) const { return activate(affine(x), Mode::Infer, nullptr); }

Tensor Dense::infer(const Tensor& local, const Tensor& global, Index segment) const {
  return activate(affine(local, global, segment), Mode::Infer, nullptr);
}

Tensor Dense::backward(const Tensor& grad_out, Tensor* grad_global, bool accumulate) {
  require(grad_out.rows() == rows_ && grad_out.cols() == out_dim(), "Dense backward gradient shape mismatch");
  const Index rows = grad_out.rows();
  Tensor g(rows, out_dim());
  Eigen::RowVectorXd sum_g = Eigen::RowVectorXd::Zero(out_dim());
  if (has_bn()) {
    const auto gamma = gamma_.value.row(0).array();
    const auto beta = beta_.value.row(0).array();
    Eigen::RowVectorXd sum_gx = Eigen::RowVectorXd::Zero(out_dim());
    for (Index i = 0; i < rows; ++i) {
      const auto xh = xhat_.row(i).array();
      g.row(i) = (xh * gamma + beta > 0.0).select(grad_out.row(i).array(), 0.0).matrix();
      sum_g += g.row(i);
      sum_gx.array() += g.row(i).array() * xh;
    }
    if (accumulate) {
      gamma_.grad += sum_gx;
      beta_.grad += sum_g;
    }
    const Eigen::Array<double, 1, Eigen::Dynamic> scale = gamma * inv_std_.row(0).array();
    if (mode_ == Mode::Train) {
      const double n = double(rows);
      const Eigen::Array<double, 1, Eigen::Dynamic> s = scale / n;
      for (Index i = 0; i < rows; ++i) {
        auto r = g.row(i).array();
        r = s * (n * r - sum_g.array() - xhat_.row(i).array() * sum_gx.array());
      }
    } else {
      // With running statistics the bias no longer cancels.
      Eigen::RowVectorXd sum_b = Eigen::RowVectorXd::Zero(out_dim());
      for (Index i = 0; i < rows; ++i) {
        g.row(i).array() *= scale;
        sum_b += g.row(i);
      }
      if (accumulate) bias_.grad += sum_b;
    }
  } else {
    if (kind_ == Kind::Relu) {
      for (Index i = 0; i < rows; ++i) {
        g.row(i) = (out_.row(i).array() > 0.0).select(grad_out.row(i).array(), 0.0).matrix();
        sum_g += g.row(i);
      }
    } else {
      g = grad_out;
      sum_g = col_sum(g);
    }
    if (accumulate) bias_.grad += sum_g;
  }
  if (!fused_) {
    if (accumulate) weight_.grad.noalias() += in_.transpose() * g;
    Tensor grad_in(rows, in_dim());
    grad_in.noalias() = g * weight_.value.transpose();
    return grad_in;
  }
  const Index c1 = in_.cols();
  const Index c2 = global_.cols();
  const Tensor seg = segment_sum(g, segment_);
  if (accumulate) {
    weight_.grad.topRows(c1).noalias() += in_.transpose() * g;
    weight_.grad.bottomRows(c2).noalias() += global_.transpose() * seg;
  }
  if (grad_global) {
    *grad_global = Tensor(seg.rows(), c2);
    grad_global->noalias() = seg * weight_.value.bottomRows(c2).transpose();
  }
  Tensor grad_in(rows, c1);
  grad_in.noalias() = g * weight_.value.topRows(c1).transpose();
  return grad_in;
}

std::vector<Param*> Dense::params() {
  if (has_bn()) return {&weight_, &bias_, &gamma_, &beta_};
  return {&weight_, &bias_};
}

void Dense::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

void Dense::export_arrays(const std::string& prefix, std::vector<NamedArray>& out) const {
  out.push_back({prefix + ".W", weight_.value});
  out.push_back({prefix + ".b", bias_.value});
  if (has_bn()) {
    out.push_back({prefix + ".bn_gamma", gamma_.value});
    out.push_back({prefix + ".bn_beta", beta_.value});
    out.push_back({prefix + ".bn_running_mean", running_mean_});
    out.push_back({prefix + ".bn_running_var", running_var_});
  }
}

void Dense::import_arrays(const std::string& prefix, const ArrayMap& arrays) {
  auto load = [&](const std::string& name, Tensor& dst) {
    auto it = arrays.find(prefix + name);
    if (it == arrays.end()) throw Error(ErrorKind::ShapeMismatch, "checkpoint lacks " + prefix + name);
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "checkpoint shape mismatch for " + prefix + name);
    }
    dst = it->second;
  };
  load(".W", weight_.value);
  load(".b", bias_.value);
  if (has_bn()) {
    load(".bn_gamma", gamma_.value);
    load(".bn_beta", beta_.value);
    load(".bn_running_mean", running_mean_);
    load(".bn_running_var", running_var_);
  }
}

Tensor MaxPool::forward(const Tensor& x, Index segment) {
  if (segment < 1 || x.rows() == 0) throw Error(ErrorKind::EmptyInput, "max-pool over empty input");
  require(x.rows() % segment == 0, "max-pool rows not divisible by segment");
  const Index batches = x.rows() / segment;
  rows_ = x.rows();
  segment_ = segment;
  argmax_.resize(batches, x.cols());
  Tensor out(batches, x.cols());
  for (Index b = 0; b < batches; ++b) {
    const Index base = b * segment;
    auto best = out.row(b).array();
    auto arg = argmax_.row(b).array();
    best = x.row(base).array();
    arg.setConstant(base);
    for (Index r = base + 1; r < base + segment; ++r) {
      const auto v = x.row(r).array();
      arg = (v > best).select(Eigen::Array<Index, 1, Eigen::Dynamic>::Constant(x.cols(), r), arg);
      best = best.max(v);
    }
  }
  return out;
}

Tensor MaxPool::backward(const Tensor& grad_out) const {
  require(grad_out.rows() == argmax_.rows() && grad_out.cols() == argmax_.cols(),
          "max-pool backward gradient shape mismatch");
  Tensor grad = Tensor::Zero(rows_, grad_out.cols());
  for (Index b = 0; b < grad_out.rows(); ++b)
    for (Index c = 0; c < grad_out.cols(); ++c) grad(argmax_(b, c), c) += grad_out(b, c);
  return grad;
}

Tensor maxpool_points(const Tensor& x, Index segment) {
  MaxPool pool;
  return pool.forward(x, segment);
}

Tensor concat_broadcast(const Tensor& local, const Tensor& global, Index segment) {
  require(segment > 0 && local.rows() == global.rows() * segment, "concat_broadcast shape mismatch");
  Tensor out(local.rows(), local.cols() + global.cols());
  out.leftCols(local.cols()) = local;
  out.rightCols(global.cols()) = broadcast_rows(global, segment);
  return out;
}

std::pair<Tensor, Tensor> concat_broadcast_backward(const Tensor& grad, Index local_cols, Index segment) {
  require(local_cols <= grad.cols(), "concat_broadcast_backward width mismatch");
  return {grad.leftCols(local_cols), segment_sum(grad.rightCols(grad.cols() - local_cols), segment)};
}

Tensor segment_sum(const Tensor& x, Index segment) {
  require(segment > 0 && x.rows() % segment == 0, "segment_sum rows not divisible by segment");
  Tensor out(x.rows() / segment, x.cols());
  for (Index b = 0; b < out.rows(); ++b) out.row(b) = col_sum(x.middleRows(b * segment, segment));
  return out;
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  for (Index r = 0; r < p.rows(); ++r) {
    const double mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

XentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  require(Index(labels.size()) == logits.rows(), "softmax_xent label count mismatch");
  if (logits.cols() < 2) throw Error(ErrorKind::ShapeMismatch, "softmax_xent needs K >= 2");
  XentResult res;
  res.probs = softmax(logits);
  res.grad = res.probs;
  const double inv_b = 1.0 / double(logits.rows());
  for (Index r = 0; r < logits.rows(); ++r) {
    const int y = labels[std::size_t(r)];
    if (y < 0 || y >= logits.cols()) {
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " with K=" +
                                                  std::to_string(logits.cols()));
    }
    // log-sum-exp form keeps the loss finite for saturated logits.
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    res.loss += (lse - logits(r, y)) * inv_b;
    res.grad(r, y) -= 1.0;
  }
  res.grad *= inv_b;
  return res;
}

void adam_step(const std::vector<Param*>& params, AdamState& state) {
  if (state.m.empty()) {
    for (const Param* p : params) {
      state.m.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
    }
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          "Adam state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->value.rows() == state.m[i].rows() && params[i]->value.cols() == state.m[i].cols() &&
                params[i]->grad.rows() == params[i]->value.rows() &&
                params[i]->grad.cols() == params[i]->value.cols(),
            "Adam moment/parameter shape mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    const auto g = params[i]->grad.array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    params[i]->value.array() -= state.lr * (m / c1) / ((v / c2).sqrt() + state.eps);
  }
}

bool GradCheckReport::passed() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const GradCheckEntry& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : blocks) worst = std::max(worst, e.rel_error);
  return worst;
}

GradCheckReport grad_check(const std::function<double()>& loss, std::vector<GradBlock>& blocks, double tol,
                           double h_rel) {
  GradCheckReport report;
  report.tol = tol;
  for (auto& block : blocks) {
    Tensor& x = *block.value;
    require(block.analytic.rows() == x.rows() && block.analytic.cols() == x.cols(),
            "grad_check analytic gradient shape mismatch for " + block.name);
    Tensor numeric(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      const double orig = x.data()[i];
      const double h = h_rel * std::max(1.0, std::abs(orig));
      x.data()[i] = orig + h;
      const double up = loss();
      x.data()[i] = orig - h;
      const double down = loss();
      x.data()[i] = orig;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    GradCheckEntry entry;
    entry.name = block.name;
    entry.max_abs_error = (block.analytic - numeric).cwiseAbs().maxCoeff();
    const double scale = std::max(block.analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
    entry.rel_error = scale > 0.0 ? entry.max_abs_error / scale : 0.0;
    entry.passed = entry.rel_error <= tol;
    report.blocks.push_back(entry);
  }
  return report;
}

}  // namespace pcbd::nn
