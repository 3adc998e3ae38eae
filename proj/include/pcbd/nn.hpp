#pragma once

// Reverse-mode building blocks for the fixed point-wise topologies used by
// the autoencoder and the victim classifiers. Activations are 2D row-major
// tensors: one row per point, clouds of a batch stacked vertically. Every
// backward pass is hand-derived and checked against finite differences by
// grad_check.

#include <Eigen/Core>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pcbd/rng.hpp"

namespace pcbd::nn {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

enum class Mode { Train, Infer };

struct Param {
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct NamedArray {
  std::string name;
  Tensor data;
};
using ArrayMap = std::map<std::string, Tensor>;

inline constexpr double kBnMomentum = 0.9;
inline constexpr double kBnEps = 1e-5;

/// Affine layer with optional batch norm (over all rows) and ReLU:
///   BnRelu: ReLU(BN(xW + b))   Relu: ReLU(xW + b)   Linear: xW + b
/// W is (in x out). The two-input overloads compute the layer applied to
/// [local ; global broadcast to each row of its segment] without
/// materialising the concatenation.
class Dense {
 public:
  enum class Kind { BnRelu, Relu, Linear };

  Dense() = default;
  Dense(Index in, Index out, Kind kind);

  void init(SeededRng& rng);

  Index in_dim() const { return weight_.value.rows(); }
  Index out_dim() const { return weight_.value.cols(); }
  Kind kind() const { return kind_; }
  bool has_bn() const { return kind_ == Kind::BnRelu; }

  /// Train mode normalises with batch statistics and updates running stats
  /// (running = momentum * running + (1 - momentum) * batch).
  Tensor forward(Tensor x, Mode mode);
  Tensor forward(Tensor local, const Tensor& global, Index segment, Mode mode);
  Tensor infer(const Tensor& x) const;
  Tensor infer(const Tensor& local, const Tensor& global, Index segment) const;

  /// Uses the cache of the most recent forward. Accumulates parameter
  /// gradients unless accumulate is false. For the two-input form,
  /// grad_global receives the gradient of the broadcast vector rows.
  Tensor backward(const Tensor& grad_out, Tensor* grad_global = nullptr, bool accumulate = true);

  std::vector<Param*> params();
  void zero_grad();

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

  void export_arrays(const std::string& prefix, std::vector<NamedArray>& out) const;
  void import_arrays(const std::string& prefix, const ArrayMap& arrays);

 private:
  Tensor affine(const Tensor& x) const;
  Tensor affine(const Tensor& local, const Tensor& global, Index segment) const;
  struct Cache {
    Tensor* xhat;  // written in place so the buffer is reused across steps
    Tensor inv_std;
    Eigen::RowVectorXd batch_mean, batch_var;
  };
  Tensor activate(Tensor pre, Mode mode, Cache* cache) const;
  Tensor record(Tensor pre, Mode mode);

  Kind kind_ = Kind::Linear;
  Param weight_, bias_, gamma_, beta_;
  Tensor running_mean_, running_var_;

  // cache
  Tensor in_, global_;
  Index segment_ = 0;
  Index rows_ = 0;
  bool fused_ = false;
  Mode mode_ = Mode::Infer;
  Tensor xhat_, inv_std_, out_;
};

/// Column-wise max over each block of `segment` rows; (B*segment x c) -> (B x c).
/// Ties resolve to the lowest row.
class MaxPool {
 public:
  Tensor forward(const Tensor& x, Index segment);
  Tensor backward(const Tensor& grad_out) const;
  const Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& argmax() const {
    return argmax_;
  }

 private:
  Index rows_ = 0;
  Index segment_ = 0;
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax_;
};

Tensor maxpool_points(const Tensor& x, Index segment);

/// [local ; global] with global row b replicated onto rows b*segment..(b+1)*segment-1.
Tensor concat_broadcast(const Tensor& local, const Tensor& global, Index segment);
/// Splits an upstream gradient into (d local, d global); d global sums rows per segment.
std::pair<Tensor, Tensor> concat_broadcast_backward(const Tensor& grad, Index local_cols, Index segment);

/// Sum of each block of `segment` rows.
Tensor segment_sum(const Tensor& x, Index segment);

struct XentResult {
  double loss = 0.0;  // mean over rows
  Tensor grad;        // d loss / d logits
  Tensor probs;
};
/// Row-wise softmax cross-entropy averaged over the batch.
XentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels);
Tensor softmax(const Tensor& logits);

struct AdamState {
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// Bias-corrected Adam update; moments are created on the first call.
void adam_step(const std::vector<Param*>& params, AdamState& state);

struct GradBlock {
  std::string name;
  Tensor* value = nullptr;  // perturbed in place, restored afterwards
  Tensor analytic;
};

struct GradCheckEntry {
  std::string name;
  double max_abs_error = 0.0;
  double rel_error = 0.0;  // max |a - n| / max(max|a|, max|n|)
  bool passed = false;
};

struct GradCheckReport {
  double tol = 0.0;
  std::vector<GradCheckEntry> blocks;

  bool passed() const;
  double max_rel_error() const;
};

/// Central differences with step h_rel * max(1, |x|) on every entry of
/// every block, compared against the supplied analytic gradients.
GradCheckReport grad_check(const std::function<double()>& loss, std::vector<GradBlock>& blocks,
                           double tol = 1e-4, double h_rel = 1e-5);

}  // namespace pcbd::nn
