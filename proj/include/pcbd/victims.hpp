#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcbd/augment.hpp"
#include "pcbd/checkpoint.hpp"
#include "pcbd/nn.hpp"
#include "pcbd/pointcloud.hpp"

namespace pcbd {

enum class Architecture { PointNetLite, EdgeConvLite };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& name);

/// PointNetLite: point-wise widths[0..2] (BN + ReLU), maxpool, head.
/// EdgeConvLite: edge features [x_i ; x_j - x_i] over the k nearest
/// neighbours through edge_widths (BN + ReLU), max over neighbours, one
/// point-wise layer to widths[2], maxpool, head.
/// The head is head_width (ReLU) followed by a linear layer to K logits.
struct VictimSpec {
  Architecture arch = Architecture::PointNetLite;
  int num_classes = 8;
  std::vector<Index> widths{64, 128, 256};
  std::vector<Index> edge_widths{64, 64};
  Index knn_k = 8;
  Index head_width = 128;
  int epochs = 200;
  double lr = 1e-3;
  int batch_size = 16;

  Index feature_dim() const { return widths.back(); }
  void validate() const;
  nlohmann::json to_json() const;
  static VictimSpec from_json(const nlohmann::json& j);
};

struct EpochRecord {
  double loss = 0.0;
  double accuracy = 0.0;
};

class VictimModel {
 public:
  VictimModel(const VictimSpec& spec, SeededRng& init_rng);

  const VictimSpec& spec() const { return spec_; }
  bool trained() const { return trained_; }
  void mark_trained(bool t = true) { trained_ = t; }
  const std::vector<EpochRecord>& training_log() const { return log_; }
  std::vector<EpochRecord>& training_log() { return log_; }

  /// Inference-mode logits for one cloud (1 x K).
  nn::Tensor logits(const PointCloud& x) const;
  int predict(const PointCloud& x) const;
  /// Inference-mode logits for `batch` stacked clouds of n points.
  nn::Tensor infer_batch(const nn::Tensor& points, Index n) const;

  /// Caching forward over `batch` stacked clouds of n points; returns logits.
  nn::Tensor forward_batch(const nn::Tensor& points, Index n, nn::Mode mode);
  /// Point-wise features A_X of the most recent forward_batch
  /// (batch * n rows, feature_dim columns).
  const nn::Tensor& features() const { return features_; }
  /// Backward from logits to A_X only; parameters are not touched.
  nn::Tensor backward_to_features(const nn::Tensor& grad_logits);
  /// Full backward; accumulates parameter gradients and returns d/dpoints.
  nn::Tensor backward(const nn::Tensor& grad_logits, bool accumulate = true);

  std::vector<nn::Param*> params();
  void zero_grad();
  nn::Dense& head_layer(int i) { return head_[std::size_t(i)]; }
  nn::Dense& point_layer(int i) { return point_[std::size_t(i)]; }
  std::size_t point_layer_count() const { return point_.size(); }

  Checkpoint to_checkpoint(std::uint64_t seed) const;
  static VictimModel from_checkpoint(const Checkpoint& ckpt);

 private:
  nn::Tensor edge_features(const nn::Tensor& points, Index n, NeighborTable& table) const;
  nn::Tensor edge_backward(const nn::Tensor& grad_edges) const;

  VictimSpec spec_;
  std::vector<nn::Dense> edge_;   // EdgeConvLite only
  std::vector<nn::Dense> point_;  // last one produces A_X
  std::vector<nn::Dense> head_;
  nn::MaxPool edge_pool_, pool_;
  NeighborTable cached_knn_;      // batch * n rows, indices into the stacked rows
  nn::Tensor features_;
  Index cached_n_ = 0;
  bool trained_ = false;
  std::vector<EpochRecord> log_;
};

/// Per-batch online augmentations, applied in list order to every sample.
using EpochHook = std::function<void(int epoch, const EpochRecord&)>;

/// Adam with softmax cross-entropy. Throws ConfigMismatch when a label
/// falls outside spec.num_classes or clouds differ in size.
VictimModel train_victim(const LabeledDataset& data, const VictimSpec& spec, SeededRng& rng,
                         const std::vector<AugmentationSpec>& augmentations = {}, const EpochHook& on_epoch = {});

/// Batched inference predictions, in dataset order.
std::vector<int> predict_all(const VictimModel& model, const std::vector<PointCloud>& clouds);

}  // namespace pcbd
