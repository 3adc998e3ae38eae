#pragma once

#include <functional>
#include <vector>

#include "json.hpp"
#include "pcbd/checkpoint.hpp"
#include "pcbd/nn.hpp"
#include "pcbd/pointcloud.hpp"

namespace pcbd {

struct AEConfig {
  Index latent_dim = 128;
  Index grid_side = 16;       // grid_side^2 reconstructed points
  double grid_extent = 0.5;   // grid spans [-extent, extent]^2 on z = 0
  // Encoder widths: point-wise l1..l3, then the hidden width of the layer
  // applied to the [local ; global] features.
  Index enc_local = 32;
  Index enc_mid = 64;
  Index enc_global = 128;
  Index enc_mix = 128;
  Index fold_hidden = 128;
  double lambda_cd = 1.0;
  double lambda_swd = 0.001;
  int epochs = 300;
  double lr = 1e-3;
  int batch_size = 16;
  Index swd_projections = 16;

  Index num_points() const { return grid_side * grid_side; }

  /// n = 256 desk profile.
  static AEConfig toy();
  /// n = 1024, latent 512.
  static AEConfig full_scale();

  nlohmann::json to_json() const;
  static AEConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct LatentCode {
  Eigen::RowVectorXd z;
};

/// Folding autoencoder: encoder psi, a fixed 2D grid and two fold modules.
/// Each fold is a ReLU layer on [points ; z] followed by a linear layer to
/// 3D coordinates.
class AEModel {
 public:
  AEModel(const AEConfig& config, SeededRng& init_rng);

  const AEConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  void mark_trained(bool t = true) { trained_ = t; }
  const nn::Tensor& grid() const { return grid_; }
  const std::vector<double>& training_log() const { return log_; }
  std::vector<double>& training_log() { return log_; }

  /// Inference-mode encoder/decoder (running BN statistics).
  LatentCode encode(const PointCloud& x) const;
  PointCloud decode(const LatentCode& z) const;
  PointCloud reconstruct(const PointCloud& x) const { return decode(encode(x)); }

  /// Caching passes over a stack of `batch` clouds of n points each.
  nn::Tensor encode_batch(const nn::Tensor& points, Index n, nn::Mode mode);
  nn::Tensor decode_batch(const nn::Tensor& z, nn::Mode mode);
  /// Backward through the most recent decode_batch; returns d/dz.
  nn::Tensor backward_decode(const nn::Tensor& grad_points);
  /// Backward through the most recent encode_batch; returns d/dpoints.
  nn::Tensor backward_encode(const nn::Tensor& grad_z);

  std::vector<nn::Param*> params();
  void zero_grad();

  nn::Dense& encoder_layer(int i) { return enc_[std::size_t(i)]; }
  nn::Dense& fold_layer(int fold, int i) { return fold_[std::size_t(2 * fold + i)]; }

  Checkpoint to_checkpoint(std::uint64_t seed) const;
  static AEModel from_checkpoint(const Checkpoint& ckpt);

 private:
  void check_input(const PointCloud& x) const;

  AEConfig config_;
  nn::Tensor grid_;
  std::vector<nn::Dense> enc_;   // l1..l3 (BN, ReLU), mix (ReLU), out (ReLU)
  std::vector<nn::Dense> fold_;  // fold1: hidden, out; fold2: hidden, out
  nn::MaxPool pool_global_, pool_latent_;
  Index cached_n_ = 0;
  Index cached_batch_ = 0;
  bool trained_ = false;
  std::vector<double> log_;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Adam on lambda_cd * CD + lambda_swd * SWD, fresh projection directions
/// for every loss evaluation. Throws ConfigMismatch if cloud size differs
/// from grid_side^2.
AEModel train_ae(const LabeledDataset& data, const AEConfig& config, SeededRng& rng,
                 const EpochCallback& on_epoch = {});

/// The iBA trigger: decode(encode(X)) with a trained model.
PointCloud implant_iba(const AEModel& model, const PointCloud& x);

}  // namespace pcbd
