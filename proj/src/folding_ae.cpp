#include "pcbd/folding_ae.hpp"

#include <cmath>
#include <numeric>

#include "pcbd/error.hpp"
#include "pcbd/metrics.hpp"

namespace pcbd {

using nn::Dense;
using nn::Mode;
using nn::Tensor;

AEConfig AEConfig::toy() { return AEConfig{}; }

AEConfig AEConfig::full_scale() {
  AEConfig c;
  c.latent_dim = 512;
  c.grid_side = 32;
  c.enc_local = 64;
  c.enc_mid = 128;
  c.enc_global = 256;
  c.enc_mix = 512;
  c.fold_hidden = 512;
  return c;
}

nlohmann::json AEConfig::to_json() const {
  return {{"latent_dim", latent_dim},   {"grid_side", grid_side},     {"grid_extent", grid_extent},
          {"enc_local", enc_local},     {"enc_mid", enc_mid},         {"enc_global", enc_global},
          {"enc_mix", enc_mix},         {"fold_hidden", fold_hidden}, {"lambda_cd", lambda_cd},
          {"lambda_swd", lambda_swd},   {"epochs", epochs},           {"lr", lr},
          {"batch_size", batch_size},   {"swd_projections", swd_projections}};
}

AEConfig AEConfig::from_json(const nlohmann::json& j) {
  AEConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "latent_dim") c.latent_dim = value.get<Index>();
    else if (key == "grid_side") c.grid_side = value.get<Index>();
    else if (key == "grid_extent") c.grid_extent = value.get<double>();
    else if (key == "enc_local") c.enc_local = value.get<Index>();
    else if (key == "enc_mid") c.enc_mid = value.get<Index>();
    else if (key == "enc_global") c.enc_global = value.get<Index>();
    else if (key == "enc_mix") c.enc_mix = value.get<Index>();
    else if (key == "fold_hidden") c.fold_hidden = value.get<Index>();
    else if (key == "lambda_cd") c.lambda_cd = value.get<double>();
    else if (key == "lambda_swd") c.lambda_swd = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "swd_projections") c.swd_projections = value.get<Index>();
    else throw Error(ErrorKind::ConfigError, "ae." + key + ": unknown key");
  }
  c.validate();
  return c;
}

void AEConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorKind::ConfigError, "ae." + field + ": " + why);
  };
  if (latent_dim < 1) fail("latent_dim", "must be positive");
  if (grid_side < 2) fail("grid_side", "must be >= 2");
  if (!(grid_extent > 0)) fail("grid_extent", "must be positive");
  if (enc_local < 1 || enc_mid < 1 || enc_global < 1 || enc_mix < 1 || fold_hidden < 1)
    fail("widths", "must be positive");
  if (!(lambda_cd >= 0) || !(lambda_swd >= 0) || lambda_cd + lambda_swd <= 0)
    fail("lambda", "weights must be non-negative and not both zero");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (!(lr > 0)) fail("lr", "must be positive");
  if (batch_size < 1) fail("batch_size", "must be positive");
  if (swd_projections < 1) fail("swd_projections", "must be positive");
}

AEModel::AEModel(const AEConfig& config, SeededRng& init_rng) : config_(config) {
  config_.validate();
  const auto& c = config_;
  enc_.emplace_back(3, c.enc_local, Dense::Kind::BnRelu);
  enc_.emplace_back(c.enc_local, c.enc_mid, Dense::Kind::BnRelu);
  enc_.emplace_back(c.enc_mid, c.enc_global, Dense::Kind::BnRelu);
  enc_.emplace_back(c.enc_local + c.enc_global, c.enc_mix, Dense::Kind::Relu);
  enc_.emplace_back(c.enc_mix, c.latent_dim, Dense::Kind::Relu);
  fold_.emplace_back(2 + c.latent_dim, c.fold_hidden, Dense::Kind::Relu);
  fold_.emplace_back(c.fold_hidden, 3, Dense::Kind::Linear);
  fold_.emplace_back(3 + c.latent_dim, c.fold_hidden, Dense::Kind::Relu);
  fold_.emplace_back(c.fold_hidden, 3, Dense::Kind::Linear);
  for (auto& l : enc_) l.init(init_rng);
  for (auto& l : fold_) l.init(init_rng);

  const Index side = c.grid_side;
  grid_.resize(side * side, 2);
  for (Index i = 0; i < side; ++i) {
    for (Index j = 0; j < side; ++j) {
      const double u = -c.grid_extent + 2.0 * c.grid_extent * double(i) / double(side - 1);
      const double v = -c.grid_extent + 2.0 * c.grid_extent * double(j) / double(side - 1);
      grid_.row(i * side + j) << u, v;
    }
  }
}

void AEModel::check_input(const PointCloud& x) const {
  if (x.size() != config_.num_points()) {
    throw Error(ErrorKind::ShapeMismatch, "cloud has " + std::to_string(x.size()) + " points, model expects " +
                                              std::to_string(config_.num_points()));
  }
  if (!x.all_finite()) throw Error(ErrorKind::InvalidArgument, "non-finite input cloud");
  if (x.xyz.cwiseAbs().maxCoeff() > 1.0 + 1e-6) {
    throw Error(ErrorKind::NotNormalized, "input exceeds the unit cube");
  }
}

LatentCode AEModel::encode(const PointCloud& x) const {
  check_input(x);
  const Index n = x.size();
  const Tensor pts = x.xyz;
  const Tensor loc = enc_[0].infer(pts);
  const Tensor glob = nn::maxpool_points(enc_[2].infer(enc_[1].infer(loc)), n);
  const Tensor mix = enc_[3].infer(loc, glob, n);
  const Tensor z = nn::maxpool_points(enc_[4].infer(mix), n);
  return {z.row(0)};
}

PointCloud AEModel::decode(const LatentCode& code) const {
  if (code.z.size() != config_.latent_dim) throw Error(ErrorKind::ShapeMismatch, "latent size mismatch");
  if (!code.z.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite latent code");
  const Index n = grid_.rows();
  const Tensor z = code.z;
  const Tensor f1 = fold_[1].infer(fold_[0].infer(grid_, z, n));
  const Tensor f2 = fold_[3].infer(fold_[2].infer(f1, z, n));
  return PointCloud(Points(f2));
}

Tensor AEModel::encode_batch(const Tensor& points, Index n, Mode mode) {
  cached_n_ = n;
  const Tensor loc = enc_[0].forward(points, mode);
  const Tensor glob = pool_global_.forward(enc_[2].forward(enc_[1].forward(loc, mode), mode), n);
  const Tensor mix = enc_[3].forward(loc, glob, n, mode);
  return pool_latent_.forward(enc_[4].forward(mix, mode), n);
}

Tensor AEModel::decode_batch(const Tensor& z, Mode mode) {
  const Index n = grid_.rows();
  cached_batch_ = z.rows();
  Tensor tiled(z.rows() * n, 2);
  for (Index b = 0; b < z.rows(); ++b) tiled.middleRows(b * n, n) = grid_;
  const Tensor f1 = fold_[1].forward(fold_[0].forward(tiled, z, n, mode), mode);
  return fold_[3].forward(fold_[2].forward(f1, z, n, mode), mode);
}

Tensor AEModel::backward_decode(const Tensor& grad_points) {
  Tensor gz2, gz1;
  const Tensor g_f1 = fold_[2].backward(fold_[3].backward(grad_points), &gz2);
  fold_[0].backward(fold_[1].backward(g_f1), &gz1);
  return gz1 + gz2;
}

Tensor AEModel::backward_encode(const Tensor& grad_z) {
  const Tensor g_mix = enc_[4].backward(pool_latent_.backward(grad_z));
  Tensor g_glob;
  Tensor g_loc = enc_[3].backward(g_mix, &g_glob);
  g_loc += enc_[1].backward(enc_[2].backward(pool_global_.backward(g_glob)));
  return enc_[0].backward(g_loc);
}

std::vector<nn::Param*> AEModel::params() {
  std::vector<nn::Param*> out;
  for (auto& l : enc_)
    for (auto* p : l.params()) out.push_back(p);
  for (auto& l : fold_)
    for (auto* p : l.params()) out.push_back(p);
  return out;
}

void AEModel::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

Checkpoint AEModel::to_checkpoint(std::uint64_t seed) const {
  Checkpoint ckpt;
  ckpt.meta = {{"architecture", "folding-ae"},
               {"config", config_.to_json()},
               {"seed", seed},
               {"epoch", log_.size()},
               {"trained", trained_},
               {"training_log", log_},
               {"bn", {{"momentum", nn::kBnMomentum}, {"eps", nn::kBnEps}}}};
  for (std::size_t i = 0; i < enc_.size(); ++i) enc_[i].export_arrays("enc" + std::to_string(i), ckpt.arrays);
  for (std::size_t i = 0; i < fold_.size(); ++i) fold_[i].export_arrays("fold" + std::to_string(i), ckpt.arrays);
  ckpt.arrays.push_back({"grid", grid_});
  return ckpt;
}

AEModel AEModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta.value("architecture", "") != "folding-ae") {
    throw Error(ErrorKind::ConfigMismatch, "checkpoint is not a folding-ae model");
  }
  SeededRng dummy(0);
  AEModel model(AEConfig::from_json(ckpt.meta.at("config")), dummy);
  const auto arrays = ckpt.array_map();
  for (std::size_t i = 0; i < model.enc_.size(); ++i) model.enc_[i].import_arrays("enc" + std::to_string(i), arrays);
  for (std::size_t i = 0; i < model.fold_.size(); ++i)
    model.fold_[i].import_arrays("fold" + std::to_string(i), arrays);
  model.grid_ = arrays.at("grid");
  model.trained_ = ckpt.meta.value("trained", false);
  model.log_ = ckpt.meta.value("training_log", std::vector<double>{});
  return model;
}

AEModel train_ae(const LabeledDataset& data, const AEConfig& config, SeededRng& rng, const EpochCallback& on_epoch) {
  config.validate();
  if (data.entries.empty()) throw Error(ErrorKind::InvalidArgument, "empty training set");
  const Index n = config.num_points();
  for (const auto& e : data.entries) {
    if (e.cloud.size() != n) {
      throw Error(ErrorKind::ConfigMismatch, "dataset cloud size " + std::to_string(e.cloud.size()) +
                                                 " != grid_side^2 = " + std::to_string(n));
    }
  }
  SeededRng init_rng = rng.derive(1);
  SeededRng shuffle_rng = rng.derive(2);
  SeededRng swd_rng = rng.derive(3);
  AEModel model(config, init_rng);
  nn::AdamState adam;
  adam.lr = config.lr;
  const auto params = model.params();
  model.zero_grad();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + std::size_t(config.batch_size));
      const Index b = Index(stop - start);
      Tensor batch(b * n, 3);
      for (Index k = 0; k < b; ++k) batch.middleRows(k * n, n) = data.entries[order[start + std::size_t(k)]].cloud.xyz;
      const Tensor z = model.encode_batch(batch, n, nn::Mode::Train);
      const Tensor recon = model.decode_batch(z, nn::Mode::Train);
      Tensor grad(recon.rows(), 3);
      double batch_loss = 0.0;
      for (Index k = 0; k < b; ++k) {
        const PointCloud target(Points(batch.middleRows(k * n, n)));
        const PointCloud out(Points(recon.middleRows(k * n, n)));
        Points g = Points::Zero(n, 3);
        if (config.lambda_cd > 0) {
          const auto cd = chamfer_with_grad(target, out);
          batch_loss += config.lambda_cd * cd.value;
          g += config.lambda_cd * cd.grad;
        }
        if (config.lambda_swd > 0) {
          const auto dirs = random_directions(config.swd_projections, swd_rng);
          const auto swd = sliced_wasserstein_with_grad(target, out, dirs);
          batch_loss += config.lambda_swd * swd.value;
          g += config.lambda_swd * swd.grad;
        }
        grad.middleRows(k * n, n) = g / double(b);
      }
      model.backward_encode(model.backward_decode(grad));
      nn::adam_step(params, adam);
      model.zero_grad();
      epoch_loss += batch_loss;
    }
    const double mean = epoch_loss / double(data.size());
    if (!std::isfinite(mean)) {
      throw Error(ErrorKind::InvalidArgument, "autoencoder loss became non-finite at epoch " + std::to_string(epoch));
    }
    model.training_log().push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  model.mark_trained();
  return model;
}

PointCloud implant_iba(const AEModel& model, const PointCloud& x) {
  if (!model.trained()) throw Error(ErrorKind::UntrainedModel, "implant_iba requires a trained autoencoder");
  return model.reconstruct(x);
}

}  // namespace pcbd
