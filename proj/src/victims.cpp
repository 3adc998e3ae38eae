#include "pcbd/victims.hpp"

#include <numeric>

#include "pcbd/error.hpp"
#include "pcbd/parallel.hpp"

namespace pcbd {

using nn::Dense;
using nn::Tensor;

std::string to_string(Architecture a) { return a == Architecture::PointNetLite ? "pointnet_lite" : "edgeconv_lite"; }

Architecture architecture_from_string(const std::string& name) {
  if (name == "pointnet_lite") return Architecture::PointNetLite;
  if (name == "edgeconv_lite") return Architecture::EdgeConvLite;
  throw Error(ErrorKind::ConfigError, "victim.arch: unknown architecture '" + name + "'");
}

void VictimSpec::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::ConfigError, "victim." + what); };
  if (num_classes < 2) bad("num_classes: must be >= 2");
  if (widths.size() != 3) bad("widths: expected 3 entries");
  if (edge_widths.empty()) bad("edge_widths: must not be empty");
  for (Index w : widths)
    if (w <= 0) bad("widths: must be positive");
  for (Index w : edge_widths)
    if (w <= 0) bad("edge_widths: must be positive");
  if (head_width <= 0) bad("head_width: must be positive");
  if (knn_k <= 0) bad("knn_k: must be positive");
  if (epochs < 0) bad("epochs: must be >= 0");
  if (!(lr > 0.0)) bad("lr: must be positive");
  if (batch_size <= 0) bad("batch_size: must be positive");
}

nlohmann::json VictimSpec::to_json() const {
  return {{"arch", to_string(arch)}, {"num_classes", num_classes}, {"widths", widths},
          {"edge_widths", edge_widths}, {"knn_k", knn_k}, {"head_width", head_width},
          {"epochs", epochs}, {"lr", lr}, {"batch_size", batch_size}};
}

VictimSpec VictimSpec::from_json(const nlohmann::json& j) {
  VictimSpec s;
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "victim: expected an object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k == "arch") s.arch = architecture_from_string(it->get<std::string>());
      else if (k == "num_classes") s.num_classes = it->get<int>();
      else if (k == "widths") s.widths = it->get<std::vector<Index>>();
      else if (k == "edge_widths") s.edge_widths = it->get<std::vector<Index>>();
      else if (k == "knn_k") s.knn_k = it->get<Index>();
      else if (k == "head_width") s.head_width = it->get<Index>();
      else if (k == "epochs") s.epochs = it->get<int>();
      else if (k == "lr") s.lr = it->get<double>();
      else if (k == "batch_size") s.batch_size = it->get<int>();
      else throw Error(ErrorKind::ConfigError, "victim." + k + ": unknown key");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("victim: ") + e.what());
  }
  s.validate();
  return s;
}

VictimModel::VictimModel(const VictimSpec& spec, SeededRng& init_rng) : spec_(spec) {
  spec_.validate();
  if (spec_.arch == Architecture::PointNetLite) {
    Index in = 3;
    for (Index w : spec_.widths) {
      point_.emplace_back(in, w, Dense::Kind::BnRelu);
      in = w;
    }
  } else {
    Index in = 6;
    for (Index w : spec_.edge_widths) {
      edge_.emplace_back(in, w, Dense::Kind::BnRelu);
      in = w;
    }
    point_.emplace_back(in, spec_.widths.back(), Dense::Kind::BnRelu);
  }
  head_.emplace_back(spec_.widths.back(), spec_.head_width, Dense::Kind::Relu);
  head_.emplace_back(spec_.head_width, Index(spec_.num_classes), Dense::Kind::Linear);
  for (auto& l : edge_) l.init(init_rng);
  for (auto& l : point_) l.init(init_rng);
  for (auto& l : head_) l.init(init_rng);
}

Tensor VictimModel::edge_features(const Tensor& points, Index n, NeighborTable& table) const {
  const Index batch = points.rows() / n;
  const Index k = spec_.knn_k;
  table.resize(batch * n, k);
  Tensor edges(batch * n * k, 6);
  for (Index b = 0; b < batch; ++b) {
    const NeighborTable local = knn(PointCloud(Points(points.middleRows(b * n, n))), k);
    for (Index i = 0; i < n; ++i) {
      const Index gi = b * n + i;
      for (Index r = 0; r < k; ++r) {
        const Index gj = b * n + local(i, r);
        table(gi, r) = gj;
        const Index row = gi * k + r;
        edges.block(row, 0, 1, 3) = points.row(gi);
        edges.block(row, 3, 1, 3) = points.row(gj) - points.row(gi);
      }
    }
  }
  return edges;
}

Tensor VictimModel::edge_backward(const Tensor& grad_edges) const {
  const Index k = spec_.knn_k;
  const Index rows = grad_edges.rows() / k;
  Tensor grad = Tensor::Zero(rows, 3);
  for (Index gi = 0; gi < rows; ++gi) {
    for (Index r = 0; r < k; ++r) {
      const Index row = gi * k + r;
      const auto ga = grad_edges.block(row, 0, 1, 3);
      const auto gb = grad_edges.block(row, 3, 1, 3);
      grad.row(gi) += ga - gb;
      grad.row(cached_knn_(gi, r)) += gb;
    }
  }
  return grad;
}

Tensor VictimModel::forward_batch(const Tensor& points, Index n, nn::Mode mode) {
  if (points.cols() != 3 || n <= 0 || points.rows() % n != 0)
    throw Error(ErrorKind::ShapeMismatch, "victim input must stack clouds of n points with 3 columns");
  cached_n_ = n;
  Tensor h;
  if (spec_.arch == Architecture::PointNetLite) {
    h = points;
  } else {
    h = edge_features(points, n, cached_knn_);
    for (auto& l : edge_) h = l.forward(std::move(h), mode);
    h = edge_pool_.forward(h, spec_.knn_k);
  }
  for (auto& l : point_) h = l.forward(std::move(h), mode);
  features_ = h;
  Tensor g = pool_.forward(h, n);
  g = head_[0].forward(std::move(g), mode);
  return head_[1].forward(std::move(g), mode);
}

Tensor VictimModel::infer_batch(const Tensor& points, Index n) const {
  if (points.cols() != 3 || n <= 0 || points.rows() % n != 0)
    throw Error(ErrorKind::ShapeMismatch, "victim input must stack clouds of n points with 3 columns");
  if (spec_.arch == Architecture::EdgeConvLite && n <= spec_.knn_k)
    throw Error(ErrorKind::KTooLarge, "cloud has too few points for the neighbourhood size");
  Tensor h;
  if (spec_.arch == Architecture::PointNetLite) {
    h = points;
  } else {
    NeighborTable table;
    h = edge_features(points, n, table);
    for (const auto& l : edge_) h = l.infer(h);
    h = nn::maxpool_points(h, spec_.knn_k);
  }
  for (const auto& l : point_) h = l.infer(h);
  Tensor g = nn::maxpool_points(h, n);
  return head_[1].infer(head_[0].infer(g));
}

Tensor VictimModel::logits(const PointCloud& x) const { return infer_batch(Tensor(x.xyz), x.size()); }

int VictimModel::predict(const PointCloud& x) const {
  Tensor l = logits(x);
  Index arg = 0;
  l.row(0).maxCoeff(&arg);
  return int(arg);
}

Tensor VictimModel::backward_to_features(const Tensor& grad_logits) {
  Tensor g = head_[1].backward(grad_logits, nullptr, false);
  g = head_[0].backward(g, nullptr, false);
  return pool_.backward(g);
}

Tensor VictimModel::backward(const Tensor& grad_logits, bool accumulate) {
  Tensor g = head_[1].backward(grad_logits, nullptr, accumulate);
  g = head_[0].backward(g, nullptr, accumulate);
  g = pool_.backward(g);
  for (auto it = point_.rbegin(); it != point_.rend(); ++it) g = it->backward(g, nullptr, accumulate);
  if (spec_.arch == Architecture::PointNetLite) return g;
  g = edge_pool_.backward(g);
  for (auto it = edge_.rbegin(); it != edge_.rend(); ++it) g = it->backward(g, nullptr, accumulate);
  return edge_backward(g);
}

std::vector<nn::Param*> VictimModel::params() {
  std::vector<nn::Param*> out;
  for (auto* group : {&edge_, &point_, &head_})
    for (auto& l : *group)
      for (auto* p : l.params()) out.push_back(p);
  return out;
}

void VictimModel::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

Checkpoint VictimModel::to_checkpoint(std::uint64_t seed) const {
  Checkpoint ckpt;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : log_) log.push_back({{"loss", r.loss}, {"accuracy", r.accuracy}});
  ckpt.meta = {{"architecture", "victim"}, {"spec", spec_.to_json()},    {"seed", seed},
               {"epoch", log_.size()},     {"trained", trained_},         {"training_log", log},
               {"bn", {{"momentum", nn::kBnMomentum}, {"eps", nn::kBnEps}}}};
  for (std::size_t i = 0; i < edge_.size(); ++i) edge_[i].export_arrays("edge" + std::to_string(i), ckpt.arrays);
  for (std::size_t i = 0; i < point_.size(); ++i) point_[i].export_arrays("point" + std::to_string(i), ckpt.arrays);
  for (std::size_t i = 0; i < head_.size(); ++i) head_[i].export_arrays("head" + std::to_string(i), ckpt.arrays);
  return ckpt;
}

VictimModel VictimModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta.value("architecture", "") != "victim")
    throw Error(ErrorKind::ConfigMismatch, "checkpoint is not a victim model");
  SeededRng dummy(0);
  VictimModel m(VictimSpec::from_json(ckpt.meta.at("spec")), dummy);
  const auto arrays = ckpt.array_map();
  for (std::size_t i = 0; i < m.edge_.size(); ++i) m.edge_[i].import_arrays("edge" + std::to_string(i), arrays);
  for (std::size_t i = 0; i < m.point_.size(); ++i) m.point_[i].import_arrays("point" + std::to_string(i), arrays);
  for (std::size_t i = 0; i < m.head_.size(); ++i) m.head_[i].import_arrays("head" + std::to_string(i), arrays);
  m.trained_ = ckpt.meta.value("trained", false);
  for (const auto& r : ckpt.meta.value("training_log", nlohmann::json::array()))
    m.log_.push_back({r.at("loss").get<double>(), r.at("accuracy").get<double>()});
  return m;
}

VictimModel train_victim(const LabeledDataset& data, const VictimSpec& spec, SeededRng& rng,
                         const std::vector<AugmentationSpec>& augmentations, const EpochHook& on_epoch) {
  spec.validate();
  if (data.entries.empty()) throw Error(ErrorKind::InvalidArgument, "empty training set");
  for (const auto& e : data.entries) {
    if (e.label < 0 || e.label >= spec.num_classes)
      throw Error(ErrorKind::ConfigMismatch, "label " + std::to_string(e.label) + " outside the victim's " +
                                                 std::to_string(spec.num_classes) + " classes");
  }
  Index n = 0;
  try {
    n = data.cloud_size();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigMismatch, e.what());
  }
  for (const auto& a : augmentations) a.validate();

  SeededRng init_rng = rng.derive(1);
  SeededRng shuffle_rng = rng.derive(2);
  SeededRng aug_rng = rng.derive(3);
  VictimModel model(spec, init_rng);
  nn::AdamState adam;
  adam.lr = spec.lr;
  const auto params = model.params();
  model.zero_grad();

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(spec.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + std::size_t(spec.batch_size));
      const Index b = Index(stop - start);
      Tensor batch(b * n, 3);
      std::vector<int> labels(static_cast<std::size_t>(b));
      for (Index k = 0; k < b; ++k) {
        const Sample& s = data.entries[order[start + std::size_t(k)]];
        if (augmentations.empty()) {
          batch.middleRows(k * n, n) = s.cloud.xyz;
        } else {
          PointCloud c = s.cloud;
          for (const auto& a : augmentations) c = augment(c, a, aug_rng);
          batch.middleRows(k * n, n) = c.xyz;
        }
        labels[std::size_t(k)] = s.label;
      }
      const Tensor logits = model.forward_batch(batch, n, nn::Mode::Train);
      const auto xent = nn::softmax_xent(logits, labels);
      model.backward(xent.grad);
      nn::adam_step(params, adam);
      model.zero_grad();
      loss_sum += xent.loss * double(b);
      for (Index k = 0; k < b; ++k) {
        Index arg = 0;
        logits.row(k).maxCoeff(&arg);
        if (int(arg) == labels[std::size_t(k)]) ++correct;
      }
    }
    EpochRecord rec{loss_sum / double(data.size()), double(correct) / double(data.size())};
    if (!std::isfinite(rec.loss))
      throw Error(ErrorKind::InvalidArgument, "victim loss became non-finite at epoch " + std::to_string(epoch));
    model.training_log().push_back(rec);
    if (on_epoch) on_epoch(epoch, rec);
  }
  model.mark_trained();
  return model;
}

std::vector<int> predict_all(const VictimModel& model, const std::vector<PointCloud>& clouds) {
  std::vector<int> out(clouds.size(), 0);
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (clouds.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t lo = c * kChunk, hi = std::min(clouds.size(), lo + kChunk);
    // Clouds of different sizes cannot share a batch.
    std::size_t i = lo;
    while (i < hi) {
      const Index n = clouds[i].size();
      std::size_t j = i;
      while (j < hi && clouds[j].size() == n) ++j;
      Tensor batch(Index(j - i) * n, 3);
      for (std::size_t k = i; k < j; ++k) batch.middleRows(Index(k - i) * n, n) = clouds[k].xyz;
      const Tensor logits = model.infer_batch(batch, n);
      for (std::size_t k = i; k < j; ++k) {
        Index arg = 0;
        logits.row(Index(k - i)).maxCoeff(&arg);
        out[k] = int(arg);
      }
      i = j;
    }
  });
  return out;
}

}  // namespace pcbd
