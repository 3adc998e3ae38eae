#include "pcbd/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcbd/error.hpp"

namespace pcbd {

using nn::Tensor;

PointCloud lpf_defense(const PointCloud& x, int l_cut, const SmoothingConfig& config) {
  return lowpass_filter(x, l_cut, config);
}

namespace {

void require_trained(const VictimModel& model) {
  if (!model.trained()) throw Error(ErrorKind::UntrainedModel, "victim model has not been trained");
}

void require_label(const VictimModel& model, int label) {
  if (label < 0 || label >= model.spec().num_classes)
    throw Error(ErrorKind::LabelOutOfRange, "class " + std::to_string(label) + " outside the victim's classes");
}

}  // namespace

double saliency_loss(const VictimModel& model, const PointCloud& x, int label) {
  require_label(model, label);
  return nn::softmax_xent(model.logits(x), {label}).loss;
}

SaliencyResult saliency(const VictimModel& model, const PointCloud& x, int label, double alpha, double fraction) {
  require_trained(model);
  require_label(model, label);
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "saliency alpha must be positive");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fraction must lie in [0, 1]");
  VictimModel probe = model;
  const Tensor logits = probe.forward_batch(Tensor(x.xyz), x.size(), nn::Mode::Infer);
  const auto xent = nn::softmax_xent(logits, {label});
  const Tensor grad = probe.backward(xent.grad, false);

  SaliencyResult out;
  out.significance.resize(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const Vec3 p = x.point(i);
    const double r = p.norm();
    if (r == 0.0) {
      out.significance(i) = 0.0;
      continue;
    }
    const double radial = grad.row(i).dot(p.transpose()) / r;
    out.significance(i) = -std::pow(r, 1.0 + alpha) / alpha * radial;
  }
  std::vector<Index> order(std::size_t(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return out.significance(a) > out.significance(b); });
  order.resize(std::size_t(std::llround(fraction * double(x.size()))));
  out.top = std::move(order);
  return out;
}

Eigen::VectorXd cam_map(const Tensor& features, const Eigen::RowVectorXd& weights) {
  if (features.cols() != weights.size()) throw Error(ErrorKind::ShapeMismatch, "CAM weights do not match A_X");
  Eigen::VectorXd v = features * weights.transpose();
  return v.cwiseMax(0.0);
}

double cam_score(const VictimModel& model, const PointCloud& x, int class_index, CamScore score) {
  require_label(model, class_index);
  const Tensor logits = model.logits(x);
  if (score == CamScore::Logit) return logits(0, class_index);
  return nn::softmax(logits)(0, class_index);
}

CamResult grad_cam(const VictimModel& model, const PointCloud& x, int class_index, bool counterfactual,
                   CamScore score) {
  require_trained(model);
  require_label(model, class_index);
  VictimModel probe = model;
  const Tensor logits = probe.forward_batch(Tensor(x.xyz), x.size(), nn::Mode::Infer);
  Tensor g = Tensor::Zero(1, logits.cols());
  if (score == CamScore::Logit) {
    g(0, class_index) = 1.0;
  } else {
    const Tensor p = nn::softmax(logits);
    const double pi = p(0, class_index);
    g = -pi * p;
    g(0, class_index) += pi;
  }
  const Tensor da = probe.backward_to_features(g);
  CamResult out;
  out.features = probe.features();
  out.weights = da.colwise().sum();
  if (counterfactual) out.weights = -out.weights;
  out.activation = cam_map(out.features, out.weights);
  return out;
}

}  // namespace pcbd
