#pragma once

#include <vector>

#include "pcbd/augment.hpp"
#include "pcbd/sht.hpp"
#include "pcbd/victims.hpp"

namespace pcbd {

inline constexpr int kDefaultLpfCut = 16;

/// Spherical-harmonic low-pass defence (orders above l_cut removed).
PointCloud lpf_defense(const PointCloud& x, int l_cut = kDefaultLpfCut, const SmoothingConfig& config = {});

struct SaliencyResult {
  Eigen::VectorXd significance;  // s_i
  std::vector<Index> top;        // round(fraction * n) indices, most significant first
};

/// s_i = dL/d rho_i with rho_i = r_i^-alpha, L the cross-entropy of `label`:
///   s_i = -(1/alpha) r_i^(1+alpha) (x_hat_i . grad_{x_i} L).
/// Positive s_i means moving the point inwards raises the loss.
SaliencyResult saliency(const VictimModel& model, const PointCloud& x, int label, double alpha = 1.0,
                        double fraction = 0.02);

/// Loss used by saliency, for finite-difference checks.
double saliency_loss(const VictimModel& model, const PointCloud& x, int label);

enum class CamScore { Probability, Logit };

struct CamResult {
  Eigen::VectorXd activation;  // ReLU(A_X w), one entry per point
  Eigen::RowVectorXd weights;  // w_k = sum_j d y_i / d A_jk (negated when counterfactual)
  nn::Tensor features;         // A_X
};

/// 3D Grad-CAM on the victim's point-wise features.
CamResult grad_cam(const VictimModel& model, const PointCloud& x, int class_index, bool counterfactual = false,
                   CamScore score = CamScore::Probability);

/// ReLU(A w^T), the aggregation step of grad_cam.
Eigen::VectorXd cam_map(const nn::Tensor& features, const Eigen::RowVectorXd& weights);

/// Score y_i whose gradient grad_cam aggregates.
double cam_score(const VictimModel& model, const PointCloud& x, int class_index, CamScore score);

}  // namespace pcbd
