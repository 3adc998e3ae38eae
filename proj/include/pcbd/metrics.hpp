#pragma once

#include <vector>

#include "pcbd/pointcloud.hpp"

namespace pcbd {

/// Mean nearest-neighbour squared distance, summed over both directions.
double chamfer(const PointCloud& x, const PointCloud& y);
/// Symmetric Hausdorff distance (unsquared).
double hausdorff(const PointCloud& x, const PointCloud& y);

/// Optimal-assignment W2^2: min over perfect matchings of the mean squared
/// cost. |x| == |y| <= kMaxExactWassersteinPoints.
inline constexpr Index kMaxExactWassersteinPoints = 4096;
double wasserstein_exact(const PointCloud& x, const PointCloud& y);

/// Optimal assignment for a square cost matrix (row -> column).
std::vector<Index> solve_assignment(const Eigen::MatrixXd& cost);

/// Directions are rows, assumed unit length.
using Directions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
Directions random_directions(Index count, SeededRng& rng);

/// Mean over directions of the 1D W2^2 between sorted projections.
double sliced_wasserstein(const PointCloud& x, const PointCloud& y, Index n_proj, SeededRng& rng);
double sliced_wasserstein(const PointCloud& x, const PointCloud& y, const Directions& dirs);

/// Loss value plus its gradient with respect to the second argument; the
/// reconstruction-loss terms only ever differentiate the reconstruction.
struct LossAndGrad {
  double value = 0.0;
  Points grad;
};
LossAndGrad chamfer_with_grad(const PointCloud& target, const PointCloud& recon);
LossAndGrad sliced_wasserstein_with_grad(const PointCloud& target, const PointCloud& recon,
                                         const Directions& dirs);

}  // namespace pcbd
