#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcbd/rng.hpp"

namespace pcbd {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3d;
using Index = Eigen::Index;

/// n points in R^3, stored row-major (one row per point).
struct PointCloud {
  Points xyz;

  PointCloud() = default;
  explicit PointCloud(Points p) : xyz(std::move(p)) {}
  explicit PointCloud(const std::vector<std::array<double, 3>>& pts);

  Index size() const noexcept { return xyz.rows(); }
  bool empty() const noexcept { return xyz.rows() == 0; }
  Vec3 point(Index i) const { return xyz.row(i).transpose(); }
  bool all_finite() const { return xyz.allFinite(); }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.xyz.rows() == b.xyz.rows() && a.xyz == b.xyz;
  }
};

enum class Split { Train, Test };

struct Sample {
  PointCloud cloud;
  int label = 0;
};

struct LabeledDataset {
  std::vector<Sample> entries;
  int num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const noexcept { return entries.size(); }
  /// Shared point count; throws ShapeMismatch if the clouds disagree.
  Index cloud_size() const;
  /// Checks labels are in range and all clouds share n.
  void validate() const;
};

/// Centroid-centred, isotropically scaled so the max-abs coordinate is 1.
PointCloud normalize_unit_cube(const PointCloud& cloud);
/// True when centroid ~ 0 and max-abs coordinate ~ 1 within tol.
bool is_normalized(const PointCloud& cloud, double tol = 1e-9);

/// Without replacement when n >= n_target, otherwise with replacement.
PointCloud resample_to_n(const PointCloud& cloud, Index n_target, SeededRng& rng);

/// Row i holds the k nearest neighbours of point i (self excluded), nearest
/// first, ties broken by the lower index.
using NeighborTable = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
NeighborTable knn(const PointCloud& cloud, Index k);

/// Rotation R_z(gamma) * R_y(beta) * R_x(alpha); angles in degrees.
Eigen::Matrix3d euler_matrix(const Vec3& degrees);
PointCloud rotate_euler(const PointCloud& cloud, const Vec3& degrees);

/// Plain-text "x y z" per line with 17 significant digits.
void save_xyz(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud load_xyz(const std::filesystem::path& path);

/// Directory layout: manifest.json listing {file, label} plus one .xyz per
/// cloud. `meta` is embedded verbatim in the manifest.
void save_dataset(const LabeledDataset& data, const std::filesystem::path& dir,
                  const nlohmann::json& meta = nlohmann::json::object());
LabeledDataset load_dataset(const std::filesystem::path& dir);

}  // namespace pcbd
