#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "pcbd/pointcloud.hpp"

namespace pcbd {

enum class AugmentKind { R, R3, Scaling, Translation, Dropout, Jitter, SOR };

std::string to_string(AugmentKind kind);
AugmentKind augment_kind_from_string(const std::string& name);

/// Radius-count outlier filter: a point is removed when fewer than
/// threshold(n) other points lie within `radius` of it, with the threshold
/// scaled linearly from `neighbors_at_1024`.
struct SorParams {
  double radius = 0.5;
  double neighbors_at_1024 = 30.0;

  double threshold(Index n) const { return neighbors_at_1024 * double(n) / 1024.0; }
};

struct AugmentationSpec {
  AugmentKind kind = AugmentKind::R;
  double angle_deg = 10.0;   // R, R3: angle ~ U(-a, a) per rotated axis
  double scale_lo = 0.95;    // Scaling ~ U(lo, hi), isotropic
  double scale_hi = 1.05;
  double shift = 0.05;       // Translation ~ U(-s, s)^3
  double max_drop = 0.2;     // Dropout ratio ~ U(0, max_drop)
  double sigma = 0.02;       // Jitter
  SorParams sor;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AugmentationSpec from_json(const nlohmann::json& j);
};

/// Applies one augmentation; the point count is always preserved (dropout and
/// SOR refill the removed slots with copies of surviving points).
PointCloud augment(const PointCloud& x, const AugmentationSpec& spec, SeededRng& rng);

/// Statistical outlier removal; may return fewer points. The threshold is
/// params.threshold(|x|) unless given explicitly (e.g. to reuse the original
/// threshold on an already filtered cloud). Throws AllPointsRemoved when
/// nothing survives.
PointCloud sor(const PointCloud& x, const SorParams& params = {}, std::optional<double> threshold = {});
/// Indices kept by sor, ascending; may be empty.
std::vector<Index> sor_keep(const PointCloud& x, const SorParams& params = {}, std::optional<double> threshold = {});

}  // namespace pcbd
