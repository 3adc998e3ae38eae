#pragma once

#include <memory>
#include <optional>
#include <variant>

#include "json.hpp"
#include "pcbd/folding_ae.hpp"
#include "pcbd/sht.hpp"

namespace pcbd {

struct IbaTrigger {
  std::shared_ptr<const AEModel> model;
  std::optional<double> t;  // smoothing; absent means the raw reconstruction
  SmoothingConfig smoothing;
};

struct BallClusterTrigger {
  Vec3 center{-0.9, -0.9, -0.9};
  double radius = 0.1;
  double fraction = 0.02;
};

struct RotationTrigger {
  Vec3 degrees{0.0, 0.0, 10.0};
};

struct JitterTrigger {
  double sigma = 0.02;
};

struct TriggerSpec {
  std::variant<IbaTrigger, BallClusterTrigger, RotationTrigger, JitterTrigger> variant;
  std::uint64_t seed = 0;

  std::string name() const;
  void validate() const;
  /// Parameters only; the iBA model is referenced by path elsewhere.
  nlohmann::json to_json() const;
  /// `model` is required for the "iba" variant.
  static TriggerSpec from_json(const nlohmann::json& j, std::shared_ptr<const AEModel> model = nullptr);
};

/// Randomised variants draw from SeededRng(spec.seed, stream); callers pass
/// the dataset index as the stream so each cloud gets its own draw.
PointCloud apply_trigger(const TriggerSpec& spec, const PointCloud& x, std::uint64_t stream = 0);

PointCloud ball_cluster(const PointCloud& x, const BallClusterTrigger& params, SeededRng& rng);
PointCloud rotation_trigger(const PointCloud& x, const Vec3& degrees = {0.0, 0.0, 10.0});
PointCloud jitter_trigger(const PointCloud& x, double sigma, SeededRng& rng);

/// H(t; X) for any trigger: endpoints verbatim, smoothed in between.
PointCloud homotopy(const TriggerSpec& g, const PointCloud& x, double t, const SmoothingConfig& config,
                    std::uint64_t stream = 0);

}  // namespace pcbd
