#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "pcbd/pointcloud.hpp"

namespace pcbd {

enum class ShapeFamily { Sphere, Box, Cylinder, Cone, Torus, Ellipsoid, Cross, Pyramid };

std::string_view to_string(ShapeFamily f);
std::optional<ShapeFamily> shape_family_from_string(std::string_view name);
std::vector<ShapeFamily> all_shape_families();

struct SynthOptions {
  double scale_jitter = 0.2;       // per-axis scale drawn from U(1 - j, 1 + j)
  double z_rotation_deg = 5.0;     // per-instance z rotation drawn from U(-a, a)
};

/// Area-uniform surface sample of one canonical shape (not normalized).
PointCloud sample_shape(ShapeFamily family, Index n, SeededRng& rng);

/// per_class instances of each family; label = position in `classes`.
/// Instance i of the whole set draws from rng.derive(i), so generation order
/// does not affect the result.
LabeledDataset synth_dataset(const std::vector<ShapeFamily>& classes, int per_class, Index n,
                             SeededRng& rng, const SynthOptions& options = {},
                             Split split = Split::Train);

}  // namespace pcbd
