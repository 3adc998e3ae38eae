#include "pcbd/synth.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

#include "pcbd/error.hpp"
#include "pcbd/parallel.hpp"

namespace pcbd {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 unit_vector(SeededRng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.squaredNorm() < 1e-24);
  return v.normalized();
}

Vec3 on_triangle(const Vec3& a, const Vec3& b, const Vec3& c, SeededRng& rng) {
  double u = rng.uniform();
  double v = rng.uniform();
  if (u + v > 1.0) {
    u = 1.0 - u;
    v = 1.0 - v;
  }
  return a + u * (b - a) + v * (c - a);
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

// Picks an index proportionally to the given weights.
std::size_t pick(const std::vector<double>& weights, SeededRng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  return weights.size() - 1;
}

Vec3 sample_box(SeededRng& rng) {
  const Vec3 h(1.0, 0.8, 0.6);
  // Faces in pairs along x, y, z; area of each face pair member.
  const std::vector<double> areas{h.y() * h.z(), h.y() * h.z(), h.x() * h.z(),
                                  h.x() * h.z(), h.x() * h.y(), h.x() * h.y()};
  const std::size_t face = pick(areas, rng);
  const int axis = int(face / 2);
  const double sign = face % 2 == 0 ? -1.0 : 1.0;
  Vec3 p(rng.uniform(-h.x(), h.x()), rng.uniform(-h.y(), h.y()), rng.uniform(-h.z(), h.z()));
  p[axis] = sign * h[axis];
  return p;
}

Vec3 sample_cylinder(SeededRng& rng) {
  const double r = 0.6, hh = 1.0;
  const std::vector<double> areas{2 * kPi * r * 2 * hh, kPi * r * r, kPi * r * r};
  const std::size_t part = pick(areas, rng);
  const double a = rng.uniform(0.0, 2 * kPi);
  if (part == 0) return {r * std::cos(a), r * std::sin(a), rng.uniform(-hh, hh)};
  const double rad = r * std::sqrt(rng.uniform());
  return {rad * std::cos(a), rad * std::sin(a), part == 1 ? -hh : hh};
}

Vec3 sample_cone(SeededRng& rng) {
  const double r = 0.8, height = 2.0;
  const double slant = std::sqrt(r * r + height * height);
  const std::vector<double> areas{kPi * r * slant, kPi * r * r};
  const double a = rng.uniform(0.0, 2 * kPi);
  if (pick(areas, rng) == 0) {
    // Lateral area density grows linearly with distance from the apex.
    const double s = std::sqrt(rng.uniform());
    return {s * r * std::cos(a), s * r * std::sin(a), 1.0 - s * height};
  }
  const double rad = r * std::sqrt(rng.uniform());
  return {rad * std::cos(a), rad * std::sin(a), -1.0};
}

Vec3 sample_torus(SeededRng& rng) {
  const double big = 0.7, small = 0.3;
  while (true) {
    const double u = rng.uniform(0.0, 2 * kPi);
    const double v = rng.uniform(0.0, 2 * kPi);
    const double w = (big + small * std::cos(v)) / (big + small);
    if (rng.uniform() <= w) {
      return {(big + small * std::cos(v)) * std::cos(u), (big + small * std::cos(v)) * std::sin(u),
              small * std::sin(v)};
    }
  }
}

Vec3 sample_ellipsoid(SeededRng& rng) {
  const Vec3 ax(1.0, 0.6, 0.4);
  const Vec3 area_axes(ax.y() * ax.z(), ax.x() * ax.z(), ax.x() * ax.y());
  const double max_factor = area_axes.maxCoeff();
  while (true) {
    const Vec3 n = unit_vector(rng);
    const double factor = area_axes.cwiseProduct(n).norm();
    if (rng.uniform() * max_factor <= factor) return ax.cwiseProduct(n);
  }
}

Vec3 sample_cross(SeededRng& rng) {
  const double half_z = 0.8;
  const double a = rng.uniform(-1.0, 1.0);
  const double z = rng.uniform(-half_z, half_z);
  if (rng.uniform() < 0.5) return {0.0, a, z};
  return {a, 0.0, z};
}

Vec3 sample_pyramid(SeededRng& rng) {
  const double b = 0.8;
  const Vec3 apex(0.0, 0.0, 1.0);
  const std::array<Vec3, 4> base{Vec3(-b, -b, -1), Vec3(b, -b, -1), Vec3(b, b, -1), Vec3(-b, b, -1)};
  std::vector<double> areas;
  for (int i = 0; i < 4; ++i) areas.push_back(triangle_area(base[i], base[(i + 1) % 4], apex));
  areas.push_back(4 * b * b);
  const std::size_t face = pick(areas, rng);
  if (face < 4) return on_triangle(base[face], base[(face + 1) % 4], apex, rng);
  return {rng.uniform(-b, b), rng.uniform(-b, b), -1.0};
}

}  // namespace

std::string_view to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Sphere: return "sphere";
    case ShapeFamily::Box: return "box";
    case ShapeFamily::Cylinder: return "cylinder";
    case ShapeFamily::Cone: return "cone";
    case ShapeFamily::Torus: return "torus";
    case ShapeFamily::Ellipsoid: return "ellipsoid";
    case ShapeFamily::Cross: return "cross";
    case ShapeFamily::Pyramid: return "pyramid";
  }
  return "unknown";
}

std::optional<ShapeFamily> shape_family_from_string(std::string_view name) {
  for (ShapeFamily f : all_shape_families()) {
    if (to_string(f) == name) return f;
  }
  return std::nullopt;
}

std::vector<ShapeFamily> all_shape_families() {
  return {ShapeFamily::Sphere, ShapeFamily::Box,       ShapeFamily::Cylinder, ShapeFamily::Cone,
          ShapeFamily::Torus,  ShapeFamily::Ellipsoid, ShapeFamily::Cross,    ShapeFamily::Pyramid};
}

PointCloud sample_shape(ShapeFamily family, Index n, SeededRng& rng) {
  Points pts(n, 3);
  for (Index i = 0; i < n; ++i) {
    Vec3 p;
    switch (family) {
      case ShapeFamily::Sphere: p = unit_vector(rng); break;
      case ShapeFamily::Box: p = sample_box(rng); break;
      case ShapeFamily::Cylinder: p = sample_cylinder(rng); break;
      case ShapeFamily::Cone: p = sample_cone(rng); break;
      case ShapeFamily::Torus: p = sample_torus(rng); break;
      case ShapeFamily::Ellipsoid: p = sample_ellipsoid(rng); break;
      case ShapeFamily::Cross: p = sample_cross(rng); break;
      case ShapeFamily::Pyramid: p = sample_pyramid(rng); break;
    }
    pts.row(i) = p.transpose();
  }
  return PointCloud(std::move(pts));
}

LabeledDataset synth_dataset(const std::vector<ShapeFamily>& classes, int per_class, Index n,
                             SeededRng& rng, const SynthOptions& options, Split split) {
  if (per_class < 1) throw Error(ErrorKind::InvalidArgument, "per_class must be >= 1");
  if (n < 16) throw Error(ErrorKind::InvalidArgument, "n must be >= 16");
  if (classes.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two classes");
  LabeledDataset data;
  data.num_classes = int(classes.size());
  data.split = split;
  const std::size_t total = classes.size() * std::size_t(per_class);
  data.entries.resize(total);
  const SeededRng base = rng.derive(0x5eed);
  parallel_for(total, [&](std::size_t i) {
    const std::size_t c = i / std::size_t(per_class);
    SeededRng local = base.derive(i);
    PointCloud raw = sample_shape(classes[c], n, local);
    const double j = options.scale_jitter;
    const Vec3 scale(local.uniform(1 - j, 1 + j), local.uniform(1 - j, 1 + j), local.uniform(1 - j, 1 + j));
    raw.xyz = raw.xyz * scale.asDiagonal();
    const double angle = local.uniform(-options.z_rotation_deg, options.z_rotation_deg);
    data.entries[i] = {normalize_unit_cube(rotate_euler(raw, Vec3(0, 0, angle))), int(c)};
  });
  rng.next_u64();
  return data;
}

}  // namespace pcbd
