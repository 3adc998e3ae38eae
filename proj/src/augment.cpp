#include "pcbd/augment.hpp"

#include <array>
#include <cmath>

#include "pcbd/error.hpp"

namespace pcbd {

namespace {

constexpr std::array<std::pair<AugmentKind, const char*>, 7> kNames{{{AugmentKind::R, "R"},
                                                                     {AugmentKind::R3, "R3"},
                                                                     {AugmentKind::Scaling, "scaling"},
                                                                     {AugmentKind::Translation, "translation"},
                                                                     {AugmentKind::Dropout, "dropout"},
                                                                     {AugmentKind::Jitter, "jitter"},
                                                                     {AugmentKind::SOR, "SOR"}}};

PointCloud refill(const PointCloud& x, const std::vector<Index>& keep, SeededRng& rng) {
  PointCloud out = x;
  std::vector<bool> kept(std::size_t(x.size()), false);
  for (Index k : keep) kept[std::size_t(k)] = true;
  for (Index i = 0; i < x.size(); ++i) {
    if (kept[std::size_t(i)]) continue;
    Index src = keep[std::size_t(rng.below(keep.size()))];
    out.xyz.row(i) = x.xyz.row(src);
  }
  return out;
}

}  // namespace

std::string to_string(AugmentKind kind) {
  for (auto [k, n] : kNames)
    if (k == kind) return n;
  return "?";
}

AugmentKind augment_kind_from_string(const std::string& name) {
  for (auto [k, n] : kNames)
    if (name == n) return k;
  throw Error(ErrorKind::ConfigError, "unknown augmentation '" + name + "'");
}

void AugmentationSpec::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
  if (!(angle_deg >= 0.0)) bad("augmentation angle must be >= 0");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) bad("scaling range must satisfy 0 < lo <= hi");
  if (!(shift >= 0.0)) bad("translation shift must be >= 0");
  if (!(max_drop >= 0.0 && max_drop < 1.0)) bad("dropout ratio must lie in [0, 1)");
  if (!(sigma >= 0.0)) bad("jitter sigma must be >= 0");
  if (!(sor.radius > 0.0 && sor.neighbors_at_1024 >= 0.0)) bad("invalid SOR parameters");
}

nlohmann::json AugmentationSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"seed", seed}};
  switch (kind) {
    case AugmentKind::R:
    case AugmentKind::R3: j["angle_deg"] = angle_deg; break;
    case AugmentKind::Scaling: j["scale"] = {scale_lo, scale_hi}; break;
    case AugmentKind::Translation: j["shift"] = shift; break;
    case AugmentKind::Dropout: j["max_drop"] = max_drop; break;
    case AugmentKind::Jitter: j["sigma"] = sigma; break;
    case AugmentKind::SOR:
      j["radius"] = sor.radius;
      j["neighbors_at_1024"] = sor.neighbors_at_1024;
      break;
  }
  return j;
}

AugmentationSpec AugmentationSpec::from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    AugmentationSpec s;
    s.kind = augment_kind_from_string(j.get<std::string>());
    return s;
  }
  if (!j.is_object() || !j.contains("kind")) throw Error(ErrorKind::ConfigError, "augmentation.kind: missing");
  AugmentationSpec s;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k == "kind") s.kind = augment_kind_from_string(it->get<std::string>());
      else if (k == "seed") s.seed = it->get<std::uint64_t>();
      else if (k == "angle_deg") s.angle_deg = it->get<double>();
      else if (k == "scale") {
        s.scale_lo = it->at(0).get<double>();
        s.scale_hi = it->at(1).get<double>();
      } else if (k == "shift") s.shift = it->get<double>();
      else if (k == "max_drop") s.max_drop = it->get<double>();
      else if (k == "sigma") s.sigma = it->get<double>();
      else if (k == "radius") s.sor.radius = it->get<double>();
      else if (k == "neighbors_at_1024") s.sor.neighbors_at_1024 = it->get<double>();
      else throw Error(ErrorKind::ConfigError, "augmentation." + k + ": unknown key");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("augmentation: ") + e.what());
  }
  s.validate();
  return s;
}

PointCloud augment(const PointCloud& x, const AugmentationSpec& spec, SeededRng& rng) {
  switch (spec.kind) {
    case AugmentKind::R:
      return rotate_euler(x, Vec3(0.0, 0.0, rng.uniform(-spec.angle_deg, spec.angle_deg)));
    case AugmentKind::R3: {
      Vec3 a;
      for (int c = 0; c < 3; ++c) a[c] = rng.uniform(-spec.angle_deg, spec.angle_deg);
      return rotate_euler(x, a);
    }
    case AugmentKind::Scaling: {
      PointCloud out = x;
      out.xyz *= rng.uniform(spec.scale_lo, spec.scale_hi);
      return out;
    }
    case AugmentKind::Translation: {
      Eigen::RowVector3d d;
      for (int c = 0; c < 3; ++c) d[c] = rng.uniform(-spec.shift, spec.shift);
      PointCloud out = x;
      out.xyz.rowwise() += d;
      return out;
    }
    case AugmentKind::Dropout: {
      const double ratio = rng.uniform(0.0, spec.max_drop);
      auto drop = std::size_t(std::floor(ratio * double(x.size())));
      if (drop == 0) return x;
      if (drop >= std::size_t(x.size())) drop = std::size_t(x.size()) - 1;
      std::vector<bool> dropped(std::size_t(x.size()), false);
      for (auto i : rng.sample_without_replacement(std::size_t(x.size()), drop)) dropped[i] = true;
      std::vector<Index> keep;
      for (Index i = 0; i < x.size(); ++i)
        if (!dropped[std::size_t(i)]) keep.push_back(i);
      return refill(x, keep, rng);
    }
    case AugmentKind::Jitter: {
      PointCloud out = x;
      for (Index i = 0; i < out.size(); ++i)
        for (Index c = 0; c < 3; ++c) out.xyz(i, c) += spec.sigma * rng.normal();
      return out;
    }
    case AugmentKind::SOR: {
      auto keep = sor_keep(x, spec.sor);
      if (keep.empty()) return x;
      if (Index(keep.size()) == x.size()) return x;
      return refill(x, keep, rng);
    }
  }
  return x;
}

std::vector<Index> sor_keep(const PointCloud& x, const SorParams& params, std::optional<double> threshold) {
  const double thr = threshold ? *threshold : params.threshold(x.size());
  const double r2 = params.radius * params.radius;
  const Index n = x.size();
  std::vector<Index> count(std::size_t(n), 0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double dx = x.xyz(i, 0) - x.xyz(j, 0);
      const double dy = x.xyz(i, 1) - x.xyz(j, 1);
      const double dz = x.xyz(i, 2) - x.xyz(j, 2);
      if (dx * dx + dy * dy + dz * dz <= r2) {
        ++count[std::size_t(i)];
        ++count[std::size_t(j)];
      }
    }
  }
  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (double(count[std::size_t(i)]) >= thr) keep.push_back(i);
  return keep;
}

PointCloud sor(const PointCloud& x, const SorParams& params, std::optional<double> threshold) {
  if (x.empty()) throw Error(ErrorKind::EmptyCloud, "sor on an empty cloud");
  auto keep = sor_keep(x, params, threshold);
  if (keep.empty()) throw Error(ErrorKind::AllPointsRemoved, "sor removed every point");
  Points out(Index(keep.size()), 3);
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(Index(k)) = x.xyz.row(keep[k]);
  return PointCloud(std::move(out));
}

}  // namespace pcbd
