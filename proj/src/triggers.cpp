#include "pcbd/triggers.hpp"

#include <cmath>

#include "pcbd/error.hpp"

namespace pcbd {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 json_vec(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::ConfigError, key + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw Error(ErrorKind::ConfigError, where + "." + it.key() + ": unknown key");
  }
}

}  // namespace

std::string TriggerSpec::name() const {
  return std::visit(overloaded{[](const IbaTrigger&) { return std::string("iba"); },
                               [](const BallClusterTrigger&) { return std::string("ball_cluster"); },
                               [](const RotationTrigger&) { return std::string("rotation"); },
                               [](const JitterTrigger&) { return std::string("jitter"); }},
                    variant);
}

void TriggerSpec::validate() const {
  std::visit(overloaded{[](const IbaTrigger& p) {
                          if (!p.model) throw Error(ErrorKind::InvalidArgument, "iba trigger without a model");
                          if (p.t && !(*p.t >= 0.0 && *p.t <= 1.0))
                            throw Error(ErrorKind::InvalidArgument, "iba t must lie in [0, 1]");
                          if (p.t) p.smoothing.validate();
                        },
                        [](const BallClusterTrigger& p) {
                          if (!(p.fraction > 0.0 && p.fraction < 1.0))
                            throw Error(ErrorKind::InvalidArgument, "ball cluster fraction must lie in (0, 1)");
                          if (!(p.radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "ball cluster radius must be > 0");
                        },
                        [](const RotationTrigger& p) {
                          if (!p.degrees.allFinite()) throw Error(ErrorKind::InvalidArgument, "rotation angles not finite");
                        },
                        [](const JitterTrigger& p) {
                          if (!(p.sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "jitter sigma must be >= 0");
                        }},
             variant);
}

nlohmann::json TriggerSpec::to_json() const {
  nlohmann::json j = std::visit(
      overloaded{[](const IbaTrigger& p) {
                   nlohmann::json o{{"kind", "iba"}};
                   if (p.t) {
                     o["t"] = *p.t;
                     o["max_order"] = p.smoothing.max_order;
                     o["grid"] = {p.smoothing.grid.rows, p.smoothing.grid.cols};
                     o["collision"] = p.smoothing.collision == CollisionRule::NearestSphere ? "nearest_sphere"
                                                                                             : "smallest_radius";
                   }
                   return o;
                 },
                 [](const BallClusterTrigger& p) {
                   return nlohmann::json{{"kind", "ball_cluster"},
                                         {"center", vec_json(p.center)},
                                         {"radius", p.radius},
                                         {"fraction", p.fraction}};
                 },
                 [](const RotationTrigger& p) {
                   return nlohmann::json{{"kind", "rotation"}, {"degrees", vec_json(p.degrees)}};
                 },
                 [](const JitterTrigger& p) { return nlohmann::json{{"kind", "jitter"}, {"sigma", p.sigma}}; }},
      variant);
  j["seed"] = seed;
  return j;
}

TriggerSpec TriggerSpec::from_json(const nlohmann::json& j, std::shared_ptr<const AEModel> model) {
  if (!j.is_object() || !j.contains("kind")) throw Error(ErrorKind::ConfigError, "trigger.kind: missing");
  auto kind = j.at("kind").get<std::string>();
  TriggerSpec spec;
  spec.seed = j.value("seed", std::uint64_t{0});
  try {
    if (kind == "iba") {
      check_keys(j, {"kind", "seed", "t", "max_order", "grid", "collision"}, "trigger");
      IbaTrigger p;
      p.model = std::move(model);
      if (j.contains("t")) p.t = j["t"].get<double>();
      if (j.contains("max_order")) p.smoothing.max_order = j["max_order"].get<int>();
      if (j.contains("grid")) {
        p.smoothing.grid.rows = j["grid"].at(0).get<Index>();
        p.smoothing.grid.cols = j["grid"].at(1).get<Index>();
      }
      if (j.contains("collision")) {
        auto c = j["collision"].get<std::string>();
        if (c == "nearest_sphere") p.smoothing.collision = CollisionRule::NearestSphere;
        else if (c == "smallest_radius") p.smoothing.collision = CollisionRule::SmallestRadius;
        else throw Error(ErrorKind::ConfigError, "trigger.collision: unknown rule '" + c + "'");
      }
      p.smoothing.seed = spec.seed;
      spec.variant = p;
    } else if (kind == "ball_cluster") {
      check_keys(j, {"kind", "seed", "center", "radius", "fraction"}, "trigger");
      BallClusterTrigger p;
      if (j.contains("center")) p.center = json_vec(j["center"], "trigger.center");
      p.radius = j.value("radius", p.radius);
      p.fraction = j.value("fraction", p.fraction);
      spec.variant = p;
    } else if (kind == "rotation") {
      check_keys(j, {"kind", "seed", "degrees"}, "trigger");
      RotationTrigger p;
      if (j.contains("degrees")) p.degrees = json_vec(j["degrees"], "trigger.degrees");
      spec.variant = p;
    } else if (kind == "jitter") {
      check_keys(j, {"kind", "seed", "sigma"}, "trigger");
      JitterTrigger p;
      p.sigma = j.value("sigma", p.sigma);
      spec.variant = p;
    } else {
      throw Error(ErrorKind::ConfigError, "trigger.kind: unknown trigger '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("trigger: ") + e.what());
  }
  return spec;
}

PointCloud ball_cluster(const PointCloud& x, const BallClusterTrigger& p, SeededRng& rng) {
  const double want = p.fraction * double(x.size());
  if (want < 1.0) {
    throw Error(ErrorKind::FractionTooSmall,
                "fraction " + std::to_string(p.fraction) + " of " + std::to_string(x.size()) + " points is below one");
  }
  auto k = std::size_t(std::llround(want));
  PointCloud out = x;
  for (auto idx : rng.sample_without_replacement(std::size_t(x.size()), k)) {
    Vec3 d;
    do {
      d = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    } while (d.squaredNorm() > 1.0);
    out.xyz.row(Index(idx)) = (p.center + p.radius * d).transpose();
  }
  return out;
}

PointCloud rotation_trigger(const PointCloud& x, const Vec3& degrees) { return rotate_euler(x, degrees); }

PointCloud jitter_trigger(const PointCloud& x, double sigma, SeededRng& rng) {
  if (!(sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "jitter sigma must be >= 0");
  PointCloud out = x;
  for (Index i = 0; i < out.size(); ++i)
    for (Index c = 0; c < 3; ++c) out.xyz(i, c) += sigma * rng.normal();
  return out;
}

PointCloud apply_trigger(const TriggerSpec& spec, const PointCloud& x, std::uint64_t stream) {
  spec.validate();
  SeededRng rng(spec.seed, stream);
  return std::visit(overloaded{[&](const IbaTrigger& p) {
                                 PointCloud g = implant_iba(*p.model, x);
                                 if (!p.t) return g;
                                 SmoothingConfig cfg = p.smoothing;
                                 cfg.seed = spec.seed;
                                 return homotopy_clouds(x, g, *p.t, cfg, stream);
                               },
                               [&](const BallClusterTrigger& p) { return ball_cluster(x, p, rng); },
                               [&](const RotationTrigger& p) { return rotation_trigger(x, p.degrees); },
                               [&](const JitterTrigger& p) { return jitter_trigger(x, p.sigma, rng); }},
                    spec.variant);
}

PointCloud homotopy(const TriggerSpec& g, const PointCloud& x, double t, const SmoothingConfig& config,
                    std::uint64_t stream) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::InvalidArgument, "t must lie in [0, 1]");
  if (t == 0.0) return x;
  TriggerSpec raw = g;
  if (auto* iba = std::get_if<IbaTrigger>(&raw.variant)) iba->t.reset();
  PointCloud gx = apply_trigger(raw, x, stream);
  return homotopy_clouds(x, gx, t, config, stream);
}

}  // namespace pcbd
