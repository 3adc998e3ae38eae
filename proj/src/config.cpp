#include "pcbd/config.hpp"

#include <fstream>
#include <sstream>

#include "pcbd/checkpoint.hpp"
#include "pcbd/error.hpp"

namespace pcbd {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw Error(ErrorKind::ConfigError, path + ": " + why);
}

// Reads a value, reporting the field path on a type error.
template <class T>
T read(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    fail(path, "wrong type (" + std::string(v.type_name()) + ")");
  }
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

DatasetConfig dataset_from_json(const json& j) {
  require_object(j, "dataset");
  DatasetConfig d;
  for (const auto& [k, v] : j.items()) {
    const std::string path = "dataset." + k;
    if (k == "classes") {
      d.classes.clear();
      for (const auto& name : v) {
        auto f = shape_family_from_string(read<std::string>(name, path));
        if (!f) fail(path, "unknown shape family '" + name.get<std::string>() + "'");
        d.classes.push_back(*f);
      }
      if (d.classes.size() < 2) fail(path, "need at least two classes");
    } else if (k == "train_per_class") d.train_per_class = read<int>(v, path);
    else if (k == "test_per_class") d.test_per_class = read<int>(v, path);
    else if (k == "points") d.points = read<Index>(v, path);
    else if (k == "scale_jitter") d.options.scale_jitter = read<double>(v, path);
    else if (k == "z_rotation_deg") d.options.z_rotation_deg = read<double>(v, path);
    else fail(path, "unknown key");
  }
  if (d.train_per_class < 1) fail("dataset.train_per_class", "must be >= 1");
  if (d.test_per_class < 1) fail("dataset.test_per_class", "must be >= 1");
  if (d.points < 16) fail("dataset.points", "must be >= 16");
  return d;
}

json dataset_to_json(const DatasetConfig& d) {
  json classes = json::array();
  for (auto f : d.classes) classes.push_back(std::string(to_string(f)));
  return {{"classes", classes},
          {"train_per_class", d.train_per_class},
          {"test_per_class", d.test_per_class},
          {"points", d.points},
          {"scale_jitter", d.options.scale_jitter},
          {"z_rotation_deg", d.options.z_rotation_deg}};
}

DefenseConfig defenses_from_json(const json& j) {
  require_object(j, "defenses");
  DefenseConfig d;
  for (const auto& [k, v] : j.items()) {
    const std::string path = "defenses." + k;
    if (k == "sor") d.sor = read<bool>(v, path);
    else if (k == "sor_radius") d.sor_params.radius = read<double>(v, path);
    else if (k == "sor_neighbors_at_1024") d.sor_params.neighbors_at_1024 = read<double>(v, path);
    else if (k == "lpf_cut") {
      if (!v.is_null()) d.lpf_cut = read<int>(v, path);
    } else if (k == "augmentations") {
      if (!v.is_array()) fail(path, "expected an array");
      for (std::size_t i = 0; i < v.size(); ++i) {
        try {
          d.augmentations.push_back(AugmentationSpec::from_json(v[i]));
        } catch (const Error& e) {
          fail(path + "[" + std::to_string(i) + "]", e.what());
        }
      }
    } else fail(path, "unknown key");
  }
  if (!(d.sor_params.radius > 0.0)) fail("defenses.sor_radius", "must be positive");
  if (d.lpf_cut && *d.lpf_cut < 0) fail("defenses.lpf_cut", "must be >= 0");
  return d;
}

json defenses_to_json(const DefenseConfig& d) {
  json augs = json::array();
  for (const auto& a : d.augmentations) augs.push_back(a.to_json());
  return {{"sor", d.sor},
          {"sor_radius", d.sor_params.radius},
          {"sor_neighbors_at_1024", d.sor_params.neighbors_at_1024},
          {"lpf_cut", d.lpf_cut ? json(*d.lpf_cut) : json(nullptr)},
          {"augmentations", augs}};
}

AnalysisConfig analysis_from_json(const json& j) {
  require_object(j, "analysis");
  AnalysisConfig a;
  for (const auto& [k, v] : j.items()) {
    const std::string path = "analysis." + k;
    if (k == "homotopy_t") a.homotopy_t = read<std::vector<double>>(v, path);
    else if (k == "orders") a.orders = read<std::vector<int>>(v, path);
    else if (k == "samples") a.samples = read<int>(v, path);
    else if (k == "gft_k") a.gft_k = read<Index>(v, path);
    else if (k == "gft_triggers") a.gft_triggers = read<std::vector<std::string>>(v, path);
    else if (k == "smoothing") a.smoothing = smoothing_from_json(v, path);
    else fail(path, "unknown key");
  }
  for (double t : a.homotopy_t)
    if (!(t >= 0.0 && t <= 1.0)) fail("analysis.homotopy_t", "values must lie in [0, 1]");
  for (int l : a.orders)
    if (l < 0 || l > a.smoothing.max_order) fail("analysis.orders", "orders must lie in [0, smoothing.max_order]");
  if (a.samples < 1) fail("analysis.samples", "must be >= 1");
  if (a.gft_k < 1) fail("analysis.gft_k", "must be >= 1");
  for (const auto& t : a.gft_triggers)
    if (t != "jitter" && t != "ball_cluster" && t != "iba" && t != "rotation")
      fail("analysis.gft_triggers", "unknown trigger '" + t + "'");
  return a;
}

json analysis_to_json(const AnalysisConfig& a) {
  return {{"homotopy_t", a.homotopy_t}, {"orders", a.orders},     {"samples", a.samples},
          {"gft_k", a.gft_k},           {"gft_triggers", a.gft_triggers},
          {"smoothing", smoothing_to_json(a.smoothing)}};
}

}  // namespace

SmoothingConfig smoothing_from_json(const json& j, const std::string& where) {
  require_object(j, where);
  SmoothingConfig s;
  for (const auto& [k, v] : j.items()) {
    const std::string path = where + "." + k;
    if (k == "max_order") s.max_order = read<int>(v, path);
    else if (k == "grid") {
      auto g = read<std::vector<Index>>(v, path);
      if (g.size() != 2) fail(path, "expected [rows, cols]");
      s.grid.rows = g[0];
      s.grid.cols = g[1];
    } else if (k == "collision") {
      auto c = read<std::string>(v, path);
      if (c == "nearest_sphere") s.collision = CollisionRule::NearestSphere;
      else if (c == "smallest_radius") s.collision = CollisionRule::SmallestRadius;
      else fail(path, "unknown rule '" + c + "'");
    } else if (k == "seed") s.seed = read<std::uint64_t>(v, path);
    else fail(path, "unknown key");
  }
  try {
    s.validate();
  } catch (const Error& e) {
    fail(where, e.what());
  }
  return s;
}

json smoothing_to_json(const SmoothingConfig& s) {
  return {{"max_order", s.max_order},
          {"grid", {s.grid.rows, s.grid.cols}},
          {"collision", s.collision == CollisionRule::NearestSphere ? "nearest_sphere" : "smallest_radius"},
          {"seed", s.seed}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  require_object(j, "config");
  if (!j.contains("schema")) fail("schema", "missing");
  if (read<std::string>(j.at("schema"), "schema") != kConfigSchema)
    fail("schema", "unsupported schema '" + j.at("schema").get<std::string>() + "', expected '" +
                       std::string(kConfigSchema) + "'");
  ExperimentConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "schema") continue;
    if (k == "seed") c.seed = read<std::uint64_t>(v, "seed");
    else if (k == "output_dir") c.output_dir = read<std::string>(v, "output_dir");
    else if (k == "dataset") c.dataset = dataset_from_json(v);
    else if (k == "ae") {
      require_object(v, "ae");
      c.autoencoder = AEConfig::from_json(v);
    } else if (k == "trigger") {
      require_object(v, "trigger");
      TriggerSpec::from_json(v, nullptr);  // validates keys and kinds
      c.trigger.spec = v;
    } else if (k == "poison") {
      require_object(v, "poison");
      for (const auto& [pk, pv] : v.items()) {
        if (pk == "rate") c.poison.rate = read<double>(pv, "poison.rate");
        else if (pk == "target") c.poison.target = read<int>(pv, "poison.target");
        else fail("poison." + pk, "unknown key");
      }
    } else if (k == "victim") {
      try {
        c.victim = VictimSpec::from_json(v);
      } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
      }
    } else if (k == "defenses") c.defenses = defenses_from_json(v);
    else if (k == "analysis") c.analysis = analysis_from_json(v);
    else fail(k, "unknown key");
  }
  if (!(c.poison.rate > 0.0 && c.poison.rate < 1.0)) fail("poison.rate", "must lie in (0, 1)");
  if (c.poison.target < 0 || c.poison.target >= int(c.dataset.classes.size()))
    fail("poison.target", "outside the dataset's classes");
  if (!(j.contains("victim") && j.at("victim").contains("num_classes")))
    c.victim.num_classes = int(c.dataset.classes.size());
  if (c.victim.num_classes != int(c.dataset.classes.size()))
    fail("victim.num_classes", "does not match the number of dataset classes");
  if (c.autoencoder.num_points() != c.dataset.points)
    fail("ae.grid_side", "grid_side^2 must equal dataset.points");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  return {{"schema", kConfigSchema},
          {"seed", seed},
          {"output_dir", output_dir.string()},
          {"dataset", dataset_to_json(dataset)},
          {"ae", autoencoder.to_json()},
          {"trigger", trigger.spec},
          {"poison", {{"rate", poison.rate}, {"target", poison.target}}},
          {"victim", victim.to_json()},
          {"defenses", defenses_to_json(defenses)},
          {"analysis", analysis_to_json(analysis)}};
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return content_hash(j.dump());
}

}  // namespace pcbd
