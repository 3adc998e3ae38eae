#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcbd/augment.hpp"
#include "pcbd/folding_ae.hpp"
#include "pcbd/sht.hpp"
#include "pcbd/synth.hpp"
#include "pcbd/triggers.hpp"
#include "pcbd/victims.hpp"

namespace pcbd {

inline constexpr std::string_view kConfigSchema = "pcbd-experiment/1";

struct DatasetConfig {
  std::vector<ShapeFamily> classes{ShapeFamily::Sphere,    ShapeFamily::Box,   ShapeFamily::Cylinder,
                                   ShapeFamily::Cone,      ShapeFamily::Torus, ShapeFamily::Ellipsoid,
                                   ShapeFamily::Cross,     ShapeFamily::Pyramid};
  int train_per_class = 100;
  int test_per_class = 25;
  Index points = 256;
  SynthOptions options;
};

struct PoisonConfig {
  double rate = 0.05;
  int target = 0;
};

/// Trigger parameters as written in the config; the iBA model is the one
/// trained by the pipeline.
struct TriggerConfig {
  nlohmann::json spec = {{"kind", "iba"}};
};

struct DefenseConfig {
  bool sor = false;
  SorParams sor_params;
  std::optional<int> lpf_cut;
  std::vector<AugmentationSpec> augmentations;  // trains an extra augmented victim
};

struct AnalysisConfig {
  std::vector<double> homotopy_t{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<int> orders{4, 16, 64, 100};
  int samples = 20;  // test clouds used by the curves and band profiles
  Index gft_k = 10;
  std::vector<std::string> gft_triggers{"jitter", "ball_cluster", "iba"};
  SmoothingConfig smoothing;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::filesystem::path output_dir = "runs";
  DatasetConfig dataset;
  AEConfig autoencoder = AEConfig::toy();
  TriggerConfig trigger;
  PoisonConfig poison;
  VictimSpec victim;
  DefenseConfig defenses;
  AnalysisConfig analysis;

  /// Throws ConfigError with the offending field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Hash of the canonical JSON form.
  std::string hash() const;
};

SmoothingConfig smoothing_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json smoothing_to_json(const SmoothingConfig& s);

}  // namespace pcbd
