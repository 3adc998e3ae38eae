#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcbd/attack.hpp"
#include "pcbd/config.hpp"

namespace pcbd {

using Progress = std::function<void(const std::string&)>;

/// Error raised by a pipeline stage; carries the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  nlohmann::json config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> artifacts;  // relative path -> content hash
  std::vector<StageTiming> timings;

  nlohmann::json to_json() const;
};

struct RunResult {
  std::filesystem::path dir;
  AttackReport report;
  RunManifest manifest;
};

/// Train and test sets for a dataset config; deterministic in seed.
std::pair<LabeledDataset, LabeledDataset> generate_data(const DatasetConfig& config, std::uint64_t seed);

/// Trigger from its config JSON; `seed` is used when the JSON has none.
TriggerSpec make_trigger(const nlohmann::json& spec, std::shared_ptr<const AEModel> model, std::uint64_t seed);

/// output_dir/<UTC timestamp> (suffixed if taken) unless overwrite.
std::filesystem::path run_directory(const std::filesystem::path& output_dir, bool overwrite);

/// gen-data -> train-ae -> poison -> train-victim -> eval -> defend -> analyze.
/// Writes datasets, checkpoints, report.json, report.csv, the plot CSVs and
/// manifest.json into dir. Stage failures are rethrown as StageError.
RunResult full_run(const ExperimentConfig& config, const std::filesystem::path& dir, const Progress& progress = {});

/// Helpers shared with the individual CLI commands.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);
/// Header line "# seed=<seed> config=<hash>" followed by the CSV body.
std::string tagged_csv(std::uint64_t seed, const std::string& config_hash, const std::string& body);

}  // namespace pcbd
