#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "pcbd/triggers.hpp"
#include "pcbd/victims.hpp"

namespace pcbd {

struct PoisonPlan {
  double rate = 0.02;  // eta
  int target = 0;      // y_t
  TriggerSpec trigger;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

struct PoisonResult {
  LabeledDataset data;
  std::vector<std::size_t> poisoned;  // ascending dataset indices
};

/// round(rate * N) entries drawn uniformly from those whose label differs
/// from the target; each is replaced by its triggered cloud (trigger stream =
/// dataset index) and relabelled to the target.
PoisonResult poison_dataset(const LabeledDataset& train, const PoisonPlan& plan);

double eval_acc(const VictimModel& model, const LabeledDataset& test);

struct AsrResult {
  double excluding_target = 0.0;  // over test entries whose label != target
  double including_target = 0.0;  // over every test entry
  std::size_t evaluated = 0;       // entries in the excluding_target average
};
AsrResult eval_asr(const VictimModel& model, const LabeledDataset& test, const TriggerSpec& trigger, int target);

struct Imperceptibility {
  double chamfer = 0.0;
  double wasserstein = 0.0;  // exact optimal assignment
  double sliced = 0.0;       // 256 projections
  double hausdorff = 0.0;
};
/// Means over the set of d(G(X), X).
Imperceptibility eval_imperceptibility(const LabeledDataset& data, const TriggerSpec& trigger);
/// Same metrics on precomputed pairs.
Imperceptibility mean_imperceptibility(const std::vector<PointCloud>& clean, const std::vector<PointCloud>& triggered,
                                       std::uint64_t seed = 0);

/// Triggered copies of every test cloud, stream = index.
std::vector<PointCloud> triggered_clouds(const LabeledDataset& data, const TriggerSpec& trigger);

struct AttackReport {
  std::string victim;
  std::string trigger;
  double acc = 0.0;
  double asr = 0.0;
  double asr_including_target = 0.0;
  Imperceptibility imperceptibility;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace pcbd
