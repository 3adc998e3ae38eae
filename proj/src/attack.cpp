#include "pcbd/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcbd/error.hpp"
#include "pcbd/metrics.hpp"
#include "pcbd/parallel.hpp"

namespace pcbd {

void PoisonPlan::validate(int num_classes) const {
  if (!(rate > 0.0 && rate < 1.0)) throw Error(ErrorKind::InvalidArgument, "poisoning rate must lie in (0, 1)");
  if (target < 0 || target >= num_classes)
    throw Error(ErrorKind::LabelOutOfRange, "target label " + std::to_string(target) + " outside " +
                                                std::to_string(num_classes) + " classes");
  trigger.validate();
}

PoisonResult poison_dataset(const LabeledDataset& train, const PoisonPlan& plan) {
  plan.validate(train.num_classes);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train.entries[i].label != plan.target) eligible.push_back(i);
  const auto want = std::size_t(std::llround(plan.rate * double(train.size())));
  if (eligible.empty() || want == 0)
    throw Error(ErrorKind::NothingToPoison, "round(" + std::to_string(plan.rate) + " * " +
                                                std::to_string(train.size()) + ") selects no eligible entry");
  if (want > eligible.size())
    throw Error(ErrorKind::NothingToPoison, "only " + std::to_string(eligible.size()) + " eligible entries for " +
                                                std::to_string(want) + " poisoned samples");
  SeededRng rng(plan.seed, 0x9015);
  std::vector<std::size_t> chosen;
  for (auto k : rng.sample_without_replacement(eligible.size(), want)) chosen.push_back(eligible[k]);
  std::sort(chosen.begin(), chosen.end());

  PoisonResult out{train, chosen};
  parallel_for(chosen.size(), [&](std::size_t k) {
    const std::size_t idx = chosen[k];
    out.data.entries[idx].cloud = apply_trigger(plan.trigger, train.entries[idx].cloud, idx);
    out.data.entries[idx].label = plan.target;
  });
  return out;
}

namespace {

std::vector<PointCloud> clouds_of(const LabeledDataset& d) {
  std::vector<PointCloud> out;
  out.reserve(d.size());
  for (const auto& e : d.entries) out.push_back(e.cloud);
  return out;
}

}  // namespace

double eval_acc(const VictimModel& model, const LabeledDataset& test) {
  if (test.entries.empty()) return 0.0;
  const auto pred = predict_all(model, clouds_of(test));
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == test.entries[i].label) ++hit;
  return double(hit) / double(test.size());
}

std::vector<PointCloud> triggered_clouds(const LabeledDataset& data, const TriggerSpec& trigger) {
  std::vector<PointCloud> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) { out[i] = apply_trigger(trigger, data.entries[i].cloud, i); });
  return out;
}

AsrResult eval_asr(const VictimModel& model, const LabeledDataset& test, const TriggerSpec& trigger, int target) {
  AsrResult r;
  if (test.entries.empty()) return r;
  const auto pred = predict_all(model, triggered_clouds(test, trigger));
  std::size_t hit_all = 0, hit_other = 0, other = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool hit = pred[i] == target;
    hit_all += hit;
    if (test.entries[i].label != target) {
      ++other;
      hit_other += hit;
    }
  }
  r.including_target = double(hit_all) / double(pred.size());
  r.excluding_target = other ? double(hit_other) / double(other) : 0.0;
  r.evaluated = other;
  return r;
}

Imperceptibility mean_imperceptibility(const std::vector<PointCloud>& clean, const std::vector<PointCloud>& triggered,
                                       std::uint64_t seed) {
  if (clean.size() != triggered.size()) throw Error(ErrorKind::SizeMismatch, "clean and triggered sets differ in size");
  Imperceptibility m;
  if (clean.empty()) return m;
  std::vector<Imperceptibility> per(clean.size());
  parallel_for(clean.size(), [&](std::size_t i) {
    SeededRng rng(seed, i);
    per[i].chamfer = chamfer(triggered[i], clean[i]);
    per[i].hausdorff = hausdorff(triggered[i], clean[i]);
    per[i].sliced = sliced_wasserstein(triggered[i], clean[i], 256, rng);
    per[i].wasserstein = triggered[i].size() == clean[i].size() ? wasserstein_exact(triggered[i], clean[i])
                                                                 : std::nan("");
  });
  for (const auto& p : per) {
    m.chamfer += p.chamfer;
    m.hausdorff += p.hausdorff;
    m.sliced += p.sliced;
    m.wasserstein += p.wasserstein;
  }
  const double k = double(clean.size());
  m.chamfer /= k;
  m.hausdorff /= k;
  m.sliced /= k;
  m.wasserstein /= k;
  return m;
}

Imperceptibility eval_imperceptibility(const LabeledDataset& data, const TriggerSpec& trigger) {
  return mean_imperceptibility(clouds_of(data), triggered_clouds(data, trigger), trigger.seed);
}

nlohmann::json AttackReport::to_json() const {
  return {{"victim", victim},
          {"trigger", trigger},
          {"acc", acc},
          {"asr", asr},
          {"asr_including_target", asr_including_target},
          {"imperceptibility",
           {{"chamfer", imperceptibility.chamfer},
            {"wasserstein", imperceptibility.wasserstein},
            {"sliced_wasserstein", imperceptibility.sliced},
            {"hausdorff", imperceptibility.hausdorff}}},
          {"config", config}};
}

std::string AttackReport::csv_header() { return "victim,trigger,acc,asr,asr_including_target,cd,wd,swd,hd"; }

std::string AttackReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << victim << ',' << trigger << ',' << acc << ',' << asr << ',' << asr_including_target << ','
     << imperceptibility.chamfer << ',' << imperceptibility.wasserstein << ',' << imperceptibility.sliced << ','
     << imperceptibility.hausdorff;
  return os.str();
}

}  // namespace pcbd
