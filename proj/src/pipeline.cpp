#include "pcbd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pcbd/checkpoint.hpp"
#include "pcbd/defenses.hpp"
#include "pcbd/error.hpp"
#include "pcbd/metrics.hpp"
#include "pcbd/parallel.hpp"
#include "pcbd/spectral.hpp"

namespace pcbd {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tagged_csv(std::uint64_t seed, const std::string& config_hash, const std::string& body) {
  return "# seed=" + std::to_string(seed) + " config=" + config_hash + "\n" + body;
}

json RunManifest::to_json() const {
  json t = json::array();
  for (const auto& s : timings) t.push_back({{"stage", s.stage}, {"seconds", s.seconds}});
  return {{"config", config}, {"config_hash", config_hash}, {"seed", seed}, {"artifacts", artifacts}, {"timings", t}};
}

std::pair<LabeledDataset, LabeledDataset> generate_data(const DatasetConfig& config, std::uint64_t seed) {
  SeededRng root(seed);
  SeededRng train_rng = root.derive(10), test_rng = root.derive(11);
  return {synth_dataset(config.classes, config.train_per_class, config.points, train_rng, config.options, Split::Train),
          synth_dataset(config.classes, config.test_per_class, config.points, test_rng, config.options, Split::Test)};
}

TriggerSpec make_trigger(const json& spec, std::shared_ptr<const AEModel> model, std::uint64_t seed) {
  json j = spec;
  if (!j.contains("seed")) j["seed"] = seed;
  return TriggerSpec::from_json(j, std::move(model));
}

fs::path run_directory(const fs::path& output_dir, bool overwrite) {
  if (overwrite) {
    fs::create_directories(output_dir);
    return output_dir;
  }
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  fs::path dir = output_dir / name.str();
  for (int k = 1; fs::exists(dir); ++k) dir = output_dir / (name.str() + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::vector<std::size_t> spread_indices(std::size_t size, int count) {
  std::vector<std::size_t> out;
  const auto k = std::min(size, std::size_t(count));
  for (std::size_t i = 0; i < k; ++i) out.push_back(i * size / k);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

TriggerSpec analysis_trigger(const std::string& name, const TriggerSpec& iba, std::uint64_t seed) {
  TriggerSpec t;
  t.seed = seed;
  if (name == "jitter") t.variant = JitterTrigger{};
  else if (name == "ball_cluster") t.variant = BallClusterTrigger{};
  else if (name == "rotation") t.variant = RotationTrigger{};
  else return iba;
  return t;
}

LabeledDataset filtered(const LabeledDataset& data, const std::vector<PointCloud>& clouds) {
  LabeledDataset out = data;
  for (std::size_t i = 0; i < clouds.size(); ++i) out.entries[i].cloud = clouds[i];
  return out;
}

}  // namespace

RunResult full_run(const ExperimentConfig& config, const fs::path& dir, const Progress& progress) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  RunResult result;
  result.dir = dir;
  RunManifest& manifest = result.manifest;
  manifest.config = config.to_json();
  manifest.config_hash = config.hash();
  manifest.seed = config.seed;
  const std::string& hash = manifest.config_hash;
  const json tag = {{"seed", config.seed}, {"config_hash", hash}};
  fs::create_directories(dir);
  write_text(dir / "config.json", manifest.config.dump(2) + "\n");

  auto stage = [&](const std::string& name, auto&& body) {
    say("[" + name + "]");
    Stopwatch sw;
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    manifest.timings.push_back({name, sw.seconds()});
  };

  LabeledDataset train, test;
  stage("gen-data", [&] {
    std::tie(train, test) = generate_data(config.dataset, config.seed);
    save_dataset(train, dir / "data" / "train", tag);
    save_dataset(test, dir / "data" / "test", tag);
  });

  std::shared_ptr<const AEModel> ae;
  stage("train-ae", [&] {
    SeededRng rng = SeededRng(config.seed).derive(20);
    auto model = train_ae(train, config.autoencoder, rng, [&](int epoch, double loss) {
      if (epoch % 25 == 0 || epoch == config.autoencoder.epochs)
        say("  ae epoch " + std::to_string(epoch) + " loss " + fmt(loss));
    });
    Checkpoint ckpt = model.to_checkpoint(config.seed);
    ckpt.meta["config_hash"] = hash;
    write_checkpoint(ckpt, dir / "ae.ckpt");
    ae = std::make_shared<const AEModel>(std::move(model));
  });

  TriggerSpec trigger;
  PoisonResult poisoned;
  stage("poison", [&] {
    trigger = make_trigger(config.trigger.spec, ae, config.seed);
    PoisonPlan plan{config.poison.rate, config.poison.target, trigger, config.seed};
    poisoned = poison_dataset(train, plan);
    json meta = tag;
    meta["trigger"] = trigger.to_json();
    meta["rate"] = plan.rate;
    meta["target"] = plan.target;
    save_dataset(poisoned.data, dir / "poisoned", meta);
    write_text(dir / "poisoned" / "poisoned_indices.json", json(poisoned.poisoned).dump() + "\n");
  });

  std::unique_ptr<VictimModel> victim;
  stage("train-victim", [&] {
    SeededRng rng = SeededRng(config.seed).derive(30);
    VictimModel model = train_victim(poisoned.data, config.victim, rng, {}, [&](int epoch, const EpochRecord& r) {
      if (epoch % 25 == 0 || epoch == config.victim.epochs)
        say("  victim epoch " + std::to_string(epoch) + " loss " + fmt(r.loss) + " acc " + fmt(r.accuracy));
    });
    Checkpoint ckpt = model.to_checkpoint(config.seed);
    ckpt.meta["config_hash"] = hash;
    write_checkpoint(ckpt, dir / "victim.ckpt");
    victim = std::make_unique<VictimModel>(std::move(model));
  });

  AttackReport& report = result.report;
  std::vector<PointCloud> test_triggered;
  stage("eval", [&] {
    test_triggered = triggered_clouds(test, trigger);
    report.victim = to_string(config.victim.arch);
    report.trigger = trigger.name();
    report.acc = eval_acc(*victim, test);
    const AsrResult asr = eval_asr(*victim, test, trigger, config.poison.target);
    report.asr = asr.excluding_target;
    report.asr_including_target = asr.including_target;
    std::vector<PointCloud> clean;
    for (const auto& e : test.entries) clean.push_back(e.cloud);
    report.imperceptibility = mean_imperceptibility(clean, test_triggered, config.seed);
    report.config = manifest.config;
    say("  acc " + fmt(report.acc) + " asr " + fmt(report.asr));
  });

  json defenses = json::array();
  stage("defend", [&] {
    auto evaluate = [&](const std::string& name, const VictimModel& model, const std::vector<PointCloud>& clean,
                        const std::vector<PointCloud>& triggered, json extra) {
      const double acc = eval_acc(model, filtered(test, clean));
      std::size_t hit = 0, other = 0;
      const auto pred = predict_all(model, triggered);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (test.entries[i].label == config.poison.target) continue;
        ++other;
        hit += pred[i] == config.poison.target;
      }
      extra["defense"] = name;
      extra["acc"] = acc;
      extra["asr"] = other ? double(hit) / double(other) : 0.0;
      defenses.push_back(extra);
    };
    auto map_clouds = [&](const std::vector<PointCloud>& in, const std::function<PointCloud(const PointCloud&)>& f) {
      std::vector<PointCloud> out(in.size());
      parallel_for(in.size(), [&](std::size_t i) { out[i] = f(in[i]); });
      return out;
    };
    std::vector<PointCloud> clean;
    for (const auto& e : test.entries) clean.push_back(e.cloud);
    if (config.defenses.sor) {
      auto f = [&](const PointCloud& c) { return sor(c, config.defenses.sor_params); };
      evaluate("SOR", *victim, map_clouds(clean, f), map_clouds(test_triggered, f),
               {{"radius", config.defenses.sor_params.radius},
                {"threshold", config.defenses.sor_params.threshold(config.dataset.points)}});
    }
    if (config.defenses.lpf_cut) {
      const int cut = *config.defenses.lpf_cut;
      auto f = [&](const PointCloud& c) { return lpf_defense(c, cut, config.analysis.smoothing); };
      evaluate("LPF", *victim, map_clouds(clean, f), map_clouds(test_triggered, f), {{"l_cut", cut}});
    }
    for (std::size_t k = 0; k < config.defenses.augmentations.size(); ++k) {
      const auto& aug = config.defenses.augmentations[k];
      SeededRng rng = SeededRng(config.seed).derive(40 + k);
      VictimModel model = train_victim(poisoned.data, config.victim, rng, {aug});
      Checkpoint ckpt = model.to_checkpoint(config.seed);
      ckpt.meta["config_hash"] = hash;
      ckpt.meta["augmentation"] = aug.to_json();
      write_checkpoint(ckpt, dir / ("victim_" + to_string(aug.kind) + ".ckpt"));
      evaluate("augment:" + to_string(aug.kind), model, clean, test_triggered, {{"augmentation", aug.to_json()}});
    }
    std::ostringstream csv;
    csv << "defense,acc,asr\n";
    for (const auto& d : defenses) csv << d["defense"].get<std::string>() << ',' << fmt(d["acc"]) << ',' << fmt(d["asr"]) << '\n';
    write_text(dir / "defenses.csv", tagged_csv(config.seed, hash, csv.str()));
  });

  json analysis;
  stage("analyze", [&] {
    const auto& an = config.analysis;
    const auto picks = spread_indices(test.size(), an.samples);

    std::ostringstream cd_csv, asr_csv, nl_csv, band_csv;
    cd_csv << "t,mean_cd\n";
    asr_csv << "t,asr,asr_including_target\n";
    for (double t : an.homotopy_t) {
      std::vector<double> cds(picks.size());
      parallel_for(picks.size(), [&](std::size_t k) {
        const auto& x = test.entries[picks[k]].cloud;
        cds[k] = chamfer(homotopy(trigger, x, t, an.smoothing, picks[k]), x);
      });
      double mean = 0.0;
      for (double c : cds) mean += c;
      mean /= double(cds.size());
      cd_csv << fmt(t) << ',' << fmt(mean) << '\n';

      std::vector<PointCloud> smoothed(test.size());
      parallel_for(test.size(), [&](std::size_t i) {
        smoothed[i] = homotopy(trigger, test.entries[i].cloud, t, an.smoothing, i);
      });
      const auto pred = predict_all(*victim, smoothed);
      std::size_t hit = 0, hit_all = 0, other = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool h = pred[i] == config.poison.target;
        hit_all += h;
        if (test.entries[i].label != config.poison.target) {
          ++other;
          hit += h;
        }
      }
      asr_csv << fmt(t) << ',' << fmt(other ? double(hit) / double(other) : 0.0) << ','
              << fmt(double(hit_all) / double(pred.size())) << '\n';
    }

    nl_csv << "order,mean_cd\n";
    for (int order : an.orders) {
      SmoothingConfig sc = an.smoothing;
      sc.max_order = order;
      std::vector<double> cds(picks.size());
      parallel_for(picks.size(), [&](std::size_t k) {
        const auto& x = test.entries[picks[k]].cloud;
        cds[k] = chamfer(reproduce(x, sc), x);
      });
      double mean = 0.0;
      for (double c : cds) mean += c;
      nl_csv << order << ',' << fmt(mean / double(cds.size())) << '\n';
    }

    band_csv << "trigger,mode,UL,L,LM,HM,H,UH\n";
    json bands = json::object();
    for (const auto& name : an.gft_triggers) {
      const TriggerSpec t = analysis_trigger(name, trigger, config.seed);
      std::vector<BandProfile> profiles(picks.size());
      parallel_for(picks.size(), [&](std::size_t k) {
        profiles[k] = band_profile(residual_spectrum(test.entries[picks[k]].cloud, t, an.gft_k,
                                                     ResidualMode::Magnitude, picks[k]));
      });
      std::array<double, 6> mean{};
      for (const auto& p : profiles)
        for (std::size_t b = 0; b < 6; ++b) mean[b] += p[b] / double(profiles.size());
      band_csv << name << ",magnitude";
      for (double v : mean) band_csv << ',' << fmt(v);
      band_csv << '\n';
      bands[name] = mean;
    }
    write_text(dir / "cd_vs_t.csv", tagged_csv(config.seed, hash, cd_csv.str()));
    write_text(dir / "asr_vs_t.csv", tagged_csv(config.seed, hash, asr_csv.str()));
    write_text(dir / "error_vs_nl.csv", tagged_csv(config.seed, hash, nl_csv.str()));
    write_text(dir / "band_profiles.csv", tagged_csv(config.seed, hash, band_csv.str()));
    analysis = {{"band_profiles", bands}, {"residual_mode", "magnitude"}, {"samples", picks.size()}};
  });

  json rep = report.to_json();
  rep["seed"] = config.seed;
  rep["config_hash"] = hash;
  rep["defenses"] = defenses;
  rep["analysis"] = analysis;
  rep["poisoned_count"] = poisoned.poisoned.size();
  rep["collision_rule"] = config.analysis.smoothing.collision == CollisionRule::NearestSphere ? "nearest_sphere"
                                                                                               : "smallest_radius";
  write_text(dir / "report.json", rep.dump(2) + "\n");
  write_text(dir / "report.csv",
             tagged_csv(config.seed, hash, AttackReport::csv_header() + "\n" + report.csv_row() + "\n"));

  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    manifest.artifacts[rel] = file_hash(entry.path());
  }
  write_text(dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return result;
}

}  // namespace pcbd
