// pcbd: command-line front end for the backdoor laboratory.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "pcbd/attack.hpp"
#include "pcbd/checkpoint.hpp"
#include "pcbd/config.hpp"
#include "pcbd/defenses.hpp"
#include "pcbd/error.hpp"
#include "pcbd/parallel.hpp"
#include "pcbd/pipeline.hpp"
#include "pcbd/spectral.hpp"

namespace fs = std::filesystem;
using namespace pcbd;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct TriggerOpts {
  std::string kind = "iba";
  std::string ae;
  std::optional<double> t;
  int nl = 100;
  std::vector<double> center{-0.9, -0.9, -0.9};
  double radius = 0.1;
  double fraction = 0.02;
  std::vector<double> angles{0.0, 0.0, 10.0};
  double sigma = 0.02;
  std::uint64_t seed = 0;
};

void add_trigger_options(CLI::App* cmd, TriggerOpts& o, bool with_t = true) {
  cmd->add_option("--trigger", o.kind, "iba | ball_cluster | rotation | jitter")
      ->check(CLI::IsMember({"iba", "ball_cluster", "rotation", "jitter"}));
  cmd->add_option("--ae", o.ae, "Autoencoder checkpoint (iba)");
  if (with_t) cmd->add_option("--t", o.t, "Smoothing parameter in [0, 1] (iba)")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--nl", o.nl, "Harmonic order for smoothing");
  cmd->add_option("--center", o.center, "Ball centre (ball_cluster)")->expected(3);
  cmd->add_option("--radius", o.radius, "Ball radius (ball_cluster)");
  cmd->add_option("--fraction", o.fraction, "Replaced fraction (ball_cluster)");
  cmd->add_option("--angles", o.angles, "Euler angles in degrees (rotation)")->expected(3);
  cmd->add_option("--sigma", o.sigma, "Noise level (jitter)");
  cmd->add_option("--trigger-seed", o.seed, "Trigger seed");
}

std::shared_ptr<const AEModel> load_ae(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::ConfigError, "--ae: required for the iba trigger");
  return std::make_shared<const AEModel>(AEModel::from_checkpoint(read_checkpoint(path)));
}

TriggerSpec build_trigger(const TriggerOpts& o) {
  json j{{"kind", o.kind}, {"seed", o.seed}};
  std::shared_ptr<const AEModel> model;
  if (o.kind == "iba") {
    model = load_ae(o.ae);
    if (o.t) {
      j["t"] = *o.t;
      j["max_order"] = o.nl;
    }
  } else if (o.kind == "ball_cluster") {
    j["center"] = o.center;
    j["radius"] = o.radius;
    j["fraction"] = o.fraction;
  } else if (o.kind == "rotation") {
    j["degrees"] = o.angles;
  } else {
    j["sigma"] = o.sigma;
  }
  TriggerSpec spec = TriggerSpec::from_json(j, model);
  spec.validate();
  return spec;
}

VictimModel load_victim(const std::string& path) { return VictimModel::from_checkpoint(read_checkpoint(path)); }

void note(const std::string& s) { std::cerr << s << '\n'; }

std::string csv_values(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os.precision(17);
  os << "index,value\n";
  for (Index i = 0; i < v.size(); ++i) os << i << ',' << v(i) << '\n';
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Point-cloud backdoor laboratory"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic train/test sets");
  std::string gen_out;
  std::uint64_t gen_seed = 7;
  DatasetConfig gen_cfg;
  std::vector<std::string> gen_classes;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--classes", gen_classes, "Shape families");
  gen->add_option("--train-per-class", gen_cfg.train_per_class, "Training clouds per class");
  gen->add_option("--test-per-class", gen_cfg.test_per_class, "Test clouds per class");
  gen->add_option("--points", gen_cfg.points, "Points per cloud");

  // train-ae
  auto* tae = app.add_subcommand("train-ae", "Train the folding autoencoder");
  std::string tae_data, tae_out, tae_profile = "toy";
  std::uint64_t tae_seed = 7;
  std::optional<int> tae_epochs;
  tae->add_option("--data", tae_data, "Training dataset directory")->required();
  tae->add_option("--out", tae_out, "Checkpoint path")->required();
  tae->add_option("--profile", tae_profile, "toy | full")->check(CLI::IsMember({"toy", "full"}));
  tae->add_option("--epochs", tae_epochs, "Training epochs");
  tae->add_option("--seed", tae_seed, "Seed");

  // poison
  auto* poi = app.add_subcommand("poison", "Poison a training set");
  std::string poi_data, poi_out;
  PoisonPlan poi_plan;
  TriggerOpts poi_trig;
  poi->add_option("--data", poi_data, "Training dataset directory")->required();
  poi->add_option("--out", poi_out, "Output dataset directory")->required();
  poi->add_option("--rate", poi_plan.rate, "Poisoning rate");
  poi->add_option("--target", poi_plan.target, "Target label");
  poi->add_option("--seed", poi_plan.seed, "Seed");
  add_trigger_options(poi, poi_trig);

  // train-victim
  auto* tv = app.add_subcommand("train-victim", "Train a victim classifier");
  std::string tv_data, tv_out, tv_arch = "pointnet_lite";
  std::uint64_t tv_seed = 7;
  std::optional<int> tv_epochs;
  std::vector<std::string> tv_augment;
  tv->add_option("--data", tv_data, "Training dataset directory")->required();
  tv->add_option("--out", tv_out, "Checkpoint path")->required();
  tv->add_option("--arch", tv_arch, "pointnet_lite | edgeconv_lite")
      ->check(CLI::IsMember({"pointnet_lite", "edgeconv_lite"}));
  tv->add_option("--epochs", tv_epochs, "Training epochs");
  tv->add_option("--augment", tv_augment, "Online augmentations (R, R3, scaling, translation, dropout, jitter, SOR)");
  tv->add_option("--seed", tv_seed, "Seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate ACC, ASR and imperceptibility");
  std::string ev_victim, ev_data, ev_report;
  int ev_target = 0;
  bool ev_include = false;
  TriggerOpts ev_trig;
  ev->add_option("--victim", ev_victim, "Victim checkpoint")->required();
  ev->add_option("--data", ev_data, "Test dataset directory")->required();
  ev->add_option("--target", ev_target, "Target label");
  ev->add_flag("--include-target", ev_include, "Report the ASR over every test entry");
  ev->add_option("--report", ev_report, "Write the report JSON here");
  add_trigger_options(ev, ev_trig);

  // defend
  auto* df = app.add_subcommand("defend", "Apply a defence or run a detector");
  std::string df_data, df_out, df_victim, df_cloud, df_augment;
  bool df_sor = false, df_counterfactual = false, df_logit = false;
  std::optional<int> df_lpf, df_saliency_label, df_cam_class;
  double df_alpha = 1.0, df_fraction = 0.02;
  std::uint64_t df_seed = 7;
  SorParams df_sor_params;
  df->add_option("--data", df_data, "Dataset directory to filter");
  df->add_option("--cloud", df_cloud, "Single .xyz cloud (saliency, cam)");
  df->add_option("--out", df_out, "Output directory or CSV path")->required();
  df->add_option("--victim", df_victim, "Victim checkpoint");
  df->add_flag("--sor", df_sor, "Statistical outlier removal");
  df->add_option("--sor-radius", df_sor_params.radius, "SOR radius");
  df->add_option("--sor-neighbors", df_sor_params.neighbors_at_1024, "SOR neighbour threshold at n = 1024");
  df->add_option("--lpf", df_lpf, "Spherical-harmonic low-pass cut-off");
  df->add_option("--augment", df_augment, "Augmentation variant");
  df->add_option("--saliency", df_saliency_label, "Saliency for this label");
  df->add_option("--alpha", df_alpha, "Saliency scaling");
  df->add_option("--top-fraction", df_fraction, "Saliency top fraction");
  df->add_option("--cam", df_cam_class, "Grad-CAM for this class");
  df->add_flag("--counterfactual", df_counterfactual, "Negated-gradient Grad-CAM");
  df->add_flag("--logit", df_logit, "Grad-CAM on the logit instead of the probability");
  df->add_option("--seed", df_seed, "Seed");

  // analyze
  auto* an = app.add_subcommand("analyze", "Graph-Fourier band profile of a trigger");
  std::string an_data, an_out;
  int an_samples = 20;
  Index an_k = 10;
  bool an_raw = false;
  TriggerOpts an_trig;
  an->add_option("--data", an_data, "Dataset directory")->required();
  an->add_option("--out", an_out, "Band profile CSV")->required();
  an->add_option("--samples", an_samples, "Clouds to average");
  an->add_option("--k", an_k, "Neighbours in the graph");
  an->add_flag("--raw", an_raw, "Subtract sign-fixed spectra instead of magnitudes");
  add_trigger_options(an, an_trig);

  // smooth
  auto* sm = app.add_subcommand("smooth", "Homotopy between a cloud and its triggered version");
  std::string sm_cloud, sm_out, sm_spectrum;
  double sm_t = 0.5;
  TriggerOpts sm_trig;
  sm->add_option("--cloud", sm_cloud, "Input .xyz")->required();
  sm->add_option("--out", sm_out, "Output .xyz")->required();
  sm->add_option("--t", sm_t, "Homotopy parameter")->check(CLI::Range(0.0, 1.0));
  sm->add_option("--spectrum", sm_spectrum, "Write the input's spectrum as CSV");
  add_trigger_options(sm, sm_trig, false);

  // full-run
  auto* fr = app.add_subcommand("full-run", "Run the whole pipeline from a config");
  std::string fr_config, fr_out;
  bool fr_overwrite = false;
  fr->add_option("--config", fr_config, "Experiment config (JSON)")->required();
  fr->add_option("--out", fr_out, "Override output_dir");
  fr->add_flag("--overwrite", fr_overwrite, "Write into output_dir instead of a fresh subdirectory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      if (!gen_classes.empty()) {
        gen_cfg.classes.clear();
        for (const auto& c : gen_classes) {
          auto f = shape_family_from_string(c);
          if (!f) throw Error(ErrorKind::ConfigError, "--classes: unknown shape family '" + c + "'");
          gen_cfg.classes.push_back(*f);
        }
      }
      auto [train, test] = generate_data(gen_cfg, gen_seed);
      json meta{{"seed", gen_seed}};
      save_dataset(train, fs::path(gen_out) / "train", meta);
      save_dataset(test, fs::path(gen_out) / "test", meta);
      note("wrote " + std::to_string(train.size()) + " train and " + std::to_string(test.size()) + " test clouds");
    } else if (*tae) {
      AEConfig cfg = tae_profile == "full" ? AEConfig::full_scale() : AEConfig::toy();
      if (tae_epochs) cfg.epochs = *tae_epochs;
      const auto data = load_dataset(tae_data);
      SeededRng rng = SeededRng(tae_seed).derive(20);
      auto model = train_ae(data, cfg, rng, [&](int epoch, double loss) {
        if (epoch % 10 == 0) note("epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
      });
      write_checkpoint(model.to_checkpoint(tae_seed), tae_out);
    } else if (*poi) {
      const auto data = load_dataset(poi_data);
      poi_plan.trigger = build_trigger(poi_trig);
      const auto res = poison_dataset(data, poi_plan);
      json meta{{"seed", poi_plan.seed}, {"trigger", poi_plan.trigger.to_json()}, {"rate", poi_plan.rate},
                {"target", poi_plan.target}};
      save_dataset(res.data, poi_out, meta);
      write_text(fs::path(poi_out) / "poisoned_indices.json", json(res.poisoned).dump() + "\n");
      note("poisoned " + std::to_string(res.poisoned.size()) + " entries");
    } else if (*tv) {
      const auto data = load_dataset(tv_data);
      VictimSpec spec;
      spec.arch = architecture_from_string(tv_arch);
      spec.num_classes = data.num_classes;
      if (tv_epochs) spec.epochs = *tv_epochs;
      std::vector<AugmentationSpec> augs;
      for (const auto& a : tv_augment) augs.push_back(AugmentationSpec::from_json(json(a)));
      SeededRng rng = SeededRng(tv_seed).derive(30);
      auto model = train_victim(data, spec, rng, augs, [&](int epoch, const EpochRecord& r) {
        if (epoch % 10 == 0)
          note("epoch " + std::to_string(epoch) + " loss " + std::to_string(r.loss) + " acc " +
              std::to_string(r.accuracy));
      });
      write_checkpoint(model.to_checkpoint(tv_seed), tv_out);
    } else if (*ev) {
      const auto model = load_victim(ev_victim);
      const auto data = load_dataset(ev_data);
      const auto trig = build_trigger(ev_trig);
      AttackReport r;
      r.victim = to_string(model.spec().arch);
      r.trigger = trig.name();
      r.acc = eval_acc(model, data);
      const auto asr = eval_asr(model, data, trig, ev_target);
      r.asr = ev_include ? asr.including_target : asr.excluding_target;
      r.asr_including_target = asr.including_target;
      r.imperceptibility = eval_imperceptibility(data, trig);
      r.config = {{"trigger", trig.to_json()}, {"target", ev_target}, {"include_target", ev_include}};
      const std::string text = r.to_json().dump(2) + "\n";
      if (!ev_report.empty()) write_text(ev_report, text);
      std::cout << text;
    } else if (*df) {
      if (df_saliency_label || df_cam_class) {
        if (df_victim.empty() || df_cloud.empty())
          throw Error(ErrorKind::ConfigError, "--saliency/--cam need --victim and --cloud");
        const auto model = load_victim(df_victim);
        const auto cloud = load_xyz(df_cloud);
        if (df_saliency_label) {
          const auto s = saliency(model, cloud, *df_saliency_label, df_alpha, df_fraction);
          write_text(df_out, csv_values(s.significance));
        } else {
          const auto c = grad_cam(model, cloud, *df_cam_class, df_counterfactual,
                                  df_logit ? CamScore::Logit : CamScore::Probability);
          write_text(df_out, csv_values(c.activation));
        }
      } else {
        if (df_data.empty()) throw Error(ErrorKind::ConfigError, "--data: required");
        const int chosen = int(df_sor) + int(df_lpf.has_value()) + int(!df_augment.empty());
        if (chosen != 1) throw Error(ErrorKind::ConfigError, "choose exactly one of --sor, --lpf, --augment");
        auto data = load_dataset(df_data);
        json meta{{"seed", df_seed}};
        std::vector<PointCloud> out(data.size());
        if (df_sor) {
          meta["defense"] = {{"kind", "SOR"}, {"radius", df_sor_params.radius},
                             {"threshold", df_sor_params.threshold(data.cloud_size())}};
          parallel_for(data.size(), [&](std::size_t i) { out[i] = sor(data.entries[i].cloud, df_sor_params); });
        } else if (df_lpf) {
          meta["defense"] = {{"kind", "LPF"}, {"l_cut", *df_lpf}};
          parallel_for(data.size(), [&](std::size_t i) { out[i] = lpf_defense(data.entries[i].cloud, *df_lpf); });
        } else {
          AugmentationSpec spec = AugmentationSpec::from_json(json(df_augment));
          spec.seed = df_seed;
          meta["defense"] = spec.to_json();
          parallel_for(data.size(), [&](std::size_t i) {
            SeededRng rng(df_seed, i);
            out[i] = augment(data.entries[i].cloud, spec, rng);
          });
        }
        for (std::size_t i = 0; i < out.size(); ++i) data.entries[i].cloud = out[i];
        if (!df_victim.empty()) {
          const auto model = load_victim(df_victim);
          const double acc = eval_acc(model, data);
          meta["acc"] = acc;
          note("acc after defence " + std::to_string(acc));
        }
        // SOR output may be ragged; the manifest records sizes per file.
        save_dataset(data, df_out, meta);
      }
    } else if (*an) {
      const auto data = load_dataset(an_data);
      const auto trig = build_trigger(an_trig);
      const auto k = std::min<std::size_t>(data.size(), std::size_t(an_samples));
      std::vector<BandProfile> prof(k);
      parallel_for(k, [&](std::size_t i) {
        const std::size_t idx = i * data.size() / k;
        prof[i] = band_profile(residual_spectrum(data.entries[idx].cloud, trig, an_k,
                                                 an_raw ? ResidualMode::Raw : ResidualMode::Magnitude, idx));
      });
      std::ostringstream os;
      os.precision(17);
      os << "band,fraction\n";
      for (std::size_t b = 0; b < 6; ++b) {
        double m = 0.0;
        for (const auto& p : prof) m += p[b] / double(prof.size());
        os << kBandNames[b] << ',' << m << '\n';
      }
      write_text(an_out, tagged_csv(an_trig.seed, "none", os.str()));
    } else if (*sm) {
      const auto x = load_xyz(sm_cloud);
      TriggerOpts o = sm_trig;
      o.t.reset();
      const auto trig = build_trigger(o);
      SmoothingConfig cfg;
      cfg.max_order = sm_trig.nl;
      cfg.seed = sm_trig.seed;
      save_xyz(homotopy(trig, x, sm_t, cfg), sm_out);
      if (!sm_spectrum.empty()) {
        const auto field = to_spherical_field(x, cfg.grid, cfg.collision);
        write_text(sm_spectrum, fit_spectrum(field, cfg.max_order).to_csv());
      }
    } else if (*fr) {
      auto cfg = ExperimentConfig::load(fr_config);
      if (!fr_out.empty()) cfg.output_dir = fr_out;
      const fs::path dir = run_directory(cfg.output_dir, fr_overwrite);
      note("writing to " + dir.string());
      const auto result = full_run(cfg, dir, note);
      std::cout << result.report.to_json().dump(2) << '\n';
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::ConfigError ? kExitConfig : kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
