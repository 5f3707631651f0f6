#include "vtc/vtc.h"

#include "vtc/config.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

struct vtc_classifier {
  vtc::GraspClassifier value;
};

struct vtc_affordance_model {
  vtc::PatchRegressor value;
};

struct vtc_dynamics {
  vtc::LinearDynamics value;
};

struct vtc_lqr {
  vtc::LQRGains value;
};

namespace {

thread_local std::string g_error;

template <typename F>
vtc_status guard(F&& f) {
  g_error.clear();
  try {
    f();
    return VTC_OK;
  } catch (const vtc::ContractError& e) {
    g_error = e.what();
    return VTC_ERR_CONTRACT;
  } catch (const vtc::IoError& e) {
    g_error = e.what();
    return VTC_ERR_IO;
  } catch (const nlohmann::json::exception& e) {
    g_error = e.what();
    return VTC_ERR_CONTRACT;
  } catch (const std::exception& e) {
    g_error = e.what();
    return VTC_ERR_INTERNAL;
  } catch (...) {
    g_error = "unknown failure";
    return VTC_ERR_INTERNAL;
  }
}

vtc::RunConfig config_of(const char* text) { return vtc::RunConfig::parse(text ? text : ""); }

void require(const void* p, const char* what) {
  if (!p) throw vtc::ContractError(std::string(what) + " must not be null");
}

void emit(char** out, const nlohmann::json& doc) {
  if (!out) return;
  const std::string s = doc.dump(1);
  char* buf = static_cast<char*>(std::malloc(s.size() + 1));
  if (!buf) throw std::bad_alloc();
  std::memcpy(buf, s.c_str(), s.size() + 1);
  *out = buf;
}

nlohmann::json curve_json(const std::vector<vtc::LearningCurvePoint>& curve) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : curve) a.push_back({{"grasps", p.grasps}, {"precision", p.precision}});
  return a;
}

vtc::EdgeKind edge_of(const char* edge) {
  const std::string e = edge ? edge : "thin";
  if (e == "thin") return vtc::EdgeKind::thin;
  if (e == "thick") return vtc::EdgeKind::thick;
  throw vtc::ContractError("unknown edge kind '" + e + "'");
}

}  // namespace

extern "C" {

const char* vtc_last_error(void) { return g_error.c_str(); }

const char* vtc_version(void) { return "0.1.0"; }

void vtc_string_free(char* s) { std::free(s); }

vtc_status vtc_generate_affordance_dataset(const char* config, int n_seeds, uint64_t seed, const char* out_dir,
                                           char** report) {
  return guard([&] {
    require(out_dir, "out_dir");
    const vtc::RunConfig cfg = config_of(config);
    const vtc::DatasetManifest m = vtc::generate_dataset(cfg.env, n_seeds, cfg.env.configuration.rotation_increment_deg,
                                                         seed, out_dir);
    emit(report, {{"pairs", m.entries.size()},
                  {"n_seeds", m.n_seeds},
                  {"rotation_increment_deg", m.rotation_increment_deg},
                  {"manifest", (std::filesystem::path(out_dir) / "manifest.json").string()}});
  });
}

vtc_status vtc_generate_tactile_dataset(const char* config, uint64_t seed, const char* out_dir, char** report) {
  return guard([&] {
    require(out_dir, "out_dir");
    const vtc::RunConfig cfg = config_of(config);
    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir / "samples", ec);
    if (ec) throw vtc::IoError("cannot create " + (dir / "samples").string() + ": " + ec.message());
    const vtc::LabeledFeatures data = vtc::make_grasp_features(cfg.tactile, seed);
    vtc::write_features_csv(dir / "features.csv", data);
    vtc::Rng rng(vtc::derive_seed(seed, 0x7AC7u));
    nlohmann::json samples = nlohmann::json::array();
    for (int k = 0; k < vtc::kGraspCategories; ++k) {
      const auto cat = static_cast<vtc::GraspCategory>(k);
      const vtc::GraspScenario scn = vtc::sample_scenario(cat, rng);
      const auto frames = vtc::synth_sequence(scn, cfg.tactile.n_frames);
      for (std::size_t f = 0; f < frames.size(); ++f) {
        const std::string name = std::string(vtc::to_string(cat)) + "_" + std::to_string(f) + ".pgm";
        vtc::write_tactile_frame(dir / "samples" / name, frames[f]);
      }
      samples.push_back({{"scenario", vtc::scenario_to_json(scn)},
                         {"pose", vtc::pose_to_json(vtc::scenario_pose(scn))},
                         {"frames", frames.size()}});
    }
    emit(report, {{"samples", data.x.size()}, {"features", vtc::kFeatureCount}, {"sequences", samples}});
  });
}

vtc_status vtc_classifier_train(const char* config, const char* features_csv, uint64_t seed, vtc_classifier** out,
                                char** report) {
  return guard([&] {
    require(out, "out");
    const vtc::RunConfig cfg = config_of(config);
    const vtc::LabeledFeatures data =
        features_csv && *features_csv ? vtc::read_features_csv(features_csv) : vtc::make_grasp_features(cfg.tactile, seed);
    auto* h = new vtc_classifier{vtc::GraspClassifier::train(data.x, data.y)};
    const vtc::ClassifierReport r = vtc::evaluate_classifier(h->value, data);
    *out = h;
    emit(report, {{"samples", data.x.size()},
                  {"final_loss", h->value.final_loss()},
                  {"train_accuracy", r.accuracy},
                  {"confusion", r.confusion}});
  });
}

vtc_status vtc_classifier_load(const char* path, vtc_classifier** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new vtc_classifier{vtc::GraspClassifier::load(path)};
  });
}

vtc_status vtc_classifier_save(const vtc_classifier* clf, const char* path) {
  return guard([&] {
    require(clf, "classifier");
    require(path, "path");
    clf->value.save(path);
  });
}

void vtc_classifier_free(vtc_classifier* clf) { delete clf; }

vtc_status vtc_affordance_pretrain(const char* config, const char* manifest_path, int epochs, uint64_t seed,
                                   vtc_affordance_model** out, char** report) {
  return guard([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    const vtc::RunConfig cfg = config_of(config);
    const vtc::DatasetManifest m = vtc::DatasetManifest::load(manifest_path);
    const auto images = vtc::load_training_images(m);
    auto* h = new vtc_affordance_model{vtc::PatchRegressor(cfg.transfer.patch, vtc::derive_seed(seed, 0x5001u))};
    vtc::PretrainOptions po = cfg.transfer.pretrain;
    if (epochs > 0) po.epochs = epochs;
    po.seed = vtc::derive_seed(seed, 0x5003u);
    vtc::PretrainReport r;
    try {
      r = vtc::pretrain(h->value, images, po);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
    emit(report, {{"images", images.size()},
                  {"epochs", po.epochs},
                  {"final_loss", r.final_loss},
                  {"initial_val_mse", r.initial_val_mse},
                  {"val_mse", r.val_mse},
                  {"epoch_loss", r.epoch_loss}});
  });
}

vtc_status vtc_affordance_load(const char* path, vtc_affordance_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new vtc_affordance_model{vtc::PatchRegressor::load(path)};
  });
}

vtc_status vtc_affordance_save(const vtc_affordance_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    model->value.save(path);
  });
}

void vtc_affordance_free(vtc_affordance_model* model) { delete model; }

vtc_status vtc_affordance_finetune(vtc_affordance_model* model, const char* config, int grasp_budget, int use_replay,
                                   uint64_t seed, const char* curve_csv, char** report) {
  return guard([&] {
    require(model, "model");
    const vtc::RunConfig cfg = config_of(config);
    vtc::TransferOptions opts = cfg.transfer;
    opts.finetune.use_replay = use_replay != 0;
    std::vector<vtc::ReplaySample> prefill;
    if (opts.finetune.use_replay && opts.replay_prefill > 0) {
      const auto images = vtc::to_training_images(
          vtc::make_scenes(cfg.env, opts.source_configs, vtc::derive_seed(seed, 0x5002u)));
      prefill = vtc::source_replay_samples(images, opts.replay_prefill, opts.patch, vtc::derive_seed(seed, 0x5006u));
    }
    const vtc::TargetWorld world = vtc::make_target_world(cfg.target_env, opts, seed);
    const vtc::OnlineResult r =
        vtc::online_finetune(model->value, world, grasp_budget, vtc::derive_seed(seed, 0x5004u), opts, -1.0, prefill);
    if (curve_csv && *curve_csv) vtc::write_curve_csv(curve_csv, r.curve);
    emit(report, {{"grasp_budget", grasp_budget},
                  {"use_replay", opts.finetune.use_replay},
                  {"grasps", r.grasps},
                  {"positives", r.positives},
                  {"precision_at_k", r.curve.empty() ? 0.0 : r.curve.back().precision},
                  {"curve", curve_json(r.curve)}});
  });
}

vtc_status vtc_affordance_precision_at_k(const vtc_affordance_model* model, const char* config, int k, uint64_t seed,
                                         double* precision) {
  return guard([&] {
    require(model, "model");
    require(precision, "precision");
    const vtc::RunConfig cfg = config_of(config);
    vtc::TransferOptions opts = cfg.transfer;
    if (k > 0) opts.k = k;
    const vtc::TargetWorld world = vtc::make_target_world(cfg.target_env, opts, seed);
    *precision = vtc::precision_at_k(model->value, world.heldout, opts.k);
  });
}

vtc_status vtc_transfer_experiment(const char* config, int grasp_budget, uint64_t seed, const char* out_dir,
                                   char** report) {
  return guard([&] {
    const vtc::RunConfig cfg = config_of(config);
    vtc::TransferModels models;
    const vtc::TransferReport r =
        vtc::run_transfer_experiment(cfg.env, cfg.target_env, grasp_budget, seed, cfg.transfer, &models);
    if (out_dir && *out_dir) {
      const std::filesystem::path dir(out_dir);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw vtc::IoError("cannot create " + dir.string() + ": " + ec.message());
      models.source_only.save(dir / "source_only.json");
      models.target_scratch.save(dir / "target_scratch.json");
      models.source_finetuned.save(dir / "source_finetuned.json");
      vtc::write_curve_csv(dir / "finetune_curve.csv", r.finetune_curve);
      vtc::write_curve_csv(dir / "scratch_curve.csv", r.scratch_curve);
    }
    emit(report, r.to_json());
  });
}

vtc_status vtc_replay_experiment(const char* config, int grasp_budget, double target_precision, uint64_t seed,
                                 char** report) {
  return guard([&] {
    const vtc::RunConfig cfg = config_of(config);
    emit(report, vtc::run_replay_experiment(cfg.env, cfg.target_env, grasp_budget, target_precision, seed,
                                            cfg.transfer)
                     .to_json());
  });
}

vtc_status vtc_fit_dynamics(const char* config, uint64_t seed, vtc_dynamics** out, char** report) {
  return guard([&] {
    require(out, "out");
    const vtc::RunConfig cfg = config_of(config);
    const vtc::RolloutData data = vtc::collect_rollouts(cfg.horizontal_plant, cfg.rollout, seed);
    auto* h = new vtc_dynamics{vtc::fit_linear_dynamics(data, cfg.horizontal_plant.dt)};
    *out = h;
    emit(report, h->value.to_json());
  });
}

vtc_status vtc_dynamics_load(const char* path, vtc_dynamics** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new vtc_dynamics{vtc::LinearDynamics::from_json(vtc::read_json_file(path))};
  });
}

vtc_status vtc_dynamics_save(const vtc_dynamics* dyn, const char* path) {
  return guard([&] {
    require(dyn, "dynamics");
    require(path, "path");
    vtc::write_json_file(path, dyn->value.to_json());
  });
}

void vtc_dynamics_free(vtc_dynamics* dyn) { delete dyn; }

vtc_status vtc_lqr_make(const vtc_dynamics* dyn, const char* config, vtc_lqr** out, char** report) {
  return guard([&] {
    require(dyn, "dynamics");
    require(out, "out");
    const vtc::RunConfig cfg = config_of(config);
    auto* h = new vtc_lqr{vtc::lqr_gain(dyn->value, cfg.lqr_q, cfg.lqr_r)};
    *out = h;
    nlohmann::json doc = h->value.to_json();
    doc["closed_loop_radius"] = h->value.closed_loop_radius();
    emit(report, doc);
  });
}

vtc_status vtc_lqr_load(const char* path, vtc_lqr** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new vtc_lqr{vtc::LQRGains::from_json(vtc::read_json_file(path))};
  });
}

vtc_status vtc_lqr_save(const vtc_lqr* lqr, const char* path) {
  return guard([&] {
    require(lqr, "lqr");
    require(path, "path");
    vtc::write_json_file(path, lqr->value.to_json());
  });
}

void vtc_lqr_free(vtc_lqr* lqr) { delete lqr; }

vtc_status vtc_lqr_gain(const vtc_lqr* lqr, double k[3]) {
  return guard([&] {
    require(lqr, "lqr");
    require(k, "k");
    for (int i = 0; i < 3; ++i) k[i] = lqr->value.K(i);
  });
}

vtc_status vtc_slide(const char* config, const char* mode, const char* controller, const char* edge,
                     const vtc_lqr* lqr, double init_coverage, uint64_t seed, const char* log_csv, char** report) {
  return guard([&] {
    require(mode, "mode");
    const vtc::RunConfig cfg = config_of(config);
    const std::string m = mode;
    vtc::EpisodeLog log;
    if (m == "horizontal") {
      const std::string c = controller ? controller : "lqr";
      if (c == "lqr") {
        require(lqr, "lqr");
        vtc::LqrController ctrl(lqr->value.K);
        log = vtc::horizontal_slide(cfg.horizontal_plant, ctrl, init_coverage, seed);
      } else if (c == "proportional") {
        vtc::ProportionalController ctrl(cfg.rollout.k_p);
        log = vtc::horizontal_slide(cfg.horizontal_plant, ctrl, init_coverage, seed);
      } else if (c == "zero") {
        vtc::ZeroController ctrl;
        log = vtc::horizontal_slide(cfg.horizontal_plant, ctrl, init_coverage, seed);
      } else {
        throw vtc::ContractError("unknown controller '" + c + "'");
      }
    } else if (m == "vertical") {
      const vtc::SlidingPlant plant = vtc::SlidingPlant::vertical(edge_of(edge));
      log = vtc::vertical_slide(plant, cfg.pipeline.k_p, vtc::corner_shear_threshold(plant), init_coverage, seed);
    } else {
      throw vtc::ContractError("unknown slide mode '" + m + "'");
    }
    if (log_csv && *log_csv) log.write_csv(log_csv);
    emit(report, log.summary_json());
  });
}

vtc_status vtc_run_episode(const char* config, const vtc_classifier* clf, const vtc_affordance_model* model,
                           uint64_t seed, char** report) {
  return guard([&] {
    require(clf, "classifier");
    const vtc::RunConfig cfg = config_of(config);
    vtc::PipelineModels models;
    models.classifier = &clf->value;
    models.affordance = model ? &model->value : nullptr;
    emit(report, vtc::run_episode(cfg.pipeline, models, seed).to_json());
  });
}

}  // extern "C"
