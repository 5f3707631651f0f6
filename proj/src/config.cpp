#include "vtc/config.hpp"

#include <fstream>
#include <sstream>

namespace vtc {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

TransferOptions transfer_options_from_json(const nlohmann::json& j, TransferOptions o) {
  o.source_configs = j.value("source_configs", o.source_configs);
  o.target_configs = j.value("target_configs", o.target_configs);
  o.heldout_configs = j.value("heldout_configs", o.heldout_configs);
  o.heldout_size = j.value("heldout_size", o.heldout_size);
  o.heldout_positives = j.value("heldout_positives", o.heldout_positives);
  o.k = j.value("k", o.k);
  o.epsilon = j.value("epsilon", o.epsilon);
  o.eval_interval = j.value("eval_interval", o.eval_interval);
  o.convergence_window = j.value("convergence_window", o.convergence_window);
  o.replay_prefill = j.value("replay_prefill", o.replay_prefill);
  if (j.contains("target_hanging")) {
    const std::string h = j["target_hanging"].get<std::string>();
    if (h == "corner") o.target_hanging = Hanging::corner;
    else if (h == "boundary") o.target_hanging = Hanging::boundary;
    else throw ContractError("transfer: unknown target_hanging '" + h + "'");
  }
  if (j.contains("patch")) {
    const auto& p = j["patch"];
    o.patch.radius = p.value("radius", o.patch.radius);
    o.patch.hidden = p.value("hidden", o.patch.hidden);
    o.patch.depth_scale = p.value("depth_scale", o.patch.depth_scale);
    o.patch.learning_rate = p.value("learning_rate", o.patch.learning_rate);
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    o.pretrain.epochs = p.value("epochs", o.pretrain.epochs);
    o.pretrain.patches_per_image = p.value("patches_per_image", o.pretrain.patches_per_image);
    o.pretrain.batch_size = p.value("batch_size", o.pretrain.batch_size);
    o.pretrain.aug_probability = p.value("aug_probability", o.pretrain.aug_probability);
    o.pretrain.val_fraction = p.value("val_fraction", o.pretrain.val_fraction);
  }
  if (j.contains("finetune")) {
    const auto& p = j["finetune"];
    o.finetune.neighborhood = p.value("neighborhood", o.finetune.neighborhood);
    o.finetune.batch_size = p.value("batch_size", o.finetune.batch_size);
    o.finetune.use_replay = p.value("use_replay", o.finetune.use_replay);
    o.finetune.learning_rate = p.value("learning_rate", o.finetune.learning_rate);
    o.finetune.final_lr_fraction = p.value("final_lr_fraction", o.finetune.final_lr_fraction);
  }
  o.patch.validate();
  return o;
}

nlohmann::json transfer_options_to_json(const TransferOptions& o) {
  return {{"source_configs", o.source_configs},
          {"target_configs", o.target_configs},
          {"heldout_configs", o.heldout_configs},
          {"heldout_size", o.heldout_size},
          {"heldout_positives", o.heldout_positives},
          {"k", o.k},
          {"epsilon", o.epsilon},
          {"eval_interval", o.eval_interval},
          {"convergence_window", o.convergence_window},
          {"replay_prefill", o.replay_prefill},
          {"target_hanging", o.target_hanging == Hanging::corner ? "corner" : "boundary"},
          {"patch",
           {{"radius", o.patch.radius},
            {"hidden", o.patch.hidden},
            {"depth_scale", o.patch.depth_scale},
            {"learning_rate", o.patch.learning_rate}}},
          {"pretrain",
           {{"epochs", o.pretrain.epochs},
            {"patches_per_image", o.pretrain.patches_per_image},
            {"batch_size", o.pretrain.batch_size},
            {"aug_probability", o.pretrain.aug_probability},
            {"val_fraction", o.pretrain.val_fraction}}},
          {"finetune",
           {{"neighborhood", o.finetune.neighborhood},
            {"batch_size", o.finetune.batch_size},
            {"use_replay", o.finetune.use_replay},
            {"learning_rate", o.finetune.learning_rate},
            {"final_lr_fraction", o.finetune.final_lr_fraction}}}};
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json q = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) q.push_back(lqr_q(i, i));
  return {{"env", env.to_json()},
          {"target_env", target_env.to_json()},
          {"tactile",
           {{"raw_per_category", tactile.raw_per_category},
            {"augment_per_raw", tactile.augment_per_raw},
            {"n_frames", tactile.n_frames}}},
          {"transfer", transfer_options_to_json(transfer)},
          {"plant", horizontal_plant.to_json()},
          {"rollout",
           {{"k_p", rollout.k_p}, {"noise_amp", rollout.noise_amp}, {"n_runs", rollout.n_runs}, {"steps", rollout.steps}}},
          {"lqr", {{"q", q}, {"r", lqr_r}}},
          {"pipeline", pipeline.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ContractError("config: top level must be an object");
  RunConfig c;
  try {
    if (doc.contains("env")) c.env = EnvParams::from_json(doc["env"]);
    c.target_env = doc.contains("target_env") ? EnvParams::from_json(doc["target_env"]) : default_target_env(c.env);
    if (doc.contains("tactile")) {
      const auto& t = doc["tactile"];
      c.tactile.raw_per_category = t.value("raw_per_category", c.tactile.raw_per_category);
      c.tactile.augment_per_raw = t.value("augment_per_raw", c.tactile.augment_per_raw);
      c.tactile.n_frames = t.value("n_frames", c.tactile.n_frames);
    }
    if (doc.contains("transfer")) c.transfer = transfer_options_from_json(doc["transfer"]);
    if (doc.contains("plant")) c.horizontal_plant = SlidingPlant::from_json(doc["plant"]);
    if (doc.contains("rollout")) {
      const auto& r = doc["rollout"];
      c.rollout.k_p = r.value("k_p", c.rollout.k_p);
      c.rollout.noise_amp = r.value("noise_amp", c.rollout.noise_amp);
      c.rollout.n_runs = r.value("n_runs", c.rollout.n_runs);
      c.rollout.steps = r.value("steps", c.rollout.steps);
    }
    if (doc.contains("lqr")) {
      const auto& l = doc["lqr"];
      if (l.contains("q")) {
        const auto q = l["q"].get<std::vector<double>>();
        if (q.size() != 3) throw ContractError("config: lqr.q needs three diagonal entries");
        c.lqr_q = Eigen::Vector3d(q[0], q[1], q[2]).asDiagonal();
      }
      c.lqr_r = l.value("r", c.lqr_r);
    }
    nlohmann::json pj = doc.value("pipeline", nlohmann::json::object());
    if (!pj.contains("env")) pj["env"] = c.target_env.to_json();
    c.pipeline = PipelineConfig::from_json(pj);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return from_json(nlohmann::json::object());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  return from_json(doc);
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace vtc
