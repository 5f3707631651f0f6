#include "vtc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

namespace vtc {

const char* to_string(StateId s) {
  switch (s) {
    case StateId::pick_from_ground: return "PickFromGround";
    case StateId::corner_grasp: return "CornerGrasp";
    case StateId::edge_grasp_search: return "EdgeGraspSearch";
    case StateId::rotate: return "Rotate";
    case StateId::slide: return "Slide";
    case StateId::two_corners: return "TwoCorners";
    case StateId::restart: return "Restart";
    case StateId::timeout: return "Timeout";
  }
  return "?";
}

const char* to_string(Condition c) {
  switch (c) {
    case Condition::picked: return "picked";
    case Condition::pick_failed: return "pick_failed";
    case Condition::corner_confirmed: return "corner_confirmed";
    case Condition::corner_rejected: return "corner_rejected";
    case Condition::corner_attempts_exhausted: return "corner_attempts_exhausted";
    case Condition::towel_on_ground: return "towel_on_ground";
    case Condition::edge_confirmed: return "edge_confirmed";
    case Condition::edge_rejected: return "edge_rejected";
    case Condition::edge_attempts_exhausted: return "edge_attempts_exhausted";
    case Condition::no_candidate: return "no_candidate";
    case Condition::rotated: return "rotated";
    case Condition::full_rotation: return "full_rotation";
    case Condition::corner_reached: return "corner_reached";
    case Condition::dropped: return "dropped";
    case Condition::restarted: return "restarted";
  }
  return "?";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::pick: return "pick";
    case Action::grasp_lowest: return "grasp_lowest";
    case Action::grasp_edge: return "grasp_edge";
    case Action::rotate: return "rotate";
    case Action::slide: return "slide";
    case Action::release: return "release";
  }
  return "?";
}

const std::vector<Transition>& transition_table() {
  using S = StateId;
  using C = Condition;
  static const std::vector<Transition> table = {
      {S::pick_from_ground, C::picked, S::corner_grasp, false},
      {S::pick_from_ground, C::pick_failed, S::restart, false},
      {S::corner_grasp, C::corner_confirmed, S::edge_grasp_search, false},
      {S::corner_grasp, C::corner_rejected, S::corner_grasp, true},
      {S::corner_grasp, C::corner_attempts_exhausted, S::restart, false},
      {S::corner_grasp, C::towel_on_ground, S::restart, false},
      {S::edge_grasp_search, C::edge_confirmed, S::slide, false},
      {S::edge_grasp_search, C::edge_rejected, S::edge_grasp_search, true},
      {S::edge_grasp_search, C::edge_attempts_exhausted, S::rotate, false},
      {S::edge_grasp_search, C::no_candidate, S::rotate, false},
      {S::rotate, C::rotated, S::edge_grasp_search, true},
      {S::rotate, C::full_rotation, S::restart, false},
      {S::slide, C::corner_reached, S::two_corners, false},
      {S::slide, C::dropped, S::restart, false},
      {S::restart, C::restarted, S::pick_from_ground, true},
  };
  return table;
}

StateId next_state(StateId from, Condition c) {
  for (const Transition& t : transition_table()) {
    if (t.from == from && t.condition == c) return t.to;
  }
  throw ContractError(std::string("no transition from ") + to_string(from) + " on " + to_string(c));
}

void FailureInjection::validate() const {
  for (double p : {visual_fp, visual_fn, tactile_fp, tactile_fn, grasp_miss}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("FailureInjection: rates must lie in [0, 1]");
  }
}

void PipelineConfig::validate() const {
  inject.validate();
  env.cloth.validate();
  env.label.validate();
  if (!(threshold >= 0.0)) throw ContractError("PipelineConfig: threshold must be nonnegative");
  if (attempts_per_rotation < 1 || max_corner_attempts < 1) {
    throw ContractError("PipelineConfig: attempt limits must be positive");
  }
  if (max_restarts < 0) throw ContractError("PipelineConfig: max_restarts must be nonnegative");
  if (step_cap < 1) throw ContractError("PipelineConfig: step_cap must be positive");
  if (!(reject_radius_m >= 0.0)) throw ContractError("PipelineConfig: reject_radius_m must be nonnegative");
  if (!(k_p >= 0.0)) throw ContractError("PipelineConfig: k_p must be nonnegative");
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"env", env.to_json()},
          {"threshold", threshold},
          {"attempts_per_rotation", attempts_per_rotation},
          {"max_corner_attempts", max_corner_attempts},
          {"max_restarts", max_restarts},
          {"step_cap", step_cap},
          {"reject_radius_m", reject_radius_m},
          {"edge", to_string(edge)},
          {"k_p", k_p},
          {"inject",
           {{"visual_fp", inject.visual_fp},
            {"visual_fn", inject.visual_fn},
            {"tactile_fp", inject.tactile_fp},
            {"tactile_fn", inject.tactile_fn},
            {"grasp_miss", inject.grasp_miss}}}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& doc) {
  PipelineConfig c;
  try {
    if (doc.contains("env")) c.env = EnvParams::from_json(doc["env"]);
    c.threshold = doc.value("threshold", c.threshold);
    c.attempts_per_rotation = doc.value("attempts_per_rotation", c.attempts_per_rotation);
    c.max_corner_attempts = doc.value("max_corner_attempts", c.max_corner_attempts);
    c.max_restarts = doc.value("max_restarts", c.max_restarts);
    c.step_cap = doc.value("step_cap", c.step_cap);
    c.reject_radius_m = doc.value("reject_radius_m", c.reject_radius_m);
    if (doc.contains("edge")) {
      const std::string e = doc["edge"].get<std::string>();
      if (e == "thin") c.edge = EdgeKind::thin;
      else if (e == "thick") c.edge = EdgeKind::thick;
      else throw ContractError("PipelineConfig: unknown edge kind '" + e + "'");
    }
    c.k_p = doc.value("k_p", c.k_p);
    if (doc.contains("inject")) {
      const auto& j = doc["inject"];
      c.inject.visual_fp = j.value("visual_fp", 0.0);
      c.inject.visual_fn = j.value("visual_fn", 0.0);
      c.inject.tactile_fp = j.value("tactile_fp", 0.0);
      c.inject.tactile_fn = j.value("tactile_fn", 0.0);
      c.inject.grasp_miss = j.value("grasp_miss", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("PipelineConfig: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineWorld::PipelineWorld(const PipelineConfig& cfg, const PipelineModels& models, std::uint64_t seed)
    : cfg_(cfg), models_(models), seed_(seed), rng_(derive_seed(seed, 0xE915u)) {
  cfg_.validate();
  if (!models_.classifier) throw ContractError("PipelineWorld: a grasp classifier is required");
}

namespace {

// Undeformed (u, v) of the surface point under a pixel; invariant under rotation.
std::optional<Vec2> material_point(const SceneSample& s, int row, int col) {
  const Hit& h = s.scene.hits(row, col);
  if (h.triangle < 0) return std::nullopt;
  const auto tri = s.mesh.triangle(static_cast<std::size_t>(h.triangle));
  const auto& uv = s.mesh.undeformed();
  return (1.0 - h.b1 - h.b2) * uv[tri[0]] + h.b1 * uv[tri[1]] + h.b2 * uv[tri[2]];
}

}  // namespace

bool PipelineWorld::flip(double p) { return p > 0.0 && uniform(rng_, 0.0, 1.0) < p; }

void PipelineWorld::release() {
  holding_ = false;
  held_.reset();
  scene_.reset();
  rejected_uv_.clear();
  rotation_deg_ = 0.0;
}

bool PipelineWorld::pick(std::string& detail) {
  release();
  const auto n = static_cast<int>(cfg_.env.cloth.node_count());
  const auto node = static_cast<std::size_t>(uniform_int(rng_, 0, n - 1));
  const bool lifted = !flip(cfg_.inject.grasp_miss);
  if (lifted) {
    hanging_ = hang_from_node(cfg_.env.cloth, node, next_seed(), cfg_.env.configuration);
    holding_ = true;
    held_ = node;
  }
  const bool seen = lifted ? !flip(cfg_.inject.visual_fn) : flip(cfg_.inject.visual_fp);
  detail = "node " + std::to_string(node) + (lifted ? " lifted" : " missed");
  return seen;
}

bool PipelineWorld::grasp_lowest(std::string& detail) {
  if (!holding_) throw ContractError("grasp_lowest: cloth is not held");
  const auto& pos = hanging_.positions();
  std::size_t low = 0;
  for (std::size_t i = 1; i < pos.size(); ++i) {
    if (pos[i].z() < pos[low].z()) low = i;
  }
  if (!flip(cfg_.inject.grasp_miss)) {
    hanging_ = hang_from_node(cfg_.env.cloth, low, next_seed(), cfg_.env.configuration);
    held_ = low;
    detail = "node " + std::to_string(low);
  } else {
    detail = "missed node " + std::to_string(low);
  }
  scene_.reset();
  rejected_uv_.clear();
  rotation_deg_ = 0.0;
  const bool corner = classify_node(hanging_, *held_) == NodeClass::corner;
  detail += corner ? " corner" : " not corner";
  return corner ? !flip(cfg_.inject.visual_fn) : flip(cfg_.inject.visual_fp);
}

const SceneSample& PipelineWorld::scene() {
  if (!scene_) {
    const bool labels = models_.affordance == nullptr;
    scene_ = make_scene(cfg_.env, hanging_, derive_seed(seed_, events_), rotation_deg_, labels);
  }
  return *scene_;
}

PipelineWorld::EdgeResult PipelineWorld::grasp_edge(std::string& detail) {
  if (!holding_) throw ContractError("grasp_edge: cloth is not held");
  const SceneSample& s = scene();
  const Raster<double> map =
      models_.affordance ? predict_map(*models_.affordance, s.scene.depth, s.reach) : s.affordance.values;
  PixelMask allowed = s.reach;
  const double r2 = cfg_.reject_radius_m * cfg_.reject_radius_m;
  for (int r = 0; r < allowed.height(); ++r) {
    for (int c = 0; c < allowed.width(); ++c) {
      if (!allowed(r, c)) continue;
      const auto uv = material_point(s, r, c);
      if (!uv || !(s.scene.depth(r, c) > 0.0)) {
        allowed(r, c) = 0;
        continue;
      }
      for (const Vec2& q : rejected_uv_) {
        if ((*uv - q).squaredNorm() <= r2) {
          allowed(r, c) = 0;
          break;
        }
      }
    }
  }
  const GraspChoice choice = select_grasp(map, allowed, cfg_.threshold);
  char buf[96];
  if (choice.rotate) {
    std::snprintf(buf, sizeof buf, "best %.4f below threshold", choice.row < 0 ? 0.0 : choice.value);
    detail = buf;
    return EdgeResult::no_candidate;
  }
  last_truth_ = flip(cfg_.inject.grasp_miss)
                    ? GraspCategory::no_fabric
                    : grasp_category_at(s, cfg_.env.label, choice.row, choice.col);
  Rng srng(next_seed());
  GraspScenario scn = sample_scenario(last_truth_, srng, cfg_.sensor);
  const GraspLabel label = classify_scenario(*models_.classifier, scn, cfg_.sensor);
  bool edge = label.category == GraspCategory::edge;
  if (last_truth_ == GraspCategory::edge) {
    if (flip(cfg_.inject.tactile_fn)) edge = false;
  } else if (flip(cfg_.inject.tactile_fp)) {
    edge = true;
  }
  last_coverage_ = 0.0;
  if (last_truth_ == GraspCategory::edge) {
    const double cy = scenario_pose(scn, cfg_.sensor).cy_mm;
    last_coverage_ = std::clamp(cy / cfg_.sensor.height_mm(), 0.0, 1.0);
  }
  std::snprintf(buf, sizeof buf, "pixel %d,%d value %.4f truth %s tactile %s", choice.row, choice.col,
                choice.value, to_string(last_truth_), edge ? "edge" : to_string(label.category));
  detail = buf;
  if (!edge) rejected_uv_.push_back(*material_point(s, choice.row, choice.col));
  return edge ? EdgeResult::confirmed : EdgeResult::rejected;
}

void PipelineWorld::rotate() {
  rotation_deg_ += 360.0 / kRotationsPerTurn;
  if (rotation_deg_ >= 360.0 - 1e-9) rotation_deg_ = 0.0;
  scene_.reset();
}

bool PipelineWorld::slide(int& steps, double& traversal, std::string& detail) {
  if (last_truth_ != GraspCategory::edge) {
    // Not an edge in the fingers: the cloth slips out as soon as the gripper moves.
    steps += 1;
    traversal = 0.0;
    detail = std::string("grasp was ") + to_string(last_truth_);
    release();
    return false;
  }
  const SlidingPlant plant = SlidingPlant::vertical(cfg_.edge);
  const double thr = corner_shear_threshold(plant, cfg_.sensor);
  const EpisodeLog log = vertical_slide(plant, cfg_.k_p, thr, last_coverage_, next_seed());
  steps += log.steps;
  traversal = log.traversal;
  char buf[96];
  std::snprintf(buf, sizeof buf, "coverage %.3f traversal %.3f end %s", last_coverage_, log.traversal,
                to_string(log.end_event));
  detail = buf;
  const bool ok = log.end_event == SlideEvent::corner_reached;
  if (!ok) release();
  return ok;
}

ActionRecord step(TaskState& st, PipelineWorld& world, EpisodeReport& report) {
  if (st.terminal()) throw ContractError(std::string("step: state ") + to_string(st.state) + " is terminal");
  const PipelineConfig& cfg = world.config();
  ActionRecord rec;
  rec.step = report.steps;
  rec.state = st.state;
  report.steps += 1;
  switch (st.state) {
    case StateId::pick_from_ground:
      rec.action = Action::pick;
      rec.condition = world.pick(rec.detail) ? Condition::picked : Condition::pick_failed;
      st.corner_attempts = 0;
      break;
    case StateId::corner_grasp:
      rec.action = Action::grasp_lowest;
      if (!world.holding()) {
        rec.condition = Condition::towel_on_ground;
        rec.detail = "cloth on the ground";
        break;
      }
      ++st.corner_attempts;
      if (world.grasp_lowest(rec.detail)) {
        rec.condition = Condition::corner_confirmed;
        st.rotation = 0;
        st.edge_attempts = 0;
      } else {
        rec.condition = st.corner_attempts >= cfg.max_corner_attempts ? Condition::corner_attempts_exhausted
                                                                       : Condition::corner_rejected;
      }
      break;
    case StateId::edge_grasp_search: {
      rec.action = Action::grasp_edge;
      report.edge_phase_reached = true;
      const auto r = world.grasp_edge(rec.detail);
      if (r == PipelineWorld::EdgeResult::no_candidate) {
        rec.condition = Condition::no_candidate;
        break;
      }
      ++report.grasp_attempts;
      ++st.edge_attempts;
      if (r == PipelineWorld::EdgeResult::confirmed) {
        rec.condition = Condition::edge_confirmed;
        // The first confirmation fixes the edge-phase outcome.
        const bool first = std::none_of(report.actions.begin(), report.actions.end(), [](const ActionRecord& a) {
          return a.condition == Condition::edge_confirmed;
        });
        if (first) {
          report.edge_attempts = report.grasp_attempts;
          report.edge_success = world.last_truth() == GraspCategory::edge;
        }
      } else {
        rec.condition = st.edge_attempts >= cfg.attempts_per_rotation ? Condition::edge_attempts_exhausted
                                                                      : Condition::edge_rejected;
      }
      break;
    }
    case StateId::rotate:
      rec.action = Action::rotate;
      ++st.rotation;
      st.edge_attempts = 0;
      if (st.rotation >= kRotationsPerTurn) {
        rec.condition = Condition::full_rotation;
        rec.detail = "full turn";
      } else {
        world.rotate();
        rec.condition = Condition::rotated;
        rec.detail = "rotation " + std::to_string(st.rotation);
      }
      break;
    case StateId::slide: {
      rec.action = Action::slide;
      const bool ok = world.slide(report.steps, report.traversal, rec.detail);
      rec.condition = ok ? Condition::corner_reached : Condition::dropped;
      break;
    }
    case StateId::restart:
      rec.action = Action::release;
      world.release();
      ++st.restarts;
      st.rotation = 0;
      st.edge_attempts = 0;
      st.corner_attempts = 0;
      rec.condition = Condition::restarted;
      rec.detail = "restart " + std::to_string(st.restarts);
      break;
    case StateId::two_corners:
    case StateId::timeout:
      break;
  }
  rec.next = next_state(st.state, rec.condition);
  st.state = rec.next;
  report.actions.push_back(rec);
  return rec;
}

EpisodeReport run_episode(const PipelineConfig& cfg, const PipelineModels& models, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineWorld world(cfg, models, seed);
  TaskState st;
  st.seed = seed;
  EpisodeReport report;
  report.seed = seed;
  while (!st.terminal()) {
    if (st.state == StateId::restart && st.restarts >= cfg.max_restarts) break;
    if (report.steps >= cfg.step_cap) {
      st.state = StateId::timeout;
      break;
    }
    step(st, world, report);
  }
  report.final_state = st.state;
  report.restarts = st.restarts;
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

bool EpisodeReport::same_outcome(const EpisodeReport& o) const {
  if (seed != o.seed || final_state != o.final_state || steps != o.steps || restarts != o.restarts ||
      grasp_attempts != o.grasp_attempts || edge_phase_reached != o.edge_phase_reached ||
      edge_success != o.edge_success || edge_attempts != o.edge_attempts || traversal != o.traversal ||
      actions.size() != o.actions.size()) {
    return false;
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const ActionRecord& a = actions[i];
    const ActionRecord& b = o.actions[i];
    if (a.step != b.step || a.state != b.state || a.action != b.action || a.condition != b.condition ||
        a.next != b.next || a.detail != b.detail) {
      return false;
    }
  }
  return true;
}

nlohmann::json EpisodeReport::to_json(bool with_wall_time) const {
  nlohmann::json acts = nlohmann::json::array();
  for (const ActionRecord& a : actions) {
    acts.push_back({{"step", a.step},
                    {"state", to_string(a.state)},
                    {"action", to_string(a.action)},
                    {"condition", to_string(a.condition)},
                    {"next", to_string(a.next)},
                    {"detail", a.detail}});
  }
  nlohmann::json doc = {{"format", "vtc.episode_report"},
                         {"version", 1},
                         {"seed", seed},
                         {"final_state", to_string(final_state)},
                         {"steps", steps},
                         {"restarts", restarts},
                         {"grasp_attempts", grasp_attempts},
                         {"edge_phase_reached", edge_phase_reached},
                         {"edge_success", edge_success},
                         {"edge_attempts", edge_attempts},
                         {"traversal", traversal},
                         {"actions", acts}};
  if (with_wall_time) doc["wall_time_s"] = wall_time_s;
  return doc;
}

SuiteSummary summarize(const std::vector<EpisodeReport>& reports) {
  SuiteSummary s;
  s.episodes = static_cast<int>(reports.size());
  if (reports.empty()) return s;
  int ok = 0, two = 0;
  double attempts = 0.0;
  for (const EpisodeReport& r : reports) {
    if (r.edge_success) {
      ++ok;
      attempts += r.edge_attempts;
    }
    if (r.two_corners()) ++two;
  }
  s.edge_success_rate = static_cast<double>(ok) / s.episodes;
  s.mean_edge_attempts = ok > 0 ? attempts / ok : 0.0;
  s.two_corners_rate = static_cast<double>(two) / s.episodes;
  return s;
}

nlohmann::json SuiteSummary::to_json() const {
  return {{"episodes", episodes},
          {"edge_success_rate", edge_success_rate},
          {"mean_edge_attempts", mean_edge_attempts},
          {"two_corners_rate", two_corners_rate}};
}

}  // namespace vtc
