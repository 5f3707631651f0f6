#pragma once

#include "vtc/affordance_learn.hpp"
#include "vtc/common.hpp"
#include "vtc/dataset.hpp"
#include "vtc/sliding.hpp"
#include "vtc/tactile.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vtc {

enum class StateId {
  pick_from_ground,
  corner_grasp,
  edge_grasp_search,
  rotate,
  slide,
  two_corners,
  restart,
  timeout,
};

enum class Condition {
  picked,
  pick_failed,
  corner_confirmed,
  corner_rejected,
  corner_attempts_exhausted,
  towel_on_ground,
  edge_confirmed,
  edge_rejected,
  edge_attempts_exhausted,
  no_candidate,
  rotated,
  full_rotation,
  corner_reached,
  dropped,
  restarted,
};

enum class Action { pick, grasp_lowest, grasp_edge, rotate, slide, release };

const char* to_string(StateId s);
const char* to_string(Condition c);
const char* to_string(Action a);

struct Transition {
  StateId from;
  Condition condition;
  StateId to;
  bool counted;  // taking the edge advances a bounded counter
};

/// Every (state, condition) pair the machine accepts.
const std::vector<Transition>& transition_table();
/// Throws ContractError for pairs outside the table.
StateId next_state(StateId from, Condition c);

inline constexpr int kRotationsPerTurn = 24;  // 15 degree steps

struct TaskState {
  StateId state = StateId::pick_from_ground;
  int rotation = 0;         // rotations since the current edge search began
  int edge_attempts = 0;    // grasp attempts at the current rotation
  int corner_attempts = 0;  // lowest-point grasps since the last pick
  int restarts = 0;
  std::uint64_t seed = 0;

  bool terminal() const { return state == StateId::two_corners || state == StateId::timeout; }
};

struct FailureInjection {
  double visual_fp = 0.0;  // failed check reported as passed
  double visual_fn = 0.0;  // passed check reported as failed
  double tactile_fp = 0.0; // non-edge grasp reported as edge
  double tactile_fn = 0.0; // edge grasp reported as non-edge
  double grasp_miss = 0.0; // any grasp closes on nothing

  void validate() const;
};

struct PipelineConfig {
  EnvParams env;
  double threshold = 0.5;      // minimum affordance for an edge grasp
  int attempts_per_rotation = 3;
  int max_corner_attempts = 3;
  int max_restarts = 3;
  int step_cap = 5000;         // actions plus control steps
  double reject_radius_m = 0.02;  // cloth material distance excluded around a rejected grasp
  EdgeKind edge = EdgeKind::thin;
  double k_p = 20.0;           // vertical slide gain (rad per meter)
  FailureInjection inject;
  TactileSensor sensor;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static PipelineConfig from_json(const nlohmann::json& doc);
};

/// Affordance predictor used during edge search; without a model the geometric labels
/// of the current scene are used.
struct PipelineModels {
  const GraspClassifier* classifier = nullptr;
  const PatchRegressor* affordance = nullptr;
};

struct ActionRecord {
  int step = 0;
  StateId state = StateId::pick_from_ground;
  Action action = Action::pick;
  Condition condition = Condition::picked;
  StateId next = StateId::pick_from_ground;
  std::string detail;
};

struct EpisodeReport {
  std::uint64_t seed = 0;
  StateId final_state = StateId::pick_from_ground;
  std::vector<ActionRecord> actions;
  int steps = 0;
  int restarts = 0;
  int grasp_attempts = 0;      // edge grasp attempts over the whole episode
  bool edge_phase_reached = false;
  bool edge_success = false;   // first tactile-confirmed grasp was a true edge
  int edge_attempts = 0;       // edge grasp attempts up to the first confirmation
  double traversal = 0.0;      // of the last slide
  double wall_time_s = 0.0;

  bool two_corners() const { return final_state == StateId::two_corners; }
  /// Everything except wall time.
  bool same_outcome(const EpisodeReport& o) const;
  /// Wall time is left out by default so reports stay byte-reproducible.
  nlohmann::json to_json(bool with_wall_time = false) const;
};

/// Hanging cloth, grippers and sensors of one episode. Actions report what the
/// (possibly corrupted) sensors observe; the task counters live in TaskState.
class PipelineWorld {
 public:
  PipelineWorld(const PipelineConfig& cfg, const PipelineModels& models, std::uint64_t seed);

  const PipelineConfig& config() const { return cfg_; }
  bool holding() const { return holding_; }
  std::optional<std::size_t> held_node() const { return held_; }
  double rotation_deg() const { return rotation_deg_; }

  /// Lifts the cloth by a random node; false when the visual check fails.
  bool pick(std::string& detail);
  /// Re-grasps the lowest node; false when the visual corner check fails.
  bool grasp_lowest(std::string& detail);

  enum class EdgeResult { no_candidate, rejected, confirmed };
  EdgeResult grasp_edge(std::string& detail);
  /// Next 15 degree view. Rejected grasps stay excluded until the cloth is re-hung.
  void rotate();
  /// Vertical slide from the current edge grasp. Adds its control steps to `steps`.
  bool slide(int& steps, double& traversal, std::string& detail);
  void release();

  /// Ground truth of the last edge grasp.
  GraspCategory last_truth() const { return last_truth_; }

 private:
  bool flip(double p);
  std::uint64_t next_seed() { return derive_seed(seed_, ++events_); }
  const SceneSample& scene();

  PipelineConfig cfg_;
  PipelineModels models_;
  std::uint64_t seed_;
  std::uint64_t events_ = 0;
  Rng rng_;
  bool holding_ = false;
  std::optional<std::size_t> held_;
  ClothMesh hanging_;
  double rotation_deg_ = 0.0;
  std::optional<SceneSample> scene_;
  std::vector<Vec2> rejected_uv_;  // undeformed coordinates of rejected grasps
  GraspCategory last_truth_ = GraspCategory::no_fabric;
  double last_coverage_ = 0.0;
};

/// Performs the action of st.state, applies the observed condition and updates the
/// report counters. `report.steps` grows by one plus any control steps.
ActionRecord step(TaskState& st, PipelineWorld& world, EpisodeReport& report);

/// Drives the machine to TwoCorners, a Restart beyond max_restarts, or the step cap.
EpisodeReport run_episode(const PipelineConfig& cfg, const PipelineModels& models, std::uint64_t seed);

struct SuiteSummary {
  int episodes = 0;
  double edge_success_rate = 0.0;
  double mean_edge_attempts = 0.0;  // over successful edge phases
  double two_corners_rate = 0.0;
  nlohmann::json to_json() const;
};

SuiteSummary summarize(const std::vector<EpisodeReport>& reports);

}  // namespace vtc
