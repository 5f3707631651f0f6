#pragma once

#include "vtc/common.hpp"
#include "vtc/tactile.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace vtc {

/// y: edge offset from the setpoint (m, positive toward the inner edge of the sensor),
/// theta: edge angle in the grip (rad), alpha: angle between the grippers (rad),
/// s: arc length pulled so far (m).
struct SlidingState {
  double y = 0.0;
  double theta = 0.0;
  double alpha = 0.0;
  double s = 0.0;

  Eigen::Vector3d x() const { return {y, theta, alpha}; }
};

enum class EdgeKind { thin, thick };
enum class SlideMode { horizontal, vertical };
enum class SlideEvent { none, dropped, corner_reached, workspace_end };

const char* to_string(EdgeKind k);
const char* to_string(SlideMode m);
const char* to_string(SlideEvent e);

/// Hidden nonlinear plant. Rates are per second; lengths in meters.
///
///   y'     = v sin(phi - alpha) + c_ytheta v sin(theta) - g_slip (1 + kappa tip(e)^2) + w_y
///   theta' = c_theta v sin(phi - alpha) - d_theta theta + w_theta
///   alpha' = (v / lever) sin(phi - alpha)
///   s'     = v cos(phi - alpha)
///
/// with e = e_target + y the covered depth measured from the fingertip and
/// tip(e) = max(0, 1 - e / sensor_extent). y' is saturated at +-max_rate and e is
/// capped at the sensor extent.
struct SlidingPlant {
  SlideMode mode = SlideMode::horizontal;
  EdgeKind edge = EdgeKind::thin;
  double v = 0.015;
  double g_slip = 0.0008;
  double kappa = 3.0;
  double c_ytheta = 0.3;
  double c_theta = 10.0;
  double d_theta = 0.5;
  double lever = 0.25;
  double max_rate = 0.01;
  double noise_y = 0.0006;      // std of w_y (m/s)
  double noise_theta = 0.01;    // std of w_theta (rad/s)
  double sensor_extent = 0.0225;
  double e_target = 0.017;
  double e_drop = 0.0015;
  double theta_drop = deg2rad(35.0);
  double hazard_zone = 0.014;   // tip-proximity drop hazard below this covered depth
  double hazard_rate = 0.5;     // 1/s at the fingertip
  bool hazard_thin = true;      // hazard also applies to thin edges
  double phi_max = deg2rad(30.0);
  double dt = 1.0 / 30.0;
  // Travel limits: workspace for horizontal slides, edge length for vertical ones.
  double workspace = 0.40;
  double edge_length = 0.14;
  // Tangential load on the stationary gripper (N) and its rise near the corner.
  double base_load = 2.0;
  double corner_ramp_start = 0.95;  // fraction of edge_length
  double corner_ramp_gain = 1.5;    // added load fraction per 5% of edge length
  double thin_thickness_mm = 0.3;
  double thick_thickness_mm = 0.5;

  void validate() const;
  static SlidingPlant horizontal();
  static SlidingPlant vertical(EdgeKind edge);

  double covered_depth(const SlidingState& st) const { return e_target + st.y; }
  double hazard(double e) const;
  double load(double s) const;
  double thickness_mm() const;

  nlohmann::json to_json() const;
  static SlidingPlant from_json(const nlohmann::json& doc);
};

struct StepNoise {
  double w_y = 0.0;
  double w_theta = 0.0;
};

struct StepResult {
  SlidingState state;
  SlideEvent event = SlideEvent::none;
  double hazard_increment = 0.0;  // integrated hazard over the step
};

/// Deterministic update given explicit noise; phi is clamped to +-phi_max. Drop by
/// threshold is reported here; stochastic tip-proximity drops are decided by the caller
/// from hazard_increment.
StepResult plant_step(const SlidingPlant& plant, const SlidingState& st, double phi,
                      const StepNoise& noise);
StepNoise sample_noise(const SlidingPlant& plant, Rng& rng);

// Identification.

struct RolloutData {
  std::vector<Eigen::Vector3d> x;
  std::vector<double> u;
  std::vector<Eigen::Vector3d> xdot;

  std::size_t size() const { return x.size(); }
};

struct RolloutOptions {
  double k_p = 20.0;        // rad per meter
  double noise_amp = 0.3;   // uniform control noise amplitude (rad)
  int n_runs = 30;
  int steps = 240;
};

/// P-controlled rollouts on the true state; finite-difference derivatives (central
/// inside, one-sided at the ends of each run). Runs are truncated at a drop.
RolloutData collect_rollouts(const SlidingPlant& plant, const RolloutOptions& opts,
                             std::uint64_t seed);

struct LinearDynamics {
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d B = Eigen::Vector3d::Zero();
  double dt = 1.0 / 30.0;
  Eigen::Vector3d residual_rms = Eigen::Vector3d::Zero();
  Eigen::Vector3d zero_model_rms = Eigen::Vector3d::Zero();
  std::size_t observations = 0;

  nlohmann::json to_json() const;
  static LinearDynamics from_json(const nlohmann::json& doc);
};

/// Ordinary least squares of each xdot row against [y, theta, alpha, phi].
LinearDynamics fit_linear_dynamics(const RolloutData& data, double dt = 1.0 / 30.0);

/// Zero-order-hold discretization via the augmented matrix exponential.
void discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double dt, Eigen::MatrixXd& Ad,
                Eigen::MatrixXd& Bd);

struct DareOptions {
  double rel_tol = 1e-10;
  long max_iterations = 100000;
};

struct DareResult {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;
  long iterations = 0;
};

/// Fixed-point Riccati iteration for x+ = Ad x + Bd u. Stops when successive iterates
/// differ by less than rel_tol * max(1, |P|_inf) in the infinity norm.
DareResult solve_dare(const Eigen::MatrixXd& Ad, const Eigen::MatrixXd& Bd, const Eigen::MatrixXd& Q,
                      const Eigen::MatrixXd& R, const DareOptions& opts = {});

struct LQRGains {
  Eigen::RowVector3d K = Eigen::RowVector3d::Zero();
  Eigen::Matrix3d Q = Eigen::Matrix3d::Identity();
  double R = 1.0;
  Eigen::Matrix3d P = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d Ad = Eigen::Matrix3d::Identity();
  Eigen::Vector3d Bd = Eigen::Vector3d::Zero();
  long iterations = 0;

  double closed_loop_radius() const;
  nlohmann::json to_json() const;
  static LQRGains from_json(const nlohmann::json& doc);
};

/// The weights used for sliding.
Eigen::Matrix3d default_lqr_q();
inline constexpr double kDefaultLqrR = 0.1;

LQRGains lqr_gain(const LinearDynamics& dyn, const Eigen::Matrix3d& Q, double R,
                  const DareOptions& opts = {});

// Closed-loop slides.

/// What a controller may see: the tactile estimate of the edge and the gripper angle.
struct Observation {
  double y_est = 0.0;
  double theta_est = 0.0;
  double alpha = 0.0;
  PoseClass pose_class = PoseClass::edge;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual double act(const Observation& obs) = 0;
  virtual std::string name() const = 0;
};

class LqrController : public Controller {
 public:
  explicit LqrController(const Eigen::RowVector3d& k) : k_(k) {}
  double act(const Observation& obs) override;
  std::string name() const override { return "lqr"; }

 private:
  Eigen::RowVector3d k_;
};

class ProportionalController : public Controller {
 public:
  explicit ProportionalController(double k_p) : k_p_(k_p) {}
  double act(const Observation& obs) override { return -k_p_ * obs.y_est; }
  std::string name() const override { return "proportional"; }

 private:
  double k_p_;
};

class ZeroController : public Controller {
 public:
  double act(const Observation&) override { return 0.0; }
  std::string name() const override { return "zero"; }
};

/// Tactile frame of the edge as seen by the stationary gripper.
TactileFrame sense(const SlidingPlant& plant, const SlidingState& st, std::uint64_t frame_seed,
                   const TactileSensor& sensor = {});
/// Converts a pose estimate into the controller observation (y relative to e_target).
Observation observe(const SlidingPlant& plant, const EdgePose& pose, double alpha,
                    const TactileSensor& sensor = {});

struct EpisodeRow {
  double t = 0.0;
  SlidingState state;
  double phi = 0.0;
  double y_est = 0.0;
  double theta_est = 0.0;
  double shear = 0.0;
  SlideEvent event = SlideEvent::none;
};

struct EpisodeLog {
  std::string mode;
  std::string controller;
  std::uint64_t seed = 0;
  double init_coverage = 0.0;
  double traversal = 0.0;  // fraction of workspace (horizontal) or edge length (vertical)
  SlideEvent end_event = SlideEvent::none;
  int steps = 0;
  int corner_detect_step = -1;  // vertical: step at which shear crossed the threshold
  int corner_arrival_step = -1; // vertical: first step with s >= edge_length
  std::vector<EpisodeRow> rows;

  nlohmann::json summary_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct SlideOptions {
  int max_steps = 3000;
  TactileSensor sensor;
};

/// Covered depth at the start is init_coverage * sensor_extent.
EpisodeLog horizontal_slide(const SlidingPlant& plant, Controller& controller,
                            double init_coverage, std::uint64_t seed, const SlideOptions& opts = {});

/// Slides until the shear signal (against the first frame) exceeds the threshold or the
/// cloth drops.
EpisodeLog vertical_slide(const SlidingPlant& plant, double k_p, double shear_threshold,
                          double init_coverage, std::uint64_t seed, const SlideOptions& opts = {});

/// Shear signal the plant produces at the corner: the recommended detection threshold.
double corner_shear_threshold(const SlidingPlant& plant, const TactileSensor& sensor = {});

}  // namespace vtc
