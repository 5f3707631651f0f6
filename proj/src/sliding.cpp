#include "vtc/sliding.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vtc {

const char* to_string(EdgeKind k) { return k == EdgeKind::thin ? "thin" : "thick"; }
const char* to_string(SlideMode m) { return m == SlideMode::horizontal ? "horizontal" : "vertical"; }

const char* to_string(SlideEvent e) {
  switch (e) {
    case SlideEvent::none:
      return "none";
    case SlideEvent::dropped:
      return "dropped";
    case SlideEvent::corner_reached:
      return "corner_reached";
    case SlideEvent::workspace_end:
      return "workspace_end";
  }
  return "?";
}

void SlidingPlant::validate() const {
  if (!(v > 0.0 && lever > 0.0 && dt > 0.0 && sensor_extent > 0.0)) {
    throw ContractError("sliding plant: speed, lever, dt and sensor extent must be positive");
  }
  if (!(e_target > 0.0 && e_target < sensor_extent)) {
    throw ContractError("sliding plant: setpoint must lie inside the sensor");
  }
  if (!(phi_max > 0.0 && phi_max < kPi / 2)) throw ContractError("sliding plant: bad phi_max");
  if (g_slip < 0.0 || noise_y < 0.0 || noise_theta < 0.0 || hazard_rate < 0.0) {
    throw ContractError("sliding plant: rates and noise must be nonnegative");
  }
  if (!(workspace > 0.0 && edge_length > 0.0)) {
    throw ContractError("sliding plant: travel limits must be positive");
  }
}

SlidingPlant SlidingPlant::horizontal() { return SlidingPlant{}; }

SlidingPlant SlidingPlant::vertical(EdgeKind edge) {
  SlidingPlant p;
  p.mode = SlideMode::vertical;
  p.edge = edge;
  p.v = 0.01;
  p.g_slip = 0.0003;
  p.noise_y = 0.0004;
  p.e_target = 0.013;
  p.hazard_zone = 0.012;
  p.hazard_rate = 1.0;
  p.hazard_thin = false;
  return p;
}

double SlidingPlant::hazard(double e) const {
  if (edge == EdgeKind::thin && !hazard_thin) return 0.0;
  if (e >= hazard_zone) return 0.0;
  const double r = (hazard_zone - std::max(e, 0.0)) / hazard_zone;
  return hazard_rate * r * r;
}

double SlidingPlant::load(double s) const {
  const double frac = s / edge_length - corner_ramp_start;
  if (mode == SlideMode::horizontal || frac <= 0.0) return base_load;
  return base_load * (1.0 + corner_ramp_gain * frac / 0.05);
}

double SlidingPlant::thickness_mm() const {
  return edge == EdgeKind::thin ? thin_thickness_mm : thick_thickness_mm;
}

nlohmann::json SlidingPlant::to_json() const {
  return {{"mode", to_string(mode)},
          {"edge", to_string(edge)},
          {"v", v},
          {"g_slip", g_slip},
          {"kappa", kappa},
          {"c_ytheta", c_ytheta},
          {"c_theta", c_theta},
          {"d_theta", d_theta},
          {"lever", lever},
          {"max_rate", max_rate},
          {"noise_y", noise_y},
          {"noise_theta", noise_theta},
          {"sensor_extent", sensor_extent},
          {"e_target", e_target},
          {"e_drop", e_drop},
          {"theta_drop", theta_drop},
          {"hazard_zone", hazard_zone},
          {"hazard_rate", hazard_rate},
          {"hazard_thin", hazard_thin},
          {"phi_max", phi_max},
          {"dt", dt},
          {"workspace", workspace},
          {"edge_length", edge_length},
          {"base_load", base_load},
          {"corner_ramp_start", corner_ramp_start},
          {"corner_ramp_gain", corner_ramp_gain},
          {"thin_thickness_mm", thin_thickness_mm},
          {"thick_thickness_mm", thick_thickness_mm}};
}

SlidingPlant SlidingPlant::from_json(const nlohmann::json& doc) {
  SlidingPlant p;
  try {
    const std::string mode = doc.value("mode", "horizontal");
    const std::string edge = doc.value("edge", "thin");
    if (mode != "horizontal" && mode != "vertical") throw ContractError("plant: unknown mode");
    if (edge != "thin" && edge != "thick") throw ContractError("plant: unknown edge kind");
    p = mode == "horizontal" ? horizontal()
                             : vertical(edge == "thin" ? EdgeKind::thin : EdgeKind::thick);
    p.edge = edge == "thin" ? EdgeKind::thin : EdgeKind::thick;
    auto get = [&](const char* key, double& field) { field = doc.value(key, field); };
    get("v", p.v);
    get("g_slip", p.g_slip);
    get("kappa", p.kappa);
    get("c_ytheta", p.c_ytheta);
    get("c_theta", p.c_theta);
    get("d_theta", p.d_theta);
    get("lever", p.lever);
    get("max_rate", p.max_rate);
    get("noise_y", p.noise_y);
    get("noise_theta", p.noise_theta);
    get("sensor_extent", p.sensor_extent);
    get("e_target", p.e_target);
    get("e_drop", p.e_drop);
    get("theta_drop", p.theta_drop);
    get("hazard_zone", p.hazard_zone);
    get("hazard_rate", p.hazard_rate);
    p.hazard_thin = doc.value("hazard_thin", p.hazard_thin);
    get("phi_max", p.phi_max);
    get("dt", p.dt);
    get("workspace", p.workspace);
    get("edge_length", p.edge_length);
    get("base_load", p.base_load);
    get("corner_ramp_start", p.corner_ramp_start);
    get("corner_ramp_gain", p.corner_ramp_gain);
    get("thin_thickness_mm", p.thin_thickness_mm);
    get("thick_thickness_mm", p.thick_thickness_mm);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("plant config: ") + e.what());
  }
  p.validate();
  return p;
}

StepNoise sample_noise(const SlidingPlant& plant, Rng& rng) {
  StepNoise n;
  std::normal_distribution<double> unit(0.0, 1.0);
  n.w_y = plant.noise_y * unit(rng);
  n.w_theta = plant.noise_theta * unit(rng);
  return n;
}

StepResult plant_step(const SlidingPlant& p, const SlidingState& st, double phi,
                      const StepNoise& noise) {
  const double u = std::clamp(phi, -p.phi_max, p.phi_max);
  const double delta = u - st.alpha;
  const double e = p.covered_depth(st);
  const double tip = std::max(0.0, 1.0 - e / p.sensor_extent);
  double ydot = p.v * std::sin(delta) + p.c_ytheta * p.v * std::sin(st.theta) -
                p.g_slip * (1.0 + p.kappa * tip * tip) + noise.w_y;
  ydot = std::clamp(ydot, -p.max_rate, p.max_rate);
  const double thdot = p.c_theta * p.v * std::sin(delta) - p.d_theta * st.theta + noise.w_theta;
  const double adot = (p.v / p.lever) * std::sin(delta);
  const double sdot = p.v * std::cos(delta);

  StepResult r;
  r.state.y = std::min(st.y + ydot * p.dt, p.sensor_extent - p.e_target);
  r.state.theta = st.theta + thdot * p.dt;
  r.state.alpha = st.alpha + adot * p.dt;
  r.state.s = st.s + sdot * p.dt;
  r.hazard_increment = p.hazard(e) * p.dt;
  const double e_new = p.covered_depth(r.state);
  if (e_new < p.e_drop || std::abs(r.state.theta) > p.theta_drop) {
    r.event = SlideEvent::dropped;
  } else if (p.mode == SlideMode::vertical && r.state.s >= p.edge_length) {
    r.event = SlideEvent::corner_reached;
  } else if (p.mode == SlideMode::horizontal && r.state.s >= p.workspace) {
    r.event = SlideEvent::workspace_end;
  }
  return r;
}

RolloutData collect_rollouts(const SlidingPlant& plant, const RolloutOptions& opts,
                             std::uint64_t seed) {
  plant.validate();
  if (opts.n_runs < 1 || opts.steps < 2) throw ContractError("collect_rollouts: bad run counts");
  constexpr int kNoiseHold = 6;  // control noise is held for a few steps
  RolloutData data;
  for (int run = 0; run < opts.n_runs; ++run) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(run)));
    SlidingState st;
    st.y = uniform(rng, 0.45, 0.85) * plant.sensor_extent - plant.e_target;
    st.theta = deg2rad(uniform(rng, -5.0, 5.0));
    st.alpha = deg2rad(uniform(rng, -5.0, 5.0));
    const double xi = std::exponential_distribution<double>(1.0)(rng);
    double cum_hazard = 0.0;
    std::vector<Eigen::Vector3d> xs{st.x()};
    std::vector<double> us;
    double noise = 0.0;
    for (int k = 0; k < opts.steps; ++k) {
      if (k % kNoiseHold == 0) noise = opts.noise_amp > 0.0 ? uniform(rng, -opts.noise_amp, opts.noise_amp) : 0.0;
      const double phi = std::clamp(-opts.k_p * st.y + noise, -plant.phi_max, plant.phi_max);
      const StepResult r = plant_step(plant, st, phi, sample_noise(plant, rng));
      cum_hazard += r.hazard_increment;
      if (r.event == SlideEvent::dropped || cum_hazard > xi) break;
      us.push_back(phi);
      st = r.state;
      xs.push_back(st.x());
    }
    // xs has one more entry than us; the last state has no control applied.
    const std::size_t n = us.size();
    if (n < 2) continue;
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::Vector3d d;
      if (k == 0) {
        d = (xs[1] - xs[0]) / plant.dt;
      } else {
        d = (xs[k + 1] - xs[k - 1]) / (2.0 * plant.dt);
      }
      data.x.push_back(xs[k]);
      data.u.push_back(us[k]);
      data.xdot.push_back(d);
    }
    // Final recorded state: one-sided backward difference.
    data.x.push_back(xs[n]);
    data.u.push_back(us[n - 1]);
    data.xdot.push_back((xs[n] - xs[n - 1]) / plant.dt);
  }
  return data;
}

LinearDynamics fit_linear_dynamics(const RolloutData& data, double dt) {
  const std::size_t n = data.size();
  if (data.u.size() != n || data.xdot.size() != n) {
    throw ContractError("fit_linear_dynamics: column lengths differ");
  }
  if (n < 120) {
    throw ContractError("fit_linear_dynamics: need at least 120 observations, got " +
                        std::to_string(n));
  }
  Eigen::MatrixXd X(n, 4);
  Eigen::MatrixXd Y(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    X.row(static_cast<Eigen::Index>(i)) << data.x[i].transpose(), data.u[i];
    Y.row(static_cast<Eigen::Index>(i)) = data.xdot[i].transpose();
  }
  if (!X.allFinite() || !Y.allFinite()) throw ContractError("fit_linear_dynamics: non-finite data");

  // Rank test on column-normalized regressors so unit choices do not matter.
  Eigen::Vector4d norms = X.colwise().norm().transpose();
  Eigen::MatrixXd Xn = X;
  for (int j = 0; j < 4; ++j) {
    if (norms(j) > 0.0) Xn.col(j) /= norms(j);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xn, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double tol = 1e-9 * std::max(1.0, sv(0));
  int rank = 0;
  for (int j = 0; j < sv.size(); ++j) rank += sv(j) > tol ? 1 : 0;
  if (rank < 4) {
    Eigen::Vector4d null = svd.matrixV().col(3);
    std::ostringstream msg;
    msg.precision(3);
    msg << "fit_linear_dynamics: regressor matrix has rank " << rank
        << " < 4; null-space direction over (y, theta, alpha, phi) = [" << null(0) << ", "
        << null(1) << ", " << null(2) << ", " << null(3) << "]";
    throw IdentificationError(msg.str());
  }

  Eigen::MatrixXd coef = svd.solve(Y);  // in normalized units
  for (int j = 0; j < 4; ++j) {
    if (norms(j) > 0.0) coef.row(j) /= norms(j);
  }
  LinearDynamics out;
  out.dt = dt;
  out.A = coef.topRows(3).transpose();
  out.B = coef.row(3).transpose();
  const Eigen::MatrixXd resid = Y - X * coef;
  const double nn = static_cast<double>(n);
  for (int r = 0; r < 3; ++r) {
    out.residual_rms(r) = std::sqrt(resid.col(r).squaredNorm() / nn);
    out.zero_model_rms(r) = std::sqrt(Y.col(r).squaredNorm() / nn);
  }
  out.observations = n;
  return out;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& rows) {
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = nr == 0 ? 0 : static_cast<Eigen::Index>(rows.at(0).size());
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i) {
    if (static_cast<Eigen::Index>(rows.at(i).size()) != nc) {
      throw ContractError("matrix document: ragged rows");
    }
    for (Eigen::Index j = 0; j < nc; ++j) m(i, j) = rows.at(i).at(j).get<double>();
  }
  return m;
}

double inf_norm(const Eigen::MatrixXd& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

nlohmann::json LinearDynamics::to_json() const {
  return {{"format", "vtc.linear_dynamics"},
          {"version", 1},
          {"A", matrix_json(A)},
          {"B", matrix_json(B)},
          {"dt", dt},
          {"residual_rms", matrix_json(residual_rms)},
          {"zero_model_rms", matrix_json(zero_model_rms)},
          {"observations", observations}};
}

LinearDynamics LinearDynamics::from_json(const nlohmann::json& doc) {
  LinearDynamics d;
  try {
    if (doc.at("format").get<std::string>() != "vtc.linear_dynamics") {
      throw ContractError("dynamics document: unexpected format tag");
    }
    const Eigen::MatrixXd A = json_matrix(doc.at("A"));
    const Eigen::MatrixXd B = json_matrix(doc.at("B"));
    if (A.rows() != 3 || A.cols() != 3 || B.rows() != 3 || B.cols() != 1) {
      throw ContractError("dynamics document: A must be 3x3 and B 3x1");
    }
    d.A = A;
    d.B = B;
    d.dt = doc.at("dt");
    if (doc.contains("residual_rms")) d.residual_rms = json_matrix(doc["residual_rms"]);
    if (doc.contains("zero_model_rms")) d.zero_model_rms = json_matrix(doc["zero_model_rms"]);
    d.observations = doc.value("observations", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("dynamics document: ") + e.what());
  }
  if (!d.A.allFinite() || !d.B.allFinite() || !(d.dt > 0.0)) {
    throw ContractError("dynamics document: non-finite entries or non-positive dt");
  }
  return d;
}

void discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double dt, Eigen::MatrixXd& Ad,
                Eigen::MatrixXd& Bd) {
  const Eigen::Index n = A.rows(), m = B.cols();
  if (A.cols() != n || B.rows() != n) throw ContractError("discretize: dimension mismatch");
  if (!(dt > 0.0)) throw ContractError("discretize: dt must be positive");
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = A * dt;
  M.topRightCorner(n, m) = B * dt;
  const Eigen::MatrixXd E = M.exp();
  Ad = E.topLeftCorner(n, n);
  Bd = E.topRightCorner(n, m);
}

DareResult solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                      const Eigen::MatrixXd& R, const DareOptions& opts) {
  const Eigen::Index n = A.rows(), m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m ||
      R.cols() != m) {
    throw ContractError("solve_dare: dimension mismatch");
  }
  Eigen::MatrixXd P = Q;
  auto gain = [&](const Eigen::MatrixXd& Pk) {
    const Eigen::MatrixXd S = R + B.transpose() * Pk * B;
    return Eigen::MatrixXd(S.ldlt().solve(B.transpose() * Pk * A));
  };
  for (long it = 1; it <= opts.max_iterations; ++it) {
    const Eigen::MatrixXd K = gain(P);
    Eigen::MatrixXd Pn = Q + A.transpose() * P * A - A.transpose() * P * B * K;
    Pn = 0.5 * (Pn + Pn.transpose());
    const double size = inf_norm(Pn);
    if (!Pn.allFinite() || size > 1e150) {
      throw IdentificationError("Riccati iteration diverged at iteration " + std::to_string(it) +
                                "; the model is not stabilizable");
    }
    const double change = inf_norm(Pn - P);
    P = std::move(Pn);
    if (change < opts.rel_tol * std::max(1.0, size)) {
      return DareResult{P, gain(P), it};
    }
  }
  throw IdentificationError("Riccati iteration did not converge within " +
                            std::to_string(opts.max_iterations) +
                            " iterations; the model is not stabilizable");
}

Eigen::Matrix3d default_lqr_q() { return Eigen::Vector3d(100000.0, 1.0, 0.1).asDiagonal(); }

double LQRGains::closed_loop_radius() const {
  const Eigen::Matrix3d cl = Ad - Bd * K;
  return cl.eigenvalues().cwiseAbs().maxCoeff();
}

nlohmann::json LQRGains::to_json() const {
  return {{"format", "vtc.lqr_gains"}, {"version", 1},
          {"K", matrix_json(K)},       {"Q", matrix_json(Q)},
          {"R", R},                    {"P", matrix_json(P)},
          {"Ad", matrix_json(Ad)},     {"Bd", matrix_json(Bd)},
          {"iterations", iterations},  {"closed_loop_radius", closed_loop_radius()}};
}

LQRGains LQRGains::from_json(const nlohmann::json& doc) {
  LQRGains g;
  try {
    if (doc.at("format").get<std::string>() != "vtc.lqr_gains") {
      throw ContractError("gains document: unexpected format tag");
    }
    const Eigen::MatrixXd K = json_matrix(doc.at("K"));
    if (K.rows() != 1 || K.cols() != 3) throw ContractError("gains document: K must be 1x3");
    g.K = K;
    g.Q = json_matrix(doc.at("Q"));
    g.R = doc.at("R");
    g.P = json_matrix(doc.at("P"));
    g.Ad = json_matrix(doc.at("Ad"));
    g.Bd = json_matrix(doc.at("Bd"));
    g.iterations = doc.value("iterations", 0L);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("gains document: ") + e.what());
  }
  return g;
}

LQRGains lqr_gain(const LinearDynamics& dyn, const Eigen::Matrix3d& Q, double R,
                  const DareOptions& opts) {
  if (!(R > 0.0)) throw ContractError("lqr_gain: R must be positive");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || Q.eigenvalues().real().minCoeff() < 0.0) {
    throw ContractError("lqr_gain: Q must be symmetric positive semidefinite");
  }
  Eigen::MatrixXd Ad, Bd;
  discretize(dyn.A, dyn.B, dyn.dt, Ad, Bd);
  const DareResult d = solve_dare(Ad, Bd, Q, Eigen::MatrixXd::Constant(1, 1, R), opts);
  LQRGains g;
  g.K = d.K;
  g.Q = Q;
  g.R = R;
  g.P = d.P;
  g.Ad = Ad;
  g.Bd = Bd;
  g.iterations = d.iterations;
  return g;
}

double LqrController::act(const Observation& obs) {
  return -k_.dot(Eigen::Vector3d(obs.y_est, obs.theta_est, obs.alpha));
}

TactileFrame sense(const SlidingPlant& plant, const SlidingState& st, std::uint64_t frame_seed,
                   const TactileSensor& sensor) {
  GraspScenario scn;
  scn.category = GraspCategory::edge;
  scn.cx_mm = 0.5 * sensor.width_mm();
  scn.cy_mm = 1000.0 * plant.covered_depth(st);
  scn.theta_deg = rad2deg(st.theta);
  scn.thickness_mm = plant.thickness_mm();
  scn.seed = frame_seed;
  TactileFrame f = synth_frame(scn, 1.0, sensor);
  f.markers = noisy_marker_field(plant.load(st.s), frame_seed, sensor);
  return f;
}

Observation observe(const SlidingPlant& plant, const EdgePose& pose, double alpha,
                    const TactileSensor& sensor) {
  Observation o;
  o.alpha = alpha;
  o.pose_class = pose.cls;
  switch (pose.cls) {
    case PoseClass::all_fabric:
      o.y_est = plant.sensor_extent - plant.e_target;
      break;
    case PoseClass::no_fabric:
      o.y_est = -plant.e_target;
      break;
    case PoseClass::edge: {
      const double t = deg2rad(pose.theta_deg);
      const double e_mm = pose.cy_mm + std::tan(t) * (0.5 * sensor.width_mm() - pose.cx_mm);
      o.y_est = 1e-3 * e_mm - plant.e_target;
      o.theta_est = t;
      break;
    }
  }
  return o;
}

nlohmann::json EpisodeLog::summary_json() const {
  return {{"format", "vtc.episode_summary"},
          {"version", 1},
          {"mode", mode},
          {"controller", controller},
          {"seed", seed},
          {"init_coverage", init_coverage},
          {"traversal", traversal},
          {"end_event", to_string(end_event)},
          {"steps", steps},
          {"corner_detect_step", corner_detect_step},
          {"corner_arrival_step", corner_arrival_step}};
}

void EpisodeLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "t,y,theta,alpha,s,phi,y_est,theta_est,shear,event\n";
  char buf[256];
  for (const EpisodeRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.4f,%.6e,%.6e,%.6e,%.6e,%.6e,%.6e,%.6e,%.6e,%s\n", r.t,
                  r.state.y, r.state.theta, r.state.alpha, r.state.s, r.phi, r.y_est, r.theta_est,
                  r.shear, to_string(r.event));
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

struct Loop {
  const SlidingPlant& plant;
  const SlideOptions& opts;
  std::uint64_t seed;
  EpisodeLog log;
  SlidingState st;
  Rng noise_rng;
  double xi;
  double cum_hazard = 0.0;

  Loop(const SlidingPlant& p, const SlideOptions& o, double init_coverage, std::uint64_t s)
      : plant(p), opts(o), seed(s), noise_rng(derive_seed(s, 0x51DEu)) {
    if (!(init_coverage > 0.0 && init_coverage <= 1.0)) {
      throw ContractError("slide: initial coverage must be in (0, 1]");
    }
    p.validate();
    log.mode = to_string(p.mode);
    log.seed = s;
    log.init_coverage = init_coverage;
    st.y = init_coverage * p.sensor_extent - p.e_target;
    // Common random numbers: the drop threshold depends on the seed only.
    Rng hz(derive_seed(s, 0x4A2Au));
    xi = std::exponential_distribution<double>(1.0)(hz);
  }

  TactileFrame frame(int k) const {
    return sense(plant, st, derive_seed(seed, 0x10000u + static_cast<std::uint64_t>(k)),
                 opts.sensor);
  }

  // Advances one step; returns the event (dropped includes hazard drops).
  SlideEvent advance(double phi, EpisodeRow& row) {
    const StepResult r = plant_step(plant, st, phi, sample_noise(plant, noise_rng));
    cum_hazard += r.hazard_increment;
    st = r.state;
    SlideEvent ev = r.event;
    if (cum_hazard > xi) ev = SlideEvent::dropped;
    row.state = st;
    row.phi = std::clamp(phi, -plant.phi_max, plant.phi_max);
    row.event = ev;
    return ev;
  }
};

}  // namespace

EpisodeLog horizontal_slide(const SlidingPlant& plant, Controller& controller,
                            double init_coverage, std::uint64_t seed, const SlideOptions& opts) {
  Loop loop(plant, opts, init_coverage, seed);
  loop.log.controller = controller.name();
  for (int k = 0; k < opts.max_steps; ++k) {
    const EdgePose pose = estimate_pose(loop.frame(k), opts.sensor);
    const Observation obs = observe(plant, pose, loop.st.alpha, opts.sensor);
    EpisodeRow row;
    row.t = (k + 1) * plant.dt;
    row.y_est = obs.y_est;
    row.theta_est = obs.theta_est;
    const SlideEvent ev = loop.advance(controller.act(obs), row);
    loop.log.rows.push_back(row);
    loop.log.steps = k + 1;
    if (ev == SlideEvent::dropped || ev == SlideEvent::workspace_end) {
      loop.log.end_event = ev;
      break;
    }
  }
  loop.log.traversal = std::min(1.0, loop.st.s / plant.workspace);
  return loop.log;
}

double corner_shear_threshold(const SlidingPlant& plant, const TactileSensor& sensor) {
  return (plant.load(plant.edge_length) - plant.load(0.0)) / sensor.grip_stiffness;
}

EpisodeLog vertical_slide(const SlidingPlant& plant, double k_p, double shear_threshold,
                          double init_coverage, std::uint64_t seed, const SlideOptions& opts) {
  if (!(shear_threshold > 0.0)) throw ContractError("vertical_slide: threshold must be positive");
  Loop loop(plant, opts, init_coverage, seed);
  ProportionalController controller(k_p);
  loop.log.controller = controller.name();
  const TactileFrame reference = loop.frame(0);
  TactileFrame current = reference;
  for (int k = 0; k < opts.max_steps; ++k) {
    if (k > 0) current = loop.frame(k);
    const double shear = shear_signal(current, reference);
    if (shear >= shear_threshold) {
      loop.log.corner_detect_step = k;
      loop.log.end_event = SlideEvent::corner_reached;
      break;
    }
    const EdgePose pose = estimate_pose(current, opts.sensor);
    const Observation obs = observe(plant, pose, loop.st.alpha, opts.sensor);
    EpisodeRow row;
    row.t = (k + 1) * plant.dt;
    row.y_est = obs.y_est;
    row.theta_est = obs.theta_est;
    row.shear = shear;
    const SlideEvent ev = loop.advance(controller.act(obs), row);
    if (ev == SlideEvent::corner_reached && loop.log.corner_arrival_step < 0) {
      loop.log.corner_arrival_step = k + 1;
    }
    loop.log.rows.push_back(row);
    loop.log.steps = k + 1;
    if (ev == SlideEvent::dropped) {
      loop.log.end_event = ev;
      break;
    }
  }
  // A detected corner counts as the full edge; the detector may fire a step early.
  loop.log.traversal = loop.log.end_event == SlideEvent::corner_reached
                           ? 1.0
                           : std::min(1.0, loop.st.s / plant.edge_length);
  return loop.log;
}

}  // namespace vtc
