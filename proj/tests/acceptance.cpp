// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 only when all pass.

#include "oracles.hpp"

#include "vtc/affordance_label.hpp"
#include "vtc/affordance_learn.hpp"
#include "vtc/dataset.hpp"
#include "vtc/pipeline.hpp"
#include "vtc/sliding.hpp"
#include "vtc/tactile.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace vtc;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr int kOracleCases = 1000;
constexpr int kDatasetSeeds = 200;
constexpr int kReproSeeds = 3;
constexpr int kDareSystems = 50;
constexpr double kDareTol = 1e-6;
constexpr double kLinearFitTol = 1e-6;
constexpr double kResidualRatio = 0.5;
constexpr int kInnerTrials = 5;
constexpr int kCenteredTrials = 20;
constexpr double kCenteredMean = 0.70;
constexpr int kVerticalTrials = 5;
constexpr int kPoseSamples = 500;
constexpr double kPoseMaeMm = 2.0;
constexpr double kPoseMaeDeg = 5.0;
constexpr double kClassifierAccuracy = 0.92;
constexpr double kNonEdgeAccuracy = 0.98;
constexpr int kAugmentations = 1000;
constexpr double kAugmentMm = 1.0;
constexpr double kAugmentDeg = 2.0;
constexpr int kTransferBudget = 800;
constexpr double kTransferMargin = 0.03;
constexpr int kReplayBudget = 1000;
constexpr double kReplayTarget = 0.75;
constexpr int kEpisodes = 50;
constexpr double kEpisodeThreshold = 0.6;  // affordance needed to attempt an edge grasp
constexpr double kEdgeSuccess = 0.85;
constexpr double kMeanAttempts = 2.5;
constexpr int kGradientPairs = 100;
constexpr double kGradientTol = 1e-5;
constexpr std::uint64_t kExperimentSeeds[] = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 when the criterion states no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double pct(double v) { return 100.0 * v; }

// State shared between criteria: the seed-1 fine-tuned model feeds the episode suite.
struct Shared {
  fs::path work;
  std::optional<PatchRegressor> finetuned;
};

Outcome geometric_oracle() {
  const EnvParams env;
  const LabelParams& lp = env.label;
  Rng rng(2024);
  const int configs = 10;
  int mismatches = 0, cases = 0;
  int positives[4] = {0, 0, 0, 0};
  for (int c = 0; c < configs; ++c) {
    const ClothMesh m = make_configuration(env.cloth, configuration_seed(41, c), 15.0 * c, env.configuration);
    const AffordanceLabeler lab(m, lp);
    for (int i = 0; i < kOracleCases / configs; ++i, ++cases) {
      const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(m.size()) - 1));
      const Vec3 jitter(uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01));
      Mat3 axes = default_grasp_axes();
      if (uniform(rng, 0.0, 1.0) >= 0.5) {
        const Vec3 a(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
        const Vec3 b(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
        axes = grasp_axes(a, b);
      }
      const GripperBox g{m.positions()[n] + jitter, axes, lp.gripper};
      const double ep = lab.edge_percentage(g);
      const bool cf = lab.collision_free(g), sl = lab.single_layer(g), re = lab.reachable(g);
      mismatches += (ep != oracle::edge_percentage(m, g)) + (cf != oracle::collision_free(m, g)) +
                    (sl != oracle::single_layer(m, g, lp)) + (re != oracle::reachable(m, g, lp));
      positives[0] += ep > 0.0;
      positives[1] += cf;
      positives[2] += sl;
      positives[3] += re;
    }
  }
  return {mismatches == 0 && cases >= kOracleCases,
          fmt("%d cases, %d mismatches; positives edge %d, collision-free %d, single-layer %d, reachable %d",
              cases, mismatches, positives[0], positives[1], positives[2], positives[3])};
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  const std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return sa == sb;
}

Outcome dataset_scale(const Shared& sh) {
  const EnvParams env;
  const fs::path full = sh.work / "dataset", again = sh.work / "dataset_again";
  fs::remove_all(full);
  fs::remove_all(again);
  const std::uint64_t base = 1;
  const DatasetManifest m = generate_dataset(env, kDatasetSeeds, 15.0, base, full);
  const DatasetManifest r = generate_dataset(env, kReproSeeds, 15.0, base, again);
  std::size_t present = 0, sized = 0, compared = 0, identical = 0;
  for (const ManifestEntry& e : m.entries) {
    present += fs::exists(full / e.depth) && fs::exists(full / e.affordance);
    const LoadedPair p = load_pair(m, e);
    sized += p.depth.width() == 128 && p.depth.height() == 128 && p.affordance.width() == 128 &&
             p.affordance.height() == 128;
  }
  for (const ManifestEntry& e : r.entries) {
    for (const std::string* f : {&e.depth, &e.depth_aug, &e.affordance, &e.reach_mask}) {
      ++compared;
      identical += same_bytes(full / *f, again / *f);
    }
  }
  const std::size_t expected = static_cast<std::size_t>(kDatasetSeeds) * 24;
  const bool ok = m.entries.size() == expected && present == expected && sized == expected &&
                  compared == static_cast<std::size_t>(kReproSeeds) * 24 * 4 && identical == compared;
  fs::remove_all(full);
  fs::remove_all(again);
  return {ok, fmt("%zu pairs (%zu on disk, %zu at 128x128); regenerated %d seeds: %zu/%zu files identical",
                  m.entries.size(), present, sized, kReproSeeds, identical, compared)};
}

LinearDynamics fitted_sliding_model() {
  const SlidingPlant p = SlidingPlant::horizontal();
  return fit_linear_dynamics(collect_rollouts(p, RolloutOptions{}, 7), p.dt);
}

Outcome riccati() {
  Rng rng(303);
  double worst = 0.0;
  for (int t = 0; t < kDareSystems; ++t) {
    Eigen::MatrixXd A(3, 3), B(3, 1);
    for (int i = 0; i < 9; ++i) A(i / 3, i % 3) = gaussian(rng, 0.6);
    for (int i = 0; i < 3; ++i) B(i, 0) = gaussian(rng, 1.0);
    const Eigen::MatrixXd Q =
        Eigen::Vector3d(uniform(rng, 0.1, 10), uniform(rng, 0.1, 10), uniform(rng, 0.1, 10)).asDiagonal();
    const Eigen::MatrixXd R = Eigen::MatrixXd::Constant(1, 1, uniform(rng, 0.1, 2.0));
    const DareResult r = solve_dare(A, B, Q, R);
    worst = std::max(worst, (r.K - oracle::dare_gain(A, B, Q, R)).cwiseAbs().maxCoeff());
  }
  const Eigen::Matrix3d q = default_lqr_q();
  const bool weights = q(0, 0) == 1e5 && q(1, 1) == 1.0 && q(2, 2) == 0.1 && kDefaultLqrR == 0.1;
  const LQRGains g = lqr_gain(fitted_sliding_model(), q, kDefaultLqrR);
  const double rho = g.closed_loop_radius();
  return {worst < kDareTol && weights && rho < 1.0,
          fmt("%d systems, max |K - K*| = %.2e; sliding Q = diag(%g, %g, %g), R = %g, spectral radius %.6f",
              kDareSystems, worst, q(0, 0), q(1, 1), q(2, 2), kDefaultLqrR, rho)};
}

Outcome identification() {
  Eigen::Matrix3d A;
  A << -0.4, 0.2, 0.0, 0.05, -2.0, 0.6, 0.0, 0.1, -0.3;
  const Eigen::Vector3d B(0.02, 0.3, 0.08);
  Rng rng(404);
  RolloutData d;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d x(uniform(rng, -0.01, 0.01), uniform(rng, -0.2, 0.2), uniform(rng, -0.3, 0.3));
    const double u = uniform(rng, -0.5, 0.5);
    d.x.push_back(x);
    d.u.push_back(u);
    d.xdot.push_back(A * x + B * u);
  }
  const LinearDynamics lin = fit_linear_dynamics(d);
  const double err = std::max((lin.A - A).cwiseAbs().maxCoeff(), (lin.B - B).cwiseAbs().maxCoeff());
  const LinearDynamics dyn = fitted_sliding_model();
  const double ratio = dyn.residual_rms.norm() / dyn.zero_model_rms.norm();
  return {err < kLinearFitTol && ratio < kResidualRatio,
          fmt("linear recovery error %.2e; nonlinear plant %zu observations from %d runs, residual/zero-model %.3f",
              err, dyn.observations, RolloutOptions{}.n_runs, ratio)};
}

Outcome horizontal_sliding() {
  const SlidingPlant p = SlidingPlant::horizontal();
  const LQRGains g = lqr_gain(fitted_sliding_model(), default_lqr_q(), kDefaultLqrR);
  const double inner = p.e_target / p.sensor_extent;
  int full = 0;
  for (int s = 0; s < kInnerTrials; ++s) {
    LqrController c(g.K);
    full += horizontal_slide(p, c, inner, 100 + s).traversal >= 1.0;
  }
  double lqr_sum = 0.0, zero_sum = 0.0;
  int wins = 0;
  for (int s = 0; s < kCenteredTrials; ++s) {
    LqrController c(g.K);
    ZeroController z;
    const double a = horizontal_slide(p, c, 0.5, 200 + s).traversal;
    const double b = horizontal_slide(p, z, 0.5, 200 + s).traversal;
    lqr_sum += a;
    zero_sum += b;
    wins += a > b;
  }
  const double mean = lqr_sum / kCenteredTrials;
  return {full == kInnerTrials && mean >= kCenteredMean && wins == kCenteredTrials,
          fmt("setpoint start %d/%d full traversals; centered start mean %.1f%% (zero control %.1f%%), "
              "LQR ahead in %d/%d paired seeds",
              full, kInnerTrials, pct(mean), pct(zero_sum / kCenteredTrials), wins, kCenteredTrials)};
}

Outcome vertical_sliding() {
  const double k_p = PipelineConfig{}.k_p;
  const double coverages[] = {1.0, 0.75, 0.5, 0.25};
  bool thin_ok = true;
  std::string thin, thick;
  double prev = 2.0;
  bool monotone = true;
  for (EdgeKind ek : {EdgeKind::thin, EdgeKind::thick}) {
    const SlidingPlant p = SlidingPlant::vertical(ek);
    const double thr = corner_shear_threshold(p);
    for (double cov : coverages) {
      double sum = 0.0;
      int complete = 0;
      for (int s = 0; s < kVerticalTrials; ++s) {
        const double t = vertical_slide(p, k_p, thr, cov, 300 + s).traversal;
        sum += t;
        complete += t >= 1.0;
      }
      const double mean = sum / kVerticalTrials;
      if (ek == EdgeKind::thin) {
        thin_ok = thin_ok && complete == kVerticalTrials;
        thin += fmt(" %.0f%%:%d/%d", pct(cov), complete, kVerticalTrials);
      } else {
        monotone = monotone && mean <= prev;
        prev = mean;
        thick += fmt(" %.0f%%:%.1f%%", pct(cov), pct(mean));
      }
    }
  }
  return {thin_ok && monotone, "thin full traversals" + thin + "; thick mean traversal" + thick};
}

Outcome tactile_perception() {
  const TactileSensor sensor;
  Rng rng(505);
  double pos = 0.0, ang = 0.0;
  int as_edge = 0;
  for (int i = 0; i < kPoseSamples; ++i) {
    const GraspScenario scn = sample_scenario(GraspCategory::edge, rng, sensor);
    const EdgePose truth = scenario_pose(scn, sensor);
    const EdgePose est = estimate_pose(synth_frame(scn, 1.0, sensor), sensor);
    as_edge += est.cls == PoseClass::edge;
    pos += std::hypot(est.cx_mm - truth.cx_mm, est.cy_mm - truth.cy_mm);
    ang += std::abs(normalize_theta_deg(est.theta_deg - truth.theta_deg));
  }
  const double pos_mae = pos / kPoseSamples, ang_mae = ang / kPoseSamples;
  const LabeledFeatures train = make_grasp_features(TactileDatasetOptions{}, 1, sensor);
  const GraspClassifier clf = GraspClassifier::train(train.x, train.y);
  TactileDatasetOptions held;
  held.raw_per_category = 200;
  held.augment_per_raw = 0;
  const LabeledFeatures test = make_grasp_features(held, 99, sensor);
  const ClassifierReport rep = evaluate_classifier(clf, test);
  return {pos_mae <= kPoseMaeMm && ang_mae <= kPoseMaeDeg && rep.accuracy >= kClassifierAccuracy &&
              rep.non_edge_binary_accuracy >= kNonEdgeAccuracy,
          fmt("pose MAE %.2f mm / %.2f deg on %d noisy samples (%d classed edge); classifier accuracy %.1f%%, "
              "non-edge binary %.1f%% on %zu held-out sequences",
              pos_mae, ang_mae, kPoseSamples, as_edge, pct(rep.accuracy), pct(rep.non_edge_binary_accuracy),
              test.x.size())};
}

Outcome augmentation_consistency() {
  const TactileSensor sensor;
  Rng rng(606);
  double worst_mm = 0.0, worst_deg = 0.0;
  int bad = 0;
  for (int i = 0; i < kAugmentations; ++i) {
    GraspScenario scn = sample_scenario(GraspCategory::edge, rng, sensor);
    scn.noise_scale = 0.0;
    const EdgePose truth = scenario_pose(scn, sensor);
    const auto [frame, label] = augment(synth_frame(scn, 1.0, sensor), truth, rng, AugmentParams{}, sensor);
    const EdgePose est = estimate_pose(frame, sensor);
    const double dp = std::hypot(est.cx_mm - label.cx_mm, est.cy_mm - label.cy_mm);
    const double dt = std::abs(normalize_theta_deg(est.theta_deg - label.theta_deg));
    worst_mm = std::max(worst_mm, dp);
    worst_deg = std::max(worst_deg, dt);
    bad += dp > kAugmentMm || dt > kAugmentDeg || est.cls != PoseClass::edge;
  }
  return {bad == 0, fmt("%d augmentations, %d outside tolerance; worst %.3f mm / %.3f deg", kAugmentations, bad,
                        worst_mm, worst_deg)};
}

Outcome transfer_ordering(Shared& sh) {
  const EnvParams src;
  const EnvParams tgt = default_target_env(src);
  double so = 0.0, ts = 0.0, ft = 0.0;
  int ordered = 0;
  std::string seeds;
  for (std::uint64_t s : kExperimentSeeds) {
    TransferModels models;
    const TransferReport r = run_transfer_experiment(src, tgt, kTransferBudget, s, TransferOptions{}, &models);
    so += r.source_only;
    ts += r.target_scratch;
    ft += r.source_finetuned;
    ordered += r.source_finetuned > r.target_scratch && r.target_scratch > r.source_only;
    seeds += fmt(" [seed %llu: FT %.1f, TS %.1f, SO %.1f]", static_cast<unsigned long long>(s),
                 pct(r.source_finetuned), pct(r.target_scratch), pct(r.source_only));
    if (s == kExperimentSeeds[0]) sh.finetuned = models.source_finetuned;
    std::printf("    seed %llu done\n", static_cast<unsigned long long>(s));
    std::fflush(stdout);
  }
  const double n = static_cast<double>(std::size(kExperimentSeeds));
  so /= n;
  ts /= n;
  ft /= n;
  // Ordering and margins are judged on the seed means; per-seed ordering is reported only.
  return {ft - ts >= kTransferMargin && ts - so >= kTransferMargin,
          fmt("mean precision@40 SourceFinetuned %.1f, TargetScratch %.1f, SourceOnly %.1f; strict order in %d/%zu "
              "seeds:",
              pct(ft), pct(ts), pct(so), ordered, std::size(kExperimentSeeds)) +
              seeds};
}

Outcome replay_efficiency() {
  const EnvParams src;
  const EnvParams tgt = default_target_env(src);
  TransferOptions o;
  o.eval_interval = 25;
  o.convergence_window = 4;
  int wins = 0;
  std::string seeds;
  for (std::uint64_t s : kExperimentSeeds) {
    const ReplayComparison c = run_replay_experiment(src, tgt, kReplayBudget, kReplayTarget, s, o);
    wins += c.replay_wins();
    seeds += fmt(" [seed %llu: replay %d, no replay %d]", static_cast<unsigned long long>(s), c.with_replay,
                 c.without_replay);
    std::printf("    seed %llu done\n", static_cast<unsigned long long>(s));
    std::fflush(stdout);
  }
  return {wins == static_cast<int>(std::size(kExperimentSeeds)),
          fmt("grasps to precision@40 >= %.2f (-1: not within %d), replay fewer in %d/%zu seeds:", kReplayTarget,
              kReplayBudget, wins, std::size(kExperimentSeeds)) +
              seeds};
}

using S = StateId;
using C = Condition;

bool table_matches() {
  const std::vector<Transition> expected{
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
  const auto& table = transition_table();
  if (table.size() != expected.size()) return false;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Transition& a = table[i];
    const Transition& b = expected[i];
    if (a.from != b.from || a.condition != b.condition || a.to != b.to || a.counted != b.counted) return false;
  }
  return true;
}

// Restart edges taken under forced failures, one injection setting per edge.
std::set<C> injected_restart_edges(const PipelineModels& models, const EnvParams& env) {
  struct Setting {
    C edge;
    FailureInjection inject;
    int max_corner_attempts;
    int seeds;
  };
  auto inj = [](double vfp, double tfp, double tfn, double miss) {
    FailureInjection f;
    f.visual_fp = vfp;
    f.tactile_fp = tfp;
    f.tactile_fn = tfn;
    f.grasp_miss = miss;
    return f;
  };
  const std::vector<Setting> settings{
      {C::pick_failed, inj(0, 0, 0, 1.0), 3, 1},
      {C::towel_on_ground, inj(1.0, 0, 0, 1.0), 3, 1},
      {C::corner_attempts_exhausted, inj(0, 0, 0, 0.5), 1, 30},
      {C::full_rotation, inj(0, 0, 1.0, 0), 3, 10},
      {C::dropped, inj(0, 1.0, 0, 0.5), 3, 30},
  };
  std::set<C> seen;
  for (const Setting& s : settings) {
    PipelineConfig cfg;
    cfg.env = env;
    cfg.max_restarts = 1;
    cfg.max_corner_attempts = s.max_corner_attempts;
    cfg.inject = s.inject;
    for (int seed = 1; seed <= s.seeds && !seen.count(s.edge); ++seed) {
      const EpisodeReport r = run_episode(cfg, models, static_cast<std::uint64_t>(seed));
      for (const ActionRecord& a : r.actions) {
        if (a.condition == s.edge && a.next == S::restart) seen.insert(s.edge);
      }
    }
  }
  return seen;
}

Outcome state_machine(Shared& sh) {
  const EnvParams tgt = default_target_env(EnvParams{});
  const TransferOptions o;
  if (!sh.finetuned) {
    std::printf("    training the fine-tuned model (seed %llu)\n",
                static_cast<unsigned long long>(kExperimentSeeds[0]));
    std::fflush(stdout);
    TransferModels models;
    run_transfer_experiment(EnvParams{}, tgt, kTransferBudget, kExperimentSeeds[0], o, &models);
    sh.finetuned = models.source_finetuned;
  }
  const TargetWorld world = make_target_world(tgt, o, kExperimentSeeds[0]);
  const bool table = table_matches();
  const std::set<C> edges = injected_restart_edges(PipelineModels{&world.classifier, nullptr}, tgt);

  PipelineConfig cfg;
  cfg.env = tgt;
  cfg.threshold = kEpisodeThreshold;
  const PipelineModels models{&world.classifier, &*sh.finetuned};
  std::vector<EpisodeReport> reports;
  for (int s = 1; s <= kEpisodes; ++s) reports.push_back(run_episode(cfg, models, static_cast<std::uint64_t>(s)));
  const SuiteSummary sum = summarize(reports);
  return {table && edges.size() == 5 && sum.edge_success_rate >= kEdgeSuccess &&
              sum.mean_edge_attempts <= kMeanAttempts,
          fmt("table %s; %zu/5 Restart edges exercised; %d episodes: edge success %.1f%%, mean attempts %.2f, "
              "TwoCorners %.1f%%",
              table ? "matches" : "differs", edges.size(), sum.episodes, pct(sum.edge_success_rate),
              sum.mean_edge_attempts, pct(sum.two_corners_rate))};
}

Outcome gradient_check() {
  const PatchConfig cfg;
  Rng rng(707);
  double worst = 0.0;
  for (int t = 0; t < kGradientPairs; ++t) {
    PatchRegressor m(cfg, static_cast<std::uint64_t>(1000 + t));
    std::vector<double> x(static_cast<std::size_t>(cfg.inputs()));
    for (double& v : x) v = uniform(rng, -1.0, 1.0);
    const std::vector<const double*> ptr{x.data()};
    const std::vector<double> y{uniform(rng, 0.0, 1.0)};
    std::vector<double> g;
    m.loss_and_gradient(ptr, y, g);
    const std::size_t which = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(m.parameter_count()) - 1));
    const double n = oracle::numeric_gradient(m, ptr, y, 1e-6, {which})[0];
    worst = std::max(worst, std::abs(g[which] - n) / std::max(1e-8, std::abs(g[which]) + std::abs(n)));
  }
  return {worst < kGradientTol, fmt("%d parameter/sample pairs, max relative error %.2e", kGradientPairs, worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "vtc_acceptance").string();
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--work-dir", work, "Scratch directory for generated data");
  CLI11_PARSE(app, argc, argv);

  Shared sh;
  sh.work = work;
  fs::create_directories(sh.work);

  const std::vector<Criterion> criteria{
      {1, "geometric criteria equal the all-nodes oracle", 120, geometric_oracle},
      {2, "affordance dataset scale and reproducibility", 1800, [&] { return dataset_scale(sh); }},
      {3, "Riccati gains and closed-loop stability", 10, riccati},
      {4, "linear dynamics identification", 30, identification},
      {5, "horizontal sliding", 120, horizontal_sliding},
      {6, "vertical sliding", 120, vertical_sliding},
      {7, "tactile pose estimation and grasp classification", 300, tactile_perception},
      {8, "augmentation label consistency", 0, augmentation_consistency},
      {9, "transfer ordering", 1200, [&] { return transfer_ordering(sh); }},
      {10, "replay buffer efficiency", 0, replay_efficiency},
      {11, "state machine conformance and episode suite", 900, [&] { return state_machine(sh); }},
      {12, "patch regressor gradient check", 0, gradient_check},
  };

  int run = 0, passed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    std::printf("criterion %2d running: %s\n", c.id, c.name.c_str());
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.budget_s <= 0.0 || secs < c.budget_s;
    const bool ok = o.pass && in_time;
    ++run;
    passed += ok;
    std::string timing = fmt("%.1f s", secs);
    if (c.budget_s > 0.0) timing += fmt(" of %.0f s", c.budget_s);
    std::printf("criterion %2d %s: %s | %s (%s)\n", c.id, ok ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d passed\n", passed, run);
  return passed == run ? 0 : 1;
}
