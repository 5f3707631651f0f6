#pragma once

#include "vtc/common.hpp"
#include "vtc/image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vtc {

/// Sensor geometry and synthesis constants. Sensor frame: x along the 30 mm side
/// (columns), y from the fingertip (row 0) toward the inner edge, millimeters.
struct TactileSensor {
  int width = 32;
  int height = 24;
  double pitch_mm = 0.9375;
  double dome_mm = 0.05;         // gel convexity at the center
  double gain = 1.0;             // imprint per mm of compressed fabric
  double texture = 0.15;         // multiplicative fabric texture
  double noise_mm = 0.008;       // additive noise on fabric pixels
  double onset_mm = 0.02;        // mean-imprint threshold for contact onset
  int markers_x = 8;
  int markers_y = 6;
  double grip_stiffness = 20.0;   // N per mm of marker displacement
  double marker_noise_mm = 0.005;

  double width_mm() const { return width * pitch_mm; }
  double height_mm() const { return height * pitch_mm; }
  /// Imprint threshold used by the estimator: three noise sigmas.
  double imprint_threshold() const { return 3.0 * noise_mm; }
  /// Gel baseline at sensor point (x, y); strictly positive.
  double baseline(double x_mm, double y_mm) const;
};

/// Gel indentation raster (mm) plus the marker positions of the shear grid (mm).
/// A depth of 0 marks an invalid pixel.
struct TactileFrame {
  Raster<double> depth;
  std::vector<Vec2> markers;
};

enum class GraspCategory { edge = 0, corner = 1, fold = 2, all_fabric = 3, no_fabric = 4 };
inline constexpr int kGraspCategories = 5;
const char* to_string(GraspCategory c);
GraspCategory grasp_category_from_string(const std::string& s);

enum class PoseClass { no_fabric, all_fabric, edge };
const char* to_string(PoseClass c);

struct EdgePose {
  PoseClass cls = PoseClass::no_fabric;
  double cx_mm = 0.0;
  double cy_mm = 0.0;
  double theta_deg = 0.0;  // (-90, 90]
  bool fallback = false;   // line fit degenerate; class from coverage only
};

/// Fabric layout in the sensor frame. For edge and fold the fabric covers the side of
/// the line through (cx, cy) at angle theta that contains the fingertip direction,
/// i.e. points p with (p - c) . (-sin theta, cos theta) <= 0. Corner additionally
/// requires (p - c) . (cos theta, sin theta) <= 0.
struct GraspScenario {
  GraspCategory category = GraspCategory::edge;
  double cx_mm = 15.0;
  double cy_mm = 11.25;
  double theta_deg = 0.0;
  int layers = 1;
  double thickness_mm = 0.4;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;  // 0 gives clean frames

  void validate() const;
};

double normalize_theta_deg(double deg);

/// Random scenario of the given category with the edge through the central region.
GraspScenario sample_scenario(GraspCategory cat, Rng& rng, const TactileSensor& sensor = {});

/// Ground-truth pose: class implied by the category, center at the chord midpoint of
/// the edge line inside the sensor rectangle.
EdgePose scenario_pose(const GraspScenario& scn, const TactileSensor& sensor = {});

TactileFrame synth_frame(const GraspScenario& scn, double grip_closure,
                         const TactileSensor& sensor = {});
/// Closure increases linearly from 0 to 1 over `n_frames` (at least 25).
std::vector<TactileFrame> synth_sequence(const GraspScenario& scn, int n_frames,
                                         const TactileSensor& sensor = {});

/// Per-pixel imprint (depth minus baseline); invalid pixels give NaN.
Raster<double> imprint(const TactileFrame& f, const TactileSensor& sensor = {});
/// Mean imprint over all valid pixels.
double mean_imprint(const TactileFrame& f, const TactileSensor& sensor = {});
/// Index of the first frame whose mean imprint exceeds the onset threshold, or size().
int onset_index(const std::vector<TactileFrame>& frames, const TactileSensor& sensor = {});

struct PoseFit {
  EdgePose pose;
  double coverage = 0.0;
  double covered_mean_mm = 0.0;
  double residual_mm = 0.0;  // median distance of crossings to the first line fit
  int crossings = 0;
};

inline constexpr double kCoverageLow = 0.05;
inline constexpr double kCoverageHigh = 0.95;

PoseFit fit_pose(const TactileFrame& f, const TactileSensor& sensor = {});
EdgePose estimate_pose(const TactileFrame& f, const TactileSensor& sensor = {});

/// Rigid motion of the sensor image: rotate by rotation_deg about the sensor center,
/// then translate. The clip threshold is a fraction of the frame's maximum depth.
struct AugmentTransform {
  double clip_fraction = 10.0;
  double rotation_deg = 0.0;
  double tx_mm = 0.0;
  double ty_mm = 0.0;
};

struct AugmentParams {
  double clip_lo = 0.85;
  double clip_hi = 1.2;
  double max_shift_mm = 3.0;
  double max_rotation_deg = 15.0;
  double min_chord_mm = 8.0;  // transforms leaving a shorter visible edge are resampled
};

AugmentTransform sample_transform(Rng& rng, PoseClass cls, const AugmentParams& params = {});

/// Applies `t` to the image and the label. Samples with any bilinear tap outside the
/// source or on an invalid pixel become invalid.
std::pair<TactileFrame, EdgePose> apply_augment(const TactileFrame& frame, const EdgePose& pose,
                                                const AugmentTransform& t,
                                                const TactileSensor& sensor = {});
std::pair<TactileFrame, EdgePose> augment(const TactileFrame& frame, const EdgePose& pose, Rng& rng,
                                          const AugmentParams& params = {},
                                          const TactileSensor& sensor = {});

/// Length of the edge line inside the region valid after `t`.
double visible_chord_mm(const EdgePose& pose, const AugmentTransform& t,
                        const TactileSensor& sensor = {});

// Grasp classification.

inline constexpr int kClassifierFrames = 5;
inline constexpr int kClassifierInterval = 5;
inline constexpr int kFeaturesPerFrame = 4;
inline constexpr int kFeatureCount = kClassifierFrames * kFeaturesPerFrame + 1;

using GraspFeatures = std::array<double, kFeatureCount>;

/// The last five frames at interval five.
std::vector<TactileFrame> sample_classifier_frames(const std::vector<TactileFrame>& sequence);
GraspFeatures grasp_features(const std::vector<TactileFrame>& frames,
                             const TactileSensor& sensor = {});

struct GraspLabel {
  GraspCategory category = GraspCategory::no_fabric;
  std::array<double, kGraspCategories> confidence{};
  double edge_confidence() const { return confidence[0]; }
};

struct TrainOptions {
  int epochs = 300;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

class GraspClassifier {
 public:
  GraspClassifier();

  static GraspClassifier train(const std::vector<GraspFeatures>& x,
                               const std::vector<GraspCategory>& y, const TrainOptions& opts = {});
  GraspLabel classify(const GraspFeatures& f) const;
  /// Exactly five frames, as returned by sample_classifier_frames.
  GraspLabel classify(const std::vector<TactileFrame>& frames,
                      const TactileSensor& sensor = {}) const;

  nlohmann::json to_json() const;
  static GraspClassifier from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static GraspClassifier load(const std::filesystem::path& path);

  double final_loss() const { return final_loss_; }

 private:
  std::array<double, kFeatureCount> mean_{};
  std::array<double, kFeatureCount> scale_{};
  std::vector<double> weights_;  // kGraspCategories x (kFeatureCount + 1), bias last
  double final_loss_ = 0.0;
};

struct TactileDatasetOptions {
  int raw_per_category = 330;
  int augment_per_raw = 19;  // augmented copies in addition to the raw sequence
  int n_frames = 25;
  AugmentParams augment;
};

struct LabeledFeatures {
  std::vector<GraspFeatures> x;
  std::vector<GraspCategory> y;
};

/// Raw scenarios per category plus augmented copies (same transform on all frames).
LabeledFeatures make_grasp_features(const TactileDatasetOptions& opts, std::uint64_t seed,
                                    const TactileSensor& sensor = {});

struct ClassifierReport {
  double accuracy = 0.0;
  double non_edge_binary_accuracy = 0.0;
  std::array<std::array<int, kGraspCategories>, kGraspCategories> confusion{};
};

ClassifierReport evaluate_classifier(const GraspClassifier& clf, const LabeledFeatures& data);

/// Classifies one simulated grasp attempt of the given scenario.
GraspLabel classify_scenario(const GraspClassifier& clf, const GraspScenario& scn,
                             const TactileSensor& sensor = {});

// Shear.

/// Marker grid under a tangential load (N) along the sensor x axis.
std::vector<Vec2> marker_field(double load_n, const TactileSensor& sensor = {});
/// Same grid with seeded tracking noise of sensor.marker_noise_mm per coordinate.
std::vector<Vec2> noisy_marker_field(double load_n, std::uint64_t seed,
                                     const TactileSensor& sensor = {});
/// Mean marker displacement magnitude between two frames (mm).
double shear_signal(const TactileFrame& current, const TactileFrame& reference);

// Persistence.

void write_tactile_frame(const std::filesystem::path& pgm_path, const TactileFrame& f);
/// One row per sample: category name, then the features.
void write_features_csv(const std::filesystem::path& path, const LabeledFeatures& data);
LabeledFeatures read_features_csv(const std::filesystem::path& path);
nlohmann::json pose_to_json(const EdgePose& p);
nlohmann::json scenario_to_json(const GraspScenario& s);

}  // namespace vtc
