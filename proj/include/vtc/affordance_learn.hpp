#pragma once

#include "vtc/common.hpp"
#include "vtc/dataset.hpp"
#include "vtc/tactile.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vtc {

struct PatchConfig {
  int radius = 10;             // 21x21 patch
  int hidden = 32;
  double depth_scale = 0.05;   // meters mapped to +-1 around the center depth
  double learning_rate = 1e-3; // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  int side() const { return 2 * radius + 1; }
  int inputs() const { return side() * side(); }
  void validate() const;
};

/// Normalized depth patch centered on (row, col): (d - d_center) / depth_scale clamped
/// to [-1, 1]; invalid or out-of-image pixels read as 1 (far background).
std::vector<double> extract_patch(const DepthImage& depth, int row, int col, const PatchConfig& cfg);

/// Patch -> tanh hidden layer -> sigmoid. Parameters are stored flat as
/// [W1 (hidden x inputs, row-major), b1, w2, b2].
class PatchRegressor {
 public:
  explicit PatchRegressor(const PatchConfig& cfg = {}, std::uint64_t seed = 0);

  const PatchConfig& config() const { return cfg_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<double>& parameters() const { return params_; }
  std::vector<double>& parameters() { return params_; }

  double predict(const double* patch) const;
  double predict(const std::vector<double>& patch) const { return predict(patch.data()); }

  /// Mean over the batch of (predict - target)^2, with its gradient in `grad`.
  double loss_and_gradient(const std::vector<const double*>& patches,
                           const std::vector<double>& targets, std::vector<double>& grad) const;

  /// One Adam step on the batch; returns the batch loss before the step.
  double train_step(const std::vector<const double*>& patches, const std::vector<double>& targets);
  void reset_optimizer();
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

  nlohmann::json to_json() const;
  static PatchRegressor from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static PatchRegressor load(const std::filesystem::path& path);

 private:
  PatchConfig cfg_;
  std::vector<double> params_;
  std::vector<double> m_, v_;
  long step_ = 0;
};

// Pretraining.

struct TrainingImage {
  DepthImage depth;
  DepthImage depth_aug;
  Raster<double> affordance;
};

/// Loads every pair listed in the manifest.
std::vector<TrainingImage> load_training_images(const DatasetManifest& manifest);

/// How scene configurations are suspended: from a random boundary node (the dataset
/// protocol) or from a random corner (the state after a successful corner grasp).
enum class Hanging { boundary, corner };

/// Renders and labels `n_configs` x 24 scenes of `env` in memory.
std::vector<SceneSample> make_scenes(const EnvParams& env, int n_configs, std::uint64_t seed,
                                     bool with_labels = true, Hanging hanging = Hanging::boundary);
std::vector<TrainingImage> to_training_images(const std::vector<SceneSample>& scenes);

struct PretrainOptions {
  int epochs = 3;
  int patches_per_image = 64;
  int batch_size = 32;
  double aug_probability = 0.5;  // chance of drawing from the black-rectangle copy
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  double final_loss = 0.0;   // mean batch loss over the last epoch
  double initial_val_mse = 0.0;
  double val_mse = 0.0;
  std::vector<double> epoch_loss;
};

/// Per-pixel MSE with patches sampled uniformly over cloth pixels.
PretrainReport pretrain(PatchRegressor& model, const std::vector<TrainingImage>& images,
                        const PretrainOptions& opts);

/// Mean squared error over every cloth pixel of the given images.
double pixel_mse(const PatchRegressor& model, const std::vector<TrainingImage>& images);

// Inference.

/// Model output at every pixel where mask and depth are nonzero; 0 elsewhere.
Raster<double> predict_map(const PatchRegressor& model, const DepthImage& depth, const PixelMask& mask);

struct GraspChoice {
  bool rotate = true;
  int row = -1;
  int col = -1;
  double value = 0.0;
};

/// Argmax over the reach mask (ties to the lowest row, then column); rotate when the
/// mask is empty or the maximum is below the threshold.
GraspChoice select_grasp(const Raster<double>& map, const PixelMask& reach, double threshold);

// Fine-tuning.

enum class SampleSource { pretrain, online };

struct ReplaySample {
  std::vector<double> patch;
  int row = 0;
  int col = 0;
  double label = 0.0;
  SampleSource source = SampleSource::online;

  bool positive() const { return label >= 0.5; }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  std::size_t positives() const { return positives_; }
  std::size_t negatives() const { return items_.size() - positives_; }
  const ReplaySample& operator[](std::size_t i) const { return items_[i]; }
  const ReplaySample& front() const { return items_.front(); }

  /// Appends, evicting the oldest sample when full.
  void push(ReplaySample s);
  /// Up to n indices, half positive and half negative when both classes are present.
  std::vector<std::size_t> sample_balanced(std::size_t n, Rng& rng) const;
  /// n indices of the given class, or balanced ones when that class is absent.
  std::vector<std::size_t> sample_class(std::size_t n, bool positive, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<ReplaySample> items_;
  std::size_t positives_ = 0;
};

struct FinetuneOptions {
  int neighborhood = 3;  // Chebyshev radius of pixels sharing the label
  int batch_size = 32;
  bool use_replay = true;
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.1;  // online runs decay linearly to this fraction
};

/// The sample plus its neighbors with valid depth, all carrying the sample's label.
std::vector<ReplaySample> expand_neighborhood(const DepthImage& depth, int row, int col,
                                              double label, const PatchConfig& cfg,
                                              int neighborhood = 3);

/// Pushes the group into the buffer and takes one gradient step on a minibatch of half
/// new-group samples and half replay of the opposite class, so the batch is balanced.
/// Without replay the whole batch comes from the group. Returns the batch loss.
double finetune_step(PatchRegressor& model, ReplayBuffer& buffer,
                     const std::vector<ReplaySample>& group, Rng& rng,
                     const FinetuneOptions& opts = {});

// Evaluation.

struct LabeledPatch {
  std::vector<double> patch;
  bool positive = false;
  double oracle = 0.0;  // geometric affordance
};

/// Fraction of positives among the k best scores; ties keep input order.
double precision_at_k(const std::vector<double>& scores, const std::vector<bool>& labels, int k);
double precision_at_k(const PatchRegressor& model, const std::vector<LabeledPatch>& set, int k);

/// Threshold among the held-out scores maximizing precision of the accepted set
/// (at least k accepted); the lowest such score.
double tune_threshold(const PatchRegressor& model, const std::vector<LabeledPatch>& set, int k);

// Simulated grasp attempts.

inline constexpr double kPositiveAffordance = 0.5;

struct GraspOutcome {
  GraspCategory truth = GraspCategory::no_fabric;
  double affordance = 0.0;
  double edge_confidence = 0.0;
};

/// Grasp category implied by the geometry under pixel (row, col): unreachable or
/// colliding grasps miss (no_fabric), multi-layer grasps are folds, grasps whose edge
/// fraction reaches kPositiveAffordance are edges, anything else is all fabric.
GraspCategory grasp_category_at(const SceneSample& scene, const LabelParams& label, int row, int col,
                                double* affordance = nullptr);

/// Geometry -> tactile scenario -> five-frame classification.
GraspOutcome attempt_grasp(const SceneSample& scene, const LabelParams& label, int row, int col,
                           const GraspClassifier& clf, std::uint64_t seed,
                           const TactileSensor& sensor = {});

// Transfer experiment.

/// The target environment: camera moved closer and around the cloth, cloth resized and
/// softened.
EnvParams default_target_env(const EnvParams& source);

struct TransferOptions {
  int source_configs = 40;
  int target_configs = 30;
  int heldout_configs = 12;
  int heldout_size = 110;
  int heldout_positives = 44;
  int k = 40;
  double epsilon = 0.2;  // chance of a uniformly random reachable grasp
  int eval_interval = 50;
  int convergence_window = 4;  // curve points averaged when testing a stop precision
  Hanging target_hanging = Hanging::corner;  // online and held-out target scenes
  std::size_t replay_prefill = 5000;  // labeled source samples seeding the fine-tuning buffer
  PatchConfig patch;
  PretrainOptions pretrain;
  FinetuneOptions finetune;
  TactileDatasetOptions classifier{60, 4, 25, {}};
};

struct LearningCurvePoint {
  int grasps = 0;
  double precision = 0.0;
};

/// Everything the online phase needs: scenes, classifier and held-out set.
struct TargetWorld {
  EnvParams env;
  std::vector<SceneSample> scenes;
  std::vector<LabeledPatch> heldout;
  GraspClassifier classifier;
};

TargetWorld make_target_world(const EnvParams& target, const TransferOptions& opts,
                              std::uint64_t seed);

/// One executed grasp: where, and the tactile edge confidence it produced.
struct GraspRecord {
  int scene = 0;
  int row = 0;
  int col = 0;
  double label = 0.0;
  GraspCategory truth = GraspCategory::no_fabric;
};

struct OnlineResult {
  std::vector<GraspRecord> log;
  std::vector<LearningCurvePoint> curve;
  int grasps = 0;
  int positives = 0;
  int reached_at = -1;  // first curve point whose window mean reaches the stop precision
};

/// Epsilon-greedy grasping on the target scenes with tactile labels and fine-tuning.
/// Stops early once precision@k reaches stop_precision (if positive).
/// `prefill` seeds the replay buffer (e.g. labeled source samples); FIFO eviction
/// retires them as online samples arrive.
OnlineResult online_finetune(PatchRegressor& model, const TargetWorld& world, int grasp_budget,
                             std::uint64_t seed, const TransferOptions& opts,
                             double stop_precision = -1.0,
                             const std::vector<ReplaySample>& prefill = {});

/// Balanced labeled samples from training images, tagged as pretraining data.
std::vector<ReplaySample> source_replay_samples(const std::vector<TrainingImage>& images,
                                                std::size_t count, const PatchConfig& cfg,
                                                std::uint64_t seed);

/// Fine-tunes on a previously collected grasp log in its original order, with the same
/// neighborhood expansion and replay as the online run.
OnlineResult replay_finetune(PatchRegressor& model, const TargetWorld& world,
                             const std::vector<GraspRecord>& log, std::uint64_t seed,
                             const TransferOptions& opts);

struct TransferReport {
  std::uint64_t seed = 0;
  int k = 40;
  int grasp_budget = 0;
  int heldout_size = 0;
  int heldout_positives = 0;
  double source_only = 0.0;
  double target_scratch = 0.0;
  double source_finetuned = 0.0;
  double oracle = 0.0;
  PretrainReport pretrain;
  std::vector<LearningCurvePoint> scratch_curve;
  std::vector<LearningCurvePoint> finetune_curve;

  nlohmann::json to_json() const;
};

struct TransferModels {
  PatchRegressor source_only;
  PatchRegressor target_scratch;
  PatchRegressor source_finetuned;
};

TransferReport run_transfer_experiment(const EnvParams& source, const EnvParams& target,
                                       int grasp_budget, std::uint64_t seed,
                                       const TransferOptions& opts = {},
                                       TransferModels* models = nullptr);

/// Grasps needed by the source-pretrained model to reach `target_precision` on the
/// held-out set with and without the replay buffer (-1 when the budget runs out).
struct ReplayComparison {
  std::uint64_t seed = 0;
  double target_precision = 0.0;
  int grasp_budget = 0;
  int with_replay = -1;
  int without_replay = -1;
  std::vector<LearningCurvePoint> replay_curve;
  std::vector<LearningCurvePoint> no_replay_curve;

  /// Replay reached the target and did so in fewer grasps.
  bool replay_wins() const {
    return with_replay >= 0 && (without_replay < 0 || with_replay < without_replay);
  }
  nlohmann::json to_json() const;
};

ReplayComparison run_replay_experiment(const EnvParams& source, const EnvParams& target,
                                       int grasp_budget, double target_precision,
                                       std::uint64_t seed, const TransferOptions& opts = {});

void write_curve_csv(const std::filesystem::path& path,
                     const std::vector<LearningCurvePoint>& curve);

}  // namespace vtc
