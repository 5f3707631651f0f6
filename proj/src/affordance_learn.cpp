#include "vtc/affordance_learn.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace vtc {

void PatchConfig::validate() const {
  if (radius < 1 || hidden < 1) throw ContractError("patch config: radius and hidden must be >= 1");
  if (!(depth_scale > 0.0)) throw ContractError("patch config: depth_scale must be positive");
  if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    throw ContractError("patch config: bad optimizer settings");
  }
}

std::vector<double> extract_patch(const DepthImage& depth, int row, int col, const PatchConfig& cfg) {
  if (!depth.contains(row, col)) throw ContractError("extract_patch: center outside the image");
  const int r = cfg.radius;
  std::vector<double> out(static_cast<std::size_t>(cfg.inputs()), 1.0);
  const double dc = depth(row, col);
  if (!(dc > 0.0)) return out;
  std::size_t k = 0;
  for (int dr = -r; dr <= r; ++dr) {
    for (int dq = -r; dq <= r; ++dq, ++k) {
      const int rr = row + dr, cc = col + dq;
      if (!depth.contains(rr, cc)) continue;
      const double d = depth(rr, cc);
      if (!(d > 0.0)) continue;
      out[k] = std::clamp((d - dc) / cfg.depth_scale, -1.0, 1.0);
    }
  }
  return out;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Layout {
  std::size_t n_in, n_h;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return n_in * n_h; }
  std::size_t w2() const { return b1() + n_h; }
  std::size_t b2() const { return w2() + n_h; }
  std::size_t total() const { return b2() + 1; }
};

Layout layout(const PatchConfig& c) {
  return {static_cast<std::size_t>(c.inputs()), static_cast<std::size_t>(c.hidden)};
}

// Hidden activations into h; returns the output logit.
double forward(const std::vector<double>& p, const Layout& L, const double* x, double* h) {
  double z2 = p[L.b2()];
  for (std::size_t j = 0; j < L.n_h; ++j) {
    const double* w = p.data() + L.w1() + j * L.n_in;
    double z = p[L.b1() + j];
    for (std::size_t i = 0; i < L.n_in; ++i) z += w[i] * x[i];
    h[j] = std::tanh(z);
    z2 += p[L.w2() + j] * h[j];
  }
  return z2;
}

}  // namespace

PatchRegressor::PatchRegressor(const PatchConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const Layout L = layout(cfg_);
  params_.assign(L.total(), 0.0);
  Rng rng(derive_seed(seed, 0xA11Cu));
  const double a1 = std::sqrt(6.0 / static_cast<double>(L.n_in + L.n_h));
  for (std::size_t i = 0; i < L.n_in * L.n_h; ++i) params_[L.w1() + i] = uniform(rng, -a1, a1);
  const double a2 = std::sqrt(6.0 / static_cast<double>(L.n_h + 1));
  for (std::size_t j = 0; j < L.n_h; ++j) params_[L.w2() + j] = uniform(rng, -a2, a2);
  reset_optimizer();
}

void PatchRegressor::reset_optimizer() {
  m_.assign(params_.size(), 0.0);
  v_.assign(params_.size(), 0.0);
  step_ = 0;
}

double PatchRegressor::predict(const double* patch) const {
  const Layout L = layout(cfg_);
  std::vector<double> h(L.n_h);
  return sigmoid(forward(params_, L, patch, h.data()));
}

double PatchRegressor::loss_and_gradient(const std::vector<const double*>& patches,
                                         const std::vector<double>& targets,
                                         std::vector<double>& grad) const {
  if (patches.size() != targets.size() || patches.empty()) {
    throw ContractError("loss_and_gradient: need matching, nonempty batch");
  }
  const Layout L = layout(cfg_);
  grad.assign(params_.size(), 0.0);
  std::vector<double> h(L.n_h);
  const double inv_n = 1.0 / static_cast<double>(patches.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < patches.size(); ++s) {
    const double* x = patches[s];
    const double o = sigmoid(forward(params_, L, x, h.data()));
    const double err = o - targets[s];
    loss += err * err * inv_n;
    const double g2 = 2.0 * err * inv_n * o * (1.0 - o);
    grad[L.b2()] += g2;
    for (std::size_t j = 0; j < L.n_h; ++j) {
      grad[L.w2() + j] += g2 * h[j];
      const double g1 = g2 * params_[L.w2() + j] * (1.0 - h[j] * h[j]);
      grad[L.b1() + j] += g1;
      double* gw = grad.data() + L.w1() + j * L.n_in;
      for (std::size_t i = 0; i < L.n_in; ++i) gw[i] += g1 * x[i];
    }
  }
  return loss;
}

double PatchRegressor::train_step(const std::vector<const double*>& patches,
                                  const std::vector<double>& targets) {
  std::vector<double> g;
  const double loss = loss_and_gradient(patches, targets, g);
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss", step_);
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
    params_[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
  }
  return loss;
}

nlohmann::json PatchRegressor::to_json() const {
  return {{"format", "vtc.patch_regressor"},
          {"version", 1},
          {"radius", cfg_.radius},
          {"hidden", cfg_.hidden},
          {"depth_scale", cfg_.depth_scale},
          {"learning_rate", cfg_.learning_rate},
          {"parameters", params_}};
}

PatchRegressor PatchRegressor::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "vtc.patch_regressor") {
      throw ContractError("model document: unexpected format tag");
    }
    if (doc.at("version").get<int>() != 1) throw ContractError("model document: unsupported version");
    PatchConfig cfg;
    cfg.radius = doc.at("radius");
    cfg.hidden = doc.at("hidden");
    cfg.depth_scale = doc.at("depth_scale");
    cfg.learning_rate = doc.value("learning_rate", cfg.learning_rate);
    PatchRegressor m(cfg, 0);
    auto p = doc.at("parameters").get<std::vector<double>>();
    if (p.size() != m.params_.size()) throw ContractError("model document: parameter count mismatch");
    for (double v : p) {
      if (!std::isfinite(v)) throw ContractError("model document: non-finite parameter");
    }
    m.params_ = std::move(p);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("model document: ") + e.what());
  }
}

void PatchRegressor::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

PatchRegressor PatchRegressor::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed model " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

std::vector<TrainingImage> load_training_images(const DatasetManifest& manifest) {
  std::vector<TrainingImage> out;
  out.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    LoadedPair p = load_pair(manifest, e);
    out.push_back({std::move(p.depth), std::move(p.depth_aug), std::move(p.affordance)});
  }
  return out;
}

std::vector<SceneSample> make_scenes(const EnvParams& env, int n_configs, std::uint64_t seed,
                                     bool with_labels, Hanging hanging) {
  if (n_configs < 1) throw ContractError("make_scenes: need at least one configuration");
  const double inc = env.configuration.rotation_increment_deg;
  const int n_rot = static_cast<int>(std::lround(360.0 / inc));
  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(n_configs) * n_rot);
  for (int c = 0; c < n_configs; ++c) {
    const std::uint64_t cseed = configuration_seed(seed, c);
    ClothMesh settled;
    if (hanging == Hanging::corner) {
      const int gw = env.cloth.grid_w, gh = env.cloth.grid_h;
      const std::size_t corners[4] = {0, static_cast<std::size_t>(gw - 1), static_cast<std::size_t>((gh - 1) * gw),
                                      static_cast<std::size_t>(gh * gw - 1)};
      Rng rng(derive_seed(cseed, 0xC0u));
      settled = hang_from_node(env.cloth, corners[uniform_int(rng, 0, 3)], cseed, env.configuration);
    } else {
      settled = make_configuration(env.cloth, cseed, 0.0, env.configuration);
    }
    for (int r = 0; r < n_rot; ++r) out.push_back(make_scene(env, settled, cseed, r * inc, with_labels));
  }
  return out;
}

std::vector<TrainingImage> to_training_images(const std::vector<SceneSample>& scenes) {
  std::vector<TrainingImage> out;
  out.reserve(scenes.size());
  for (const SceneSample& s : scenes) out.push_back({s.scene.depth, s.depth_aug, s.affordance.values});
  return out;
}

namespace {

std::vector<int> valid_pixels(const DepthImage& d) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

}  // namespace

double pixel_mse(const PatchRegressor& model, const std::vector<TrainingImage>& images) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TrainingImage& im : images) {
    const PixelMask all(im.depth.width(), im.depth.height(), 1);
    const Raster<double> pred = predict_map(model, im.depth, all);
    for (int i : valid_pixels(im.depth)) {
      const double e = pred[i] - im.affordance[i];
      sum += e * e;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

PretrainReport pretrain(PatchRegressor& model, const std::vector<TrainingImage>& images,
                        const PretrainOptions& opts) {
  if (images.empty()) throw ContractError("pretrain: no images");
  if (opts.epochs < 0 || opts.patches_per_image < 1 || opts.batch_size < 1) {
    throw ContractError("pretrain: bad epoch, patch or batch counts");
  }
  if (!(opts.val_fraction >= 0.0 && opts.val_fraction < 1.0)) {
    throw ContractError("pretrain: val_fraction must be in [0, 1)");
  }
  Rng rng(derive_seed(opts.seed, 0x9E7Au));
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(opts.val_fraction * static_cast<double>(images.size()));
  std::vector<TrainingImage> val;
  for (std::size_t i = 0; i < n_val; ++i) val.push_back(images[order[i]]);
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (train.empty()) throw ContractError("pretrain: validation split leaves no training images");

  PretrainReport rep;
  if (!val.empty()) rep.initial_val_mse = pixel_mse(model, val);
  const PatchConfig& cfg = model.config();
  std::vector<std::vector<double>> store;
  std::vector<double> targets;
  long iteration = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double loss_sum = 0.0;
    long batches = 0;
    auto flush = [&] {
      std::vector<const double*> ptrs;
      for (const auto& p : store) ptrs.push_back(p.data());
      const double loss = model.train_step(ptrs, targets);
      if (!std::isfinite(loss)) throw TrainingError("pretrain: non-finite loss", iteration);
      loss_sum += loss;
      ++batches;
      ++iteration;
      store.clear();
      targets.clear();
    };
    for (std::size_t ii : train) {
      const TrainingImage& im = images[ii];
      const bool aug = !im.depth_aug.data().empty() && uniform(rng, 0.0, 1.0) < opts.aug_probability;
      const DepthImage& input = aug ? im.depth_aug : im.depth;
      const std::vector<int> pix = valid_pixels(input);
      if (pix.empty()) continue;
      for (int k = 0; k < opts.patches_per_image; ++k) {
        const int i = pix[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pix.size()) - 1))];
        const int row = i / input.width(), col = i % input.width();
        store.push_back(extract_patch(input, row, col, cfg));
        targets.push_back(im.affordance[static_cast<std::size_t>(i)]);
        if (static_cast<int>(store.size()) == opts.batch_size) flush();
      }
    }
    if (!store.empty()) flush();
    rep.epoch_loss.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
  }
  rep.final_loss = rep.epoch_loss.empty() ? 0.0 : rep.epoch_loss.back();
  if (!val.empty()) rep.val_mse = pixel_mse(model, val);
  return rep;
}

Raster<double> predict_map(const PatchRegressor& model, const DepthImage& depth, const PixelMask& mask) {
  if (mask.width() != depth.width() || mask.height() != depth.height()) {
    throw ContractError("predict_map: mask and depth sizes differ");
  }
  Raster<double> out(depth.width(), depth.height(), 0.0);
  for (int r = 0; r < depth.height(); ++r) {
    for (int c = 0; c < depth.width(); ++c) {
      if (!mask(r, c) || !(depth(r, c) > 0.0)) continue;
      out(r, c) = model.predict(extract_patch(depth, r, c, model.config()));
    }
  }
  return out;
}

GraspChoice select_grasp(const Raster<double>& map, const PixelMask& reach, double threshold) {
  if (map.width() != reach.width() || map.height() != reach.height()) {
    throw ContractError("select_grasp: map and mask sizes differ");
  }
  GraspChoice best;
  bool any = false;
  for (int r = 0; r < map.height(); ++r) {
    for (int c = 0; c < map.width(); ++c) {
      if (!reach(r, c)) continue;
      if (!any || map(r, c) > best.value) {
        best.row = r;
        best.col = c;
        best.value = map(r, c);
        any = true;
      }
    }
  }
  best.rotate = !any || best.value < threshold;
  return best;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(ReplaySample s) {
  if (!(s.label >= 0.0 && s.label <= 1.0)) throw ContractError("ReplayBuffer: label outside [0, 1]");
  if (items_.size() == capacity_) {
    positives_ -= items_.front().positive() ? 1 : 0;
    items_.pop_front();
  }
  positives_ += s.positive() ? 1 : 0;
  items_.push_back(std::move(s));
}

std::vector<std::size_t> ReplayBuffer::sample_balanced(std::size_t n, Rng& rng) const {
  std::vector<std::size_t> pos, neg, out;
  if (items_.empty() || n == 0) return out;
  for (std::size_t i = 0; i < items_.size(); ++i) (items_[i].positive() ? pos : neg).push_back(i);
  auto draw = [&](const std::vector<std::size_t>& from, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      out.push_back(from[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(from.size()) - 1))]);
    }
  };
  if (pos.empty() || neg.empty()) {
    draw(pos.empty() ? neg : pos, n);
  } else {
    draw(pos, n / 2);
    draw(neg, n - n / 2);
  }
  return out;
}

std::vector<std::size_t> ReplayBuffer::sample_class(std::size_t n, bool positive, Rng& rng) const {
  std::vector<std::size_t> from;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].positive() == positive) from.push_back(i);
  }
  if (from.empty()) return sample_balanced(n, rng);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n; ++k) {
    out.push_back(from[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(from.size()) - 1))]);
  }
  return out;
}

std::vector<ReplaySample> expand_neighborhood(const DepthImage& depth, int row, int col,
                                              double label, const PatchConfig& cfg,
                                              int neighborhood) {
  if (!depth.contains(row, col)) throw ContractError("expand_neighborhood: pixel outside the image");
  if (neighborhood < 0) throw ContractError("expand_neighborhood: negative radius");
  std::vector<ReplaySample> group;
  for (int dr = -neighborhood; dr <= neighborhood; ++dr) {
    for (int dc = -neighborhood; dc <= neighborhood; ++dc) {
      const int r = row + dr, c = col + dc;
      if (!depth.contains(r, c) || !(depth(r, c) > 0.0)) continue;
      ReplaySample s;
      s.patch = extract_patch(depth, r, c, cfg);
      s.row = r;
      s.col = c;
      s.label = label;
      group.push_back(std::move(s));
    }
  }
  // The selected pixel goes first.
  std::stable_partition(group.begin(), group.end(),
                        [&](const ReplaySample& s) { return s.row == row && s.col == col; });
  return group;
}

double finetune_step(PatchRegressor& model, ReplayBuffer& buffer,
                     const std::vector<ReplaySample>& group, Rng& rng, const FinetuneOptions& opts) {
  if (group.empty()) throw ContractError("finetune_step: empty sample group");
  if (opts.batch_size < 2) throw ContractError("finetune_step: batch size must be >= 2");
  model.set_learning_rate(opts.learning_rate);
  std::vector<const double*> patches;
  std::vector<double> targets;
  auto take_group = [&](std::size_t count) {
    std::vector<std::size_t> idx(group.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin() + 1, idx.end(), rng);  // the selected pixel always trains
    for (std::size_t k = 0; k < count; ++k) {
      const ReplaySample& s = group[idx[k % idx.size()]];
      patches.push_back(s.patch.data());
      targets.push_back(s.label);
    }
  };
  const auto batch = static_cast<std::size_t>(opts.batch_size);
  if (!opts.use_replay || buffer.size() == 0) {
    take_group(opts.use_replay ? std::min(batch, group.size()) : batch);
    const double loss = model.train_step(patches, targets);
    if (opts.use_replay) {
      for (const ReplaySample& s : group) buffer.push(s);
    }
    return loss;
  }
  // Replayed samples are drawn before the new group enters the buffer.
  const std::size_t n_new = batch / 2;
  take_group(n_new);
  const std::vector<std::size_t> replay = buffer.sample_class(batch - n_new, !group.front().positive(), rng);
  for (std::size_t i : replay) {
    patches.push_back(buffer[i].patch.data());
    targets.push_back(buffer[i].label);
  }
  const double loss = model.train_step(patches, targets);
  for (const ReplaySample& s : group) buffer.push(s);
  return loss;
}

double precision_at_k(const std::vector<double>& scores, const std::vector<bool>& labels, int k) {
  if (scores.size() != labels.size()) throw ContractError("precision_at_k: size mismatch");
  if (k < 1 || static_cast<std::size_t>(k) > scores.size()) {
    throw ContractError("precision_at_k: k must be in [1, set size]");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  int hits = 0;
  for (int i = 0; i < k; ++i) hits += labels[idx[static_cast<std::size_t>(i)]] ? 1 : 0;
  return static_cast<double>(hits) / k;
}

double precision_at_k(const PatchRegressor& model, const std::vector<LabeledPatch>& set, int k) {
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const LabeledPatch& p : set) {
    scores.push_back(model.predict(p.patch));
    labels.push_back(p.positive);
  }
  return precision_at_k(scores, labels, k);
}

double tune_threshold(const PatchRegressor& model, const std::vector<LabeledPatch>& set, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > set.size()) {
    throw ContractError("tune_threshold: k must be in [1, set size]");
  }
  std::vector<std::pair<double, bool>> s;
  for (const LabeledPatch& p : set) s.emplace_back(model.predict(p.patch), p.positive);
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double best_prec = -1.0, best_thr = s[static_cast<std::size_t>(k) - 1].first;
  int hits = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    hits += s[i].second ? 1 : 0;
    if (static_cast<int>(i) + 1 < k) continue;
    if (i + 1 < s.size() && s[i + 1].first == s[i].first) continue;
    const double prec = static_cast<double>(hits) / static_cast<double>(i + 1);
    if (prec > best_prec) {
      best_prec = prec;
      best_thr = s[i].first;
    }
  }
  return best_thr;
}

GraspCategory grasp_category_at(const SceneSample& scene, const LabelParams& label, int row, int col,
                                double* affordance) {
  if (affordance) *affordance = 0.0;
  const auto p = back_project(scene.mesh, scene.scene.hits, row, col);
  if (!p) return GraspCategory::no_fabric;
  const AffordanceLabeler labeler(scene.mesh, label);
  const GripperBox g = labeler.box_at(*p, scene.affordance.orientation);
  if (!labeler.reachable(g) || !labeler.collision_free(g)) return GraspCategory::no_fabric;
  if (!labeler.single_layer(g)) return GraspCategory::fold;
  const double e = labeler.edge_percentage(g);
  if (affordance) *affordance = e;
  return e >= kPositiveAffordance ? GraspCategory::edge : GraspCategory::all_fabric;
}

GraspOutcome attempt_grasp(const SceneSample& scene, const LabelParams& label, int row, int col,
                           const GraspClassifier& clf, std::uint64_t seed, const TactileSensor& sensor) {
  GraspOutcome out;
  out.truth = grasp_category_at(scene, label, row, col, &out.affordance);
  Rng rng(derive_seed(seed, 0x6A5Bu));
  GraspScenario scn = sample_scenario(out.truth, rng, sensor);
  scn.seed = derive_seed(seed, 0x6A5Cu);
  out.edge_confidence = classify_scenario(clf, scn, sensor).edge_confidence();
  return out;
}

EnvParams default_target_env(const EnvParams& source) {
  EnvParams t = source;
  const ClothParams& c = source.cloth;
  t.cloth = ClothParams::standard(c.width_m * 1.15, c.height_m * 0.9, c.grid_w, c.grid_h);
  t.cloth.node_mass = c.node_mass;
  t.cloth.damping = c.damping;
  t.cloth.stretch_stiffness = 0.6 * c.stretch_stiffness;
  t.cloth.shear_stiffness = 0.6 * c.shear_stiffness;
  t.cloth.bend_stiffness = 0.5 * c.bend_stiffness;
  // Same height and target point, 135 degrees around the vertical, at 0.5 m.
  const double yaw = deg2rad(135.0), dist = 0.5;
  const Vec3 look = source.camera.look_at;
  t.camera.position = look + Vec3(dist * std::sin(yaw), -dist * std::cos(yaw), 0.0);
  return t;
}

namespace {

constexpr int kSilhouetteRadius = 2;

std::vector<LabeledPatch> make_heldout(const std::vector<SceneSample>& scenes, const PatchConfig& cfg,
                                       const TransferOptions& opts, std::uint64_t seed) {
  struct Ref {
    std::size_t scene;
    int pixel;
  };
  // Negatives are split between silhouette pixels (near background, so they look like
  // edges) and the rest of the reachable cloth.
  std::vector<Ref> pos, rim, inner;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const DepthImage& d = scenes[s].scene.depth;
    const SceneSample& sc = scenes[s];
    for (std::size_t i = 0; i < sc.reach.size(); ++i) {
      if (!sc.reach[i] || !(d[i] > 0.0)) continue;
      if (sc.affordance.values[i] >= kPositiveAffordance) {
        pos.push_back({s, static_cast<int>(i)});
        continue;
      }
      const int r = static_cast<int>(i) / d.width(), c = static_cast<int>(i) % d.width();
      bool near_bg = false;
      for (int dr = -kSilhouetteRadius; dr <= kSilhouetteRadius && !near_bg; ++dr) {
        for (int dc = -kSilhouetteRadius; dc <= kSilhouetteRadius; ++dc) {
          if (!d.contains(r + dr, c + dc) || !(d(r + dr, c + dc) > 0.0)) {
            near_bg = true;
            break;
          }
        }
      }
      (near_bg ? rim : inner).push_back({s, static_cast<int>(i)});
    }
  }
  const auto n_pos = static_cast<std::size_t>(opts.heldout_positives);
  const auto n_neg = static_cast<std::size_t>(opts.heldout_size - opts.heldout_positives);
  const std::size_t n_rim = n_neg / 2, n_inner = n_neg - n_rim;
  if (pos.size() < n_pos || rim.size() < n_rim || inner.size() < n_inner) {
    throw ContractError("held-out set: not enough labeled pixels in the held-out scenes");
  }
  Rng rng(derive_seed(seed, 0x4E1Du));
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(rim.begin(), rim.end(), rng);
  std::shuffle(inner.begin(), inner.end(), rng);
  std::vector<Ref> picked(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos));
  picked.insert(picked.end(), rim.begin(), rim.begin() + static_cast<std::ptrdiff_t>(n_rim));
  picked.insert(picked.end(), inner.begin(), inner.begin() + static_cast<std::ptrdiff_t>(n_inner));
  std::shuffle(picked.begin(), picked.end(), rng);
  std::vector<LabeledPatch> out;
  for (const Ref& r : picked) {
    const SceneSample& sc = scenes[r.scene];
    const int w = sc.scene.depth.width();
    LabeledPatch p;
    p.patch = extract_patch(sc.scene.depth, r.pixel / w, r.pixel % w, cfg);
    p.oracle = sc.affordance.values[static_cast<std::size_t>(r.pixel)];
    p.positive = p.oracle >= kPositiveAffordance;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TargetWorld make_target_world(const EnvParams& target, const TransferOptions& opts,
                              std::uint64_t seed) {
  if (opts.heldout_positives < 0 || opts.heldout_positives > opts.heldout_size || opts.k < 1 ||
      opts.k > opts.heldout_size) {
    throw ContractError("transfer options: inconsistent held-out sizes");
  }
  TargetWorld w;
  w.env = target;
  w.scenes = make_scenes(target, opts.target_configs, derive_seed(seed, 0x7A61u), true, opts.target_hanging);
  {
    const std::vector<SceneSample> held =
        make_scenes(target, opts.heldout_configs, derive_seed(seed, 0x7A62u), true, opts.target_hanging);
    w.heldout = make_heldout(held, opts.patch, opts, seed);
  }
  const LabeledFeatures feats = make_grasp_features(opts.classifier, derive_seed(seed, 0x7A63u));
  w.classifier = GraspClassifier::train(feats.x, feats.y);
  return w;
}

namespace {

FinetuneOptions decayed(FinetuneOptions o, int grasp, int budget) {
  if (budget > 1) {
    const double t = static_cast<double>(grasp) / static_cast<double>(budget - 1);
    o.learning_rate *= 1.0 - (1.0 - o.final_lr_fraction) * t;
  }
  return o;
}

}  // namespace

std::vector<ReplaySample> source_replay_samples(const std::vector<TrainingImage>& images,
                                                std::size_t count, const PatchConfig& cfg,
                                                std::uint64_t seed) {
  std::vector<std::pair<std::size_t, int>> pos, neg;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const TrainingImage& im = images[i];
    for (std::size_t p = 0; p < im.depth.size(); ++p) {
      if (!(im.depth[p] > 0.0)) continue;
      (im.affordance[p] >= kPositiveAffordance ? pos : neg).emplace_back(i, static_cast<int>(p));
    }
  }
  std::vector<ReplaySample> out;
  if (count == 0 || (pos.empty() && neg.empty())) return out;
  Rng rng(derive_seed(seed, 0x5A3Du));
  for (std::size_t k = 0; k < count; ++k) {
    const auto& from = (k % 2 == 0 && !pos.empty()) || neg.empty() ? pos : neg;
    const auto [i, p] = from[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(from.size()) - 1))];
    const DepthImage& d = images[i].depth;
    ReplaySample s;
    s.row = p / d.width();
    s.col = p % d.width();
    s.patch = extract_patch(d, s.row, s.col, cfg);
    s.label = images[i].affordance[static_cast<std::size_t>(p)];
    s.source = SampleSource::pretrain;
    out.push_back(std::move(s));
  }
  return out;
}

OnlineResult online_finetune(PatchRegressor& model, const TargetWorld& world, int grasp_budget,
                             std::uint64_t seed, const TransferOptions& opts, double stop_precision,
                             const std::vector<ReplaySample>& prefill) {
  if (grasp_budget < 0) throw ContractError("online_finetune: negative grasp budget");
  if (world.scenes.empty()) throw ContractError("online_finetune: no target scenes");
  if (opts.eval_interval < 1 || opts.convergence_window < 1) {
    throw ContractError("online_finetune: eval interval and convergence window must be positive");
  }
  Rng rng(derive_seed(seed, 0x0F1Eu));
  ReplayBuffer buffer;
  for (const ReplaySample& s : prefill) buffer.push(s);
  model.reset_optimizer();
  OnlineResult res;
  auto evaluate = [&](int grasps) {
    const double p = precision_at_k(model, world.heldout, opts.k);
    res.curve.push_back({grasps, p});
    const std::size_t w = static_cast<std::size_t>(opts.convergence_window);
    if (stop_precision > 0.0 && res.reached_at < 0 && res.curve.size() >= w) {
      double mean = 0.0;
      for (std::size_t i = res.curve.size() - w; i < res.curve.size(); ++i) mean += res.curve[i].precision;
      if (mean / static_cast<double>(w) >= stop_precision) res.reached_at = grasps;
    }
  };
  evaluate(0);
  for (int g = 0; g < grasp_budget && res.reached_at < 0; ++g) {
    const SceneSample* sc = nullptr;
    std::vector<int> reach;
    while (reach.empty()) {
      sc = &world.scenes[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(world.scenes.size()) - 1))];
      for (std::size_t i = 0; i < sc->reach.size(); ++i) {
        if (sc->reach[i] && sc->scene.depth[i] > 0.0) reach.push_back(static_cast<int>(i));
      }
    }
    const int w = sc->scene.depth.width();
    int row, col;
    if (uniform(rng, 0.0, 1.0) < opts.epsilon) {
      const int i = reach[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(reach.size()) - 1))];
      row = i / w;
      col = i % w;
    } else {
      const GraspChoice c = select_grasp(predict_map(model, sc->scene.depth, sc->reach), sc->reach, 0.0);
      row = c.row;
      col = c.col;
    }
    const GraspOutcome out = attempt_grasp(*sc, world.env.label, row, col, world.classifier,
                                           derive_seed(seed, 0x100000u + static_cast<std::uint64_t>(g)));
    res.positives += out.truth == GraspCategory::edge ? 1 : 0;
    res.log.push_back({static_cast<int>(sc - world.scenes.data()), row, col, out.edge_confidence, out.truth});
    const auto group = expand_neighborhood(sc->scene.depth, row, col, out.edge_confidence,
                                           model.config(), opts.finetune.neighborhood);
    finetune_step(model, buffer, group, rng, decayed(opts.finetune, g, grasp_budget));
    res.grasps = g + 1;
    if (res.grasps % opts.eval_interval == 0 || res.grasps == grasp_budget) evaluate(res.grasps);
  }
  return res;
}

OnlineResult replay_finetune(PatchRegressor& model, const TargetWorld& world,
                             const std::vector<GraspRecord>& log, std::uint64_t seed,
                             const TransferOptions& opts) {
  Rng rng(derive_seed(seed, 0x0F1Fu));
  ReplayBuffer buffer;
  model.reset_optimizer();
  OnlineResult res;
  res.curve.push_back({0, precision_at_k(model, world.heldout, opts.k)});
  const int n = static_cast<int>(log.size());
  for (int g = 0; g < n; ++g) {
    const GraspRecord& r = log[static_cast<std::size_t>(g)];
    if (r.scene < 0 || static_cast<std::size_t>(r.scene) >= world.scenes.size()) {
      throw ContractError("replay_finetune: grasp log refers to an unknown scene");
    }
    const auto group = expand_neighborhood(world.scenes[static_cast<std::size_t>(r.scene)].scene.depth,
                                           r.row, r.col, r.label, model.config(),
                                           opts.finetune.neighborhood);
    finetune_step(model, buffer, group, rng, decayed(opts.finetune, g, n));
    res.positives += r.truth == GraspCategory::edge ? 1 : 0;
    res.grasps = g + 1;
    if (res.grasps % opts.eval_interval == 0 || res.grasps == n) {
      res.curve.push_back({res.grasps, precision_at_k(model, world.heldout, opts.k)});
    }
  }
  res.log = log;
  return res;
}

nlohmann::json TransferReport::to_json() const {
  auto curve = [](const std::vector<LearningCurvePoint>& c) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : c) a.push_back({{"grasps", p.grasps}, {"precision", p.precision}});
    return a;
  };
  return {{"format", "vtc.transfer_report"},
          {"version", 1},
          {"seed", seed},
          {"k", k},
          {"grasp_budget", grasp_budget},
          {"heldout_size", heldout_size},
          {"heldout_positives", heldout_positives},
          {"precision_at_k",
           {{"source_only", source_only},
            {"target_scratch", target_scratch},
            {"source_finetuned", source_finetuned},
            {"geometric_oracle", oracle}}},
          {"pretrain",
           {{"final_loss", pretrain.final_loss},
            {"initial_val_mse", pretrain.initial_val_mse},
            {"val_mse", pretrain.val_mse}}},
          {"scratch_curve", curve(scratch_curve)},
          {"finetune_curve", curve(finetune_curve)}};
}

TransferReport run_transfer_experiment(const EnvParams& source, const EnvParams& target,
                                       int grasp_budget, std::uint64_t seed,
                                       const TransferOptions& opts, TransferModels* models) {
  TransferReport rep;
  rep.seed = seed;
  rep.k = opts.k;
  rep.grasp_budget = grasp_budget;

  PatchRegressor pre(opts.patch, derive_seed(seed, 0x5001u));
  std::vector<ReplaySample> prefill;
  {
    const auto images = to_training_images(make_scenes(source, opts.source_configs, derive_seed(seed, 0x5002u)));
    PretrainOptions po = opts.pretrain;
    po.seed = derive_seed(seed, 0x5003u);
    rep.pretrain = pretrain(pre, images, po);
    prefill = source_replay_samples(images, opts.replay_prefill, opts.patch, derive_seed(seed, 0x5006u));
  }
  const TargetWorld world = make_target_world(target, opts, seed);
  rep.heldout_size = static_cast<int>(world.heldout.size());
  rep.heldout_positives = 0;
  std::vector<double> oracle_scores;
  std::vector<bool> labels;
  for (const LabeledPatch& p : world.heldout) {
    rep.heldout_positives += p.positive ? 1 : 0;
    oracle_scores.push_back(p.oracle);
    labels.push_back(p.positive);
  }
  rep.oracle = precision_at_k(oracle_scores, labels, opts.k);
  rep.source_only = precision_at_k(pre, world.heldout, opts.k);

  PatchRegressor tuned = pre;
  const OnlineResult online =
      online_finetune(tuned, world, grasp_budget, derive_seed(seed, 0x5004u), opts, -1.0, prefill);
  rep.finetune_curve = online.curve;
  rep.source_finetuned = precision_at_k(tuned, world.heldout, opts.k);

  // The target-only model sees exactly the grasps collected during fine-tuning.
  PatchRegressor scratch(opts.patch, derive_seed(seed, 0x5005u));
  rep.scratch_curve = replay_finetune(scratch, world, online.log, derive_seed(seed, 0x5004u), opts).curve;
  rep.target_scratch = precision_at_k(scratch, world.heldout, opts.k);

  if (models) *models = TransferModels{pre, scratch, tuned};
  return rep;
}

nlohmann::json ReplayComparison::to_json() const {
  auto curve = [](const std::vector<LearningCurvePoint>& c) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : c) a.push_back({{"grasps", p.grasps}, {"precision", p.precision}});
    return a;
  };
  return {{"format", "vtc.replay_comparison"},
          {"version", 1},
          {"seed", seed},
          {"target_precision", target_precision},
          {"grasp_budget", grasp_budget},
          {"grasps_with_replay", with_replay},
          {"grasps_without_replay", without_replay},
          {"replay_curve", curve(replay_curve)},
          {"no_replay_curve", curve(no_replay_curve)}};
}

ReplayComparison run_replay_experiment(const EnvParams& source, const EnvParams& target,
                                       int grasp_budget, double target_precision,
                                       std::uint64_t seed, const TransferOptions& opts) {
  if (!(target_precision > 0.0 && target_precision <= 1.0)) {
    throw ContractError("run_replay_experiment: target precision must be in (0, 1]");
  }
  ReplayComparison out;
  out.seed = seed;
  out.target_precision = target_precision;
  out.grasp_budget = grasp_budget;
  PatchRegressor pre(opts.patch, derive_seed(seed, 0x5001u));
  std::vector<ReplaySample> prefill;
  {
    const auto images = to_training_images(make_scenes(source, opts.source_configs, derive_seed(seed, 0x5002u)));
    PretrainOptions po = opts.pretrain;
    po.seed = derive_seed(seed, 0x5003u);
    pretrain(pre, images, po);
    prefill = source_replay_samples(images, opts.replay_prefill, opts.patch, derive_seed(seed, 0x5006u));
  }
  const TargetWorld world = make_target_world(target, opts, seed);

  PatchRegressor with = pre;
  const OnlineResult a = online_finetune(with, world, grasp_budget, derive_seed(seed, 0x5007u), opts,
                                         target_precision, prefill);
  out.with_replay = a.reached_at;
  out.replay_curve = a.curve;

  TransferOptions no = opts;
  no.finetune.use_replay = false;
  PatchRegressor without = pre;
  const OnlineResult b = online_finetune(without, world, grasp_budget, derive_seed(seed, 0x5007u), no,
                                         target_precision);
  out.without_replay = b.reached_at;
  out.no_replay_curve = b.curve;
  return out;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<LearningCurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "grasps,precision_at_k\n";
  for (const auto& p : curve) out << p.grasps << ',' << p.precision << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace vtc
