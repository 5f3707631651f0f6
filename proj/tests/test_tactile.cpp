#include "vtc/tactile.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace vtc;

namespace {

GraspScenario edge_at(double cx, double cy, double theta, std::uint64_t seed = 1) {
  GraspScenario s;
  s.category = GraspCategory::edge;
  s.cx_mm = cx;
  s.cy_mm = cy;
  s.theta_deg = theta;
  s.seed = seed;
  return s;
}

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 180.0);
  if (d > 90.0) d -= 180.0;
  if (d <= -90.0) d += 180.0;
  return std::abs(d);
}

const GraspClassifier& small_classifier() {
  static const GraspClassifier clf = [] {
    TactileDatasetOptions o;
    o.raw_per_category = 60;
    o.augment_per_raw = 4;
    const LabeledFeatures d = make_grasp_features(o, 3);
    return GraspClassifier::train(d.x, d.y);
  }();
  return clf;
}

}  // namespace

TEST_CASE("no fabric leaves the gel baseline") {
  const TactileSensor s;
  GraspScenario scn;
  scn.category = GraspCategory::no_fabric;
  const TactileFrame f = synth_frame(scn, 1.0, s);
  const double mx = *std::max_element(f.depth.data().begin(), f.depth.data().end());
  CHECK(mx <= s.dome_mm);
  CHECK(mx >= 0.99 * s.dome_mm);
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      CHECK(f.depth(r, c) == s.baseline((c + 0.5) * s.pitch_mm, (r + 0.5) * s.pitch_mm));
    }
  }
}

TEST_CASE("covered rows of a horizontal edge carry the fabric thickness") {
  const TactileSensor s;
  const GraspScenario scn = edge_at(15.0, 11.25, 0.0);
  const TactileFrame f = synth_frame(scn, 1.0, s);
  const Raster<double> im = imprint(f, s);
  double covered = 0.0, open = 0.0;
  int nc = 0, no = 0;
  for (int r = 0; r < s.height; ++r) {
    const double y = (r + 0.5) * s.pitch_mm;
    for (int c = 0; c < s.width; ++c) {
      if (y < scn.cy_mm - s.pitch_mm) covered += im(r, c), ++nc;
      if (y > scn.cy_mm + s.pitch_mm) open += im(r, c), ++no;
    }
  }
  CHECK(covered / nc >= open / no + 0.75 * scn.thickness_mm);
}

TEST_CASE("a two-layer fold imprints twice as deep as an edge") {
  const TactileSensor s;
  GraspScenario e = edge_at(15.0, 11.25, 10.0, 42);
  GraspScenario f = e;
  f.category = GraspCategory::fold;
  f.layers = 2;
  const Raster<double> ie = imprint(synth_frame(e, 0.5, s), s);
  const Raster<double> iff = imprint(synth_frame(f, 0.5, s), s);
  double se = 0.0, sf = 0.0;
  for (std::size_t i = 0; i < ie.size(); ++i) {
    if (ie[i] > s.imprint_threshold()) {
      se += ie[i];
      sf += iff[i];
    }
  }
  CHECK(sf / se == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("contact onset") {
  const TactileSensor s;
  GraspScenario none;
  none.category = GraspCategory::no_fabric;
  const auto seq = synth_sequence(none, 25, s);
  CHECK(onset_index(seq, s) == 25);

  GraspScenario e = edge_at(15.0, 11.25, 0.0, 5);
  GraspScenario f = e;
  f.category = GraspCategory::fold;
  f.layers = 2;
  CHECK(onset_index(synth_sequence(f, 25, s), s) < onset_index(synth_sequence(e, 25, s), s));

  const auto es = synth_sequence(e, 25, s);
  CHECK(es.back().depth == synth_frame(e, 1.0, s).depth);
  CHECK_THROWS_AS(synth_sequence(e, 10, s), ContractError);
}

TEST_CASE("frames are deterministic in scenario and closure") {
  const GraspScenario e = edge_at(13.0, 9.0, -20.0, 99);
  CHECK(synth_frame(e, 0.7).depth == synth_frame(e, 0.7).depth);
  GraspScenario other = e;
  other.seed = 100;
  CHECK(synth_frame(e, 0.7).depth != synth_frame(other, 0.7).depth);
}

TEST_CASE("scenario contract") {
  GraspScenario s = edge_at(15, 11, 0);
  s.layers = 2;
  CHECK_THROWS_AS(s.validate(), ContractError);
  s = edge_at(15, 11, 0);
  CHECK_THROWS_AS(synth_frame(s, 1.5), ContractError);
}

TEST_CASE("theta normalization") {
  CHECK(normalize_theta_deg(90.0) == 90.0);
  CHECK(normalize_theta_deg(-90.0) == 90.0);
  CHECK(normalize_theta_deg(100.0) == doctest::Approx(-80.0));
  CHECK(normalize_theta_deg(-370.0) == doctest::Approx(-10.0));
}

TEST_CASE("clean edge pose estimate") {
  const TactileSensor s;
  GraspScenario scn = edge_at(15.0, 11.25, 0.0);
  scn.noise_scale = 0.0;
  const EdgePose gt = scenario_pose(scn, s);
  const EdgePose e = estimate_pose(synth_frame(scn, 1.0, s), s);
  REQUIRE(e.cls == PoseClass::edge);
  CHECK(std::abs(e.cx_mm - gt.cx_mm) <= s.pitch_mm);
  CHECK(std::abs(e.cy_mm - gt.cy_mm) <= s.pitch_mm);
  CHECK(angle_diff(e.theta_deg, gt.theta_deg) <= 1.0);
}

TEST_CASE("coverage classes") {
  const TactileSensor s;
  GraspScenario all;
  all.category = GraspCategory::all_fabric;
  CHECK(estimate_pose(synth_frame(all, 1.0, s), s).cls == PoseClass::all_fabric);
  GraspScenario none;
  none.category = GraspCategory::no_fabric;
  CHECK(estimate_pose(synth_frame(none, 1.0, s), s).cls == PoseClass::no_fabric);
}

TEST_CASE("estimated poses stay inside the sensor with normalized angles") {
  const TactileSensor s;
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const GraspScenario scn = sample_scenario(GraspCategory::edge, rng, s);
    const EdgePose e = estimate_pose(synth_frame(scn, 1.0, s), s);
    if (e.cls != PoseClass::edge) continue;
    CHECK(e.cx_mm >= 0.0);
    CHECK(e.cx_mm <= s.width_mm());
    CHECK(e.cy_mm >= 0.0);
    CHECK(e.cy_mm <= s.height_mm());
    CHECK(e.theta_deg > -90.0);
    CHECK(e.theta_deg <= 90.0);
  }
}

TEST_CASE("identity augmentation") {
  const TactileSensor s;
  const TactileFrame f = synth_frame(edge_at(14.0, 10.0, 12.0, 4), 1.0, s);
  const EdgePose p = scenario_pose(edge_at(14.0, 10.0, 12.0, 4), s);
  const auto [g, q] = apply_augment(f, p, AugmentTransform{}, s);
  CHECK(g.depth == f.depth);
  CHECK(q.cx_mm == doctest::Approx(p.cx_mm));
  CHECK(q.cy_mm == doctest::Approx(p.cy_mm));
  CHECK(q.theta_deg == doctest::Approx(p.theta_deg));
}

TEST_CASE("rotating the image rotates the label") {
  const TactileSensor s;
  GraspScenario scn = edge_at(15.0, 11.25, 20.0, 4);
  scn.noise_scale = 0.0;
  const EdgePose p = scenario_pose(scn, s);
  AugmentTransform t;
  t.rotation_deg = 10.0;
  const auto [g, q] = apply_augment(synth_frame(scn, 1.0, s), p, t, s);
  CHECK(angle_diff(q.theta_deg, normalize_theta_deg(p.theta_deg + 10.0)) < 1e-9);
  const EdgePose e = estimate_pose(g, s);
  REQUIRE(e.cls == PoseClass::edge);
  CHECK(angle_diff(e.theta_deg, q.theta_deg) <= 2.0);
}

TEST_CASE("augmented pose sets have the expected size") {
  const TactileSensor s;
  Rng rng(2);
  int n = 0, invalid = 0;
  for (int raw = 0; raw < 150; ++raw) {
    const GraspScenario scn = sample_scenario(GraspCategory::edge, rng, s);
    const TactileFrame f = synth_frame(scn, 1.0, s);
    const EdgePose p = scenario_pose(scn, s);
    for (int k = 0; k < 200; ++k) {
      const auto [g, q] = augment(f, p, rng, AugmentParams{}, s);
      ++n;
      invalid += q.cls != PoseClass::edge;
    }
  }
  CHECK(n == 30000);
  CHECK(invalid == 0);
}

TEST_CASE("classifier features follow the sampling schedule") {
  const auto seq = synth_sequence(edge_at(15, 11, 0), 25);
  const auto frames = sample_classifier_frames(seq);
  REQUIRE(frames.size() == 5);
  CHECK(frames.back().depth == seq.back().depth);
  CHECK(frames.front().depth == seq[4].depth);
  CHECK_THROWS_AS(grasp_features({seq[0]}), ContractError);
}

TEST_CASE("grasp dataset size") {
  TactileDatasetOptions o;
  o.raw_per_category = 7;
  o.augment_per_raw = 3;
  const LabeledFeatures d = make_grasp_features(o, 1);
  CHECK(d.x.size() == 5 * 7 * 4);
  for (int c = 0; c < kGraspCategories; ++c) {
    CHECK(std::count(d.y.begin(), d.y.end(), static_cast<GraspCategory>(c)) == 28);
  }
  const TactileDatasetOptions full;
  CHECK(full.raw_per_category == 330);
  CHECK(full.raw_per_category * (1 + full.augment_per_raw) >= 6000);
}

TEST_CASE("classifier output is a probability simplex and separates empty grasps") {
  const GraspClassifier& clf = small_classifier();
  Rng rng(31);
  for (int c = 0; c < kGraspCategories; ++c) {
    for (int i = 0; i < 10; ++i) {
      const GraspScenario scn = sample_scenario(static_cast<GraspCategory>(c), rng);
      const GraspLabel l = classify_scenario(clf, scn);
      double sum = 0.0;
      for (double p : l.confidence) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  GraspScenario none;
  none.category = GraspCategory::no_fabric;
  const GraspLabel l = classify_scenario(clf, none);
  CHECK(l.category == GraspCategory::no_fabric);
  CHECK(l.confidence[static_cast<int>(GraspCategory::no_fabric)] >= 0.9);
}

TEST_CASE("classifier persistence round trip") {
  const GraspClassifier& clf = small_classifier();
  const auto path = std::filesystem::temp_directory_path() / "vtc_test_clf.json";
  clf.save(path);
  const GraspClassifier back = GraspClassifier::load(path);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const GraspScenario scn = sample_scenario(static_cast<GraspCategory>(i % 5), rng);
    const GraspLabel a = classify_scenario(clf, scn), b = classify_scenario(back, scn);
    CHECK(a.category == b.category);
    for (int c = 0; c < kGraspCategories; ++c) CHECK(a.confidence[c] == doctest::Approx(b.confidence[c]).epsilon(1e-12));
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(GraspClassifier::load(path), IoError);
}

TEST_CASE("feature CSV round trip") {
  TactileDatasetOptions o;
  o.raw_per_category = 2;
  o.augment_per_raw = 1;
  const LabeledFeatures d = make_grasp_features(o, 9);
  const auto path = std::filesystem::temp_directory_path() / "vtc_test_features.csv";
  write_features_csv(path, d);
  const LabeledFeatures back = read_features_csv(path);
  CHECK(back.y == d.y);
  CHECK(back.x == d.x);
  std::filesystem::remove(path);
}

TEST_CASE("shear signal") {
  const TactileSensor s;
  TactileFrame a;
  a.markers = noisy_marker_field(0.0, 1, s);
  CHECK(shear_signal(a, a) == 0.0);
  TactileFrame ref;
  ref.markers = marker_field(0.0, s);
  double prev = 0.0;
  for (double load : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    TactileFrame f;
    f.markers = marker_field(load, s);
    const double sig = shear_signal(f, ref);
    CHECK(sig > prev);
    prev = sig;
  }
}
