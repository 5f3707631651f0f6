#include "oracles.hpp"

#include "vtc/affordance_label.hpp"
#include "vtc/render.hpp"

#include <doctest.h>

#include <cmath>

using namespace vtc;

namespace {

// Flat sheet in the plane y = 0, u along +x, v along -z, top-left corner at the origin.
ClothMesh flat(int grid = 20) {
  const ClothParams p = ClothParams::standard(0.3, 0.3, grid, grid);
  return build_cloth(p, {Pin{0, Vec3::Zero()}});
}

Mat3 random_axes(Rng& rng) {
  const Vec3 c(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
  const Vec3 a(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
  return grasp_axes(c, a);
}

GripperBox random_box(const ClothMesh& m, Rng& rng, const LabelParams& lp) {
  const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(m.size()) - 1));
  const Vec3 jitter(uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01));
  const Mat3 axes = uniform(rng, 0.0, 1.0) < 0.5 ? default_grasp_axes() : random_axes(rng);
  return GripperBox{m.positions()[n] + jitter, axes, lp.gripper};
}

}  // namespace

TEST_CASE("grasp axes are orthonormal and right handed") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Mat3 m = random_axes(rng);
    CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(grasp_axes(Vec3::UnitX(), Vec3::UnitX()), ContractError);
}

TEST_CASE("gripper contract") {
  LabelParams lp;
  lp.gripper.opening_w = 0.0;
  CHECK_THROWS_AS(lp.validate(), ContractError);
  lp = LabelParams{};
  lp.ray_grid = 0;
  CHECK_THROWS_AS(AffordanceLabeler(flat(), lp), ContractError);
}

TEST_CASE("edge percentage of a box straddling the boundary equals the node count ratio") {
  const ClothMesh m = flat();
  const GripperBox g{Vec3(0.3, 0.0, -0.15), default_grasp_axes(), GripperGeometry{}};
  const double v = edge_percentage(m, g);
  int inside = 0, boundary = 0;
  for (std::size_t n = 0; n < m.size(); ++n) {
    const Vec3 l = g.local(m.positions()[n]);
    if (std::abs(l.x()) <= 0.015 && std::abs(l.y()) <= 0.01 && std::abs(l.z()) <= 0.01) {
      ++inside;
      boundary += classify_node(m, n) != NodeClass::interior;
    }
  }
  REQUIRE(inside > 0);
  CHECK(v == static_cast<double>(boundary) / inside);
  CHECK(v > 0.0);
  CHECK(edge_percentage(m, GripperBox{Vec3(1.0, 1.0, 1.0), default_grasp_axes(), GripperGeometry{}}) == 0.0);
}

TEST_CASE("each criterion agrees with the all-nodes oracle on random poses") {
  EnvParams env;
  const LabelParams lp;
  Rng rng(77);
  int cases = 0, positives[4] = {0, 0, 0, 0};
  for (int c = 0; c < 4; ++c) {
    const ClothMesh m = make_configuration(env.cloth, configuration_seed(5, c), 15.0 * c, env.configuration);
    AffordanceLabeler lab(m, lp);
    for (int i = 0; i < 60; ++i, ++cases) {
      const GripperBox g = random_box(m, rng, lp);
      const double ep = lab.edge_percentage(g);
      CHECK(ep == oracle::edge_percentage(m, g));
      const bool cf = lab.collision_free(g), sl = lab.single_layer(g), re = lab.reachable(g);
      CHECK(cf == oracle::collision_free(m, g));
      CHECK(sl == oracle::single_layer(m, g, lp));
      CHECK(re == oracle::reachable(m, g, lp));
      positives[0] += ep > 0.0;
      positives[1] += cf;
      positives[2] += sl;
      positives[3] += re;
    }
  }
  // Both outcomes occur for every criterion.
  for (int k = 0; k < 4; ++k) {
    CHECK(positives[k] > 0);
    CHECK(positives[k] < cases);
  }
}

TEST_CASE("a two-layer fold between the fingers is not single layer") {
  ClothMesh m = flat();
  const ClothParams& p = m.params();
  // Fold the right half back over the left half, 2 mm behind it.
  for (std::size_t n = 0; n < m.size(); ++n) {
    const Vec2 uv = m.undeformed()[n];
    if (uv.x() > 0.5 * p.width_m) m.positions()[n] = Vec3(p.width_m - uv.x(), 0.002, -uv.y());
  }
  const LabelParams lp;
  const GripperBox g{Vec3(0.08, 0.001, -0.15), default_grasp_axes(), lp.gripper};
  CHECK_FALSE(single_layer(m, g, lp));
  CHECK_FALSE(oracle::single_layer(m, g, lp));
  CHECK(single_layer(flat(), g, lp));
}

TEST_CASE("cloth on the approach path blocks the grasp") {
  ClothMesh m = flat();
  const LabelParams lp;
  const GripperBox g{Vec3(0.3, 0.0, -0.15), default_grasp_axes(), lp.gripper};
  CHECK(reachable(m, g, lp));
  CHECK(affordance_at(m, g, lp) > 0.0);
  // A strip of the left edge folded into the swept volume 5 cm behind the gripper.
  for (int j = 8; j < 12; ++j) {
    const std::size_t n = m.index(0, j);
    m.positions()[n] = Vec3(0.35, 0.0, -0.15 + 0.002 * (j - 10));
  }
  CHECK_FALSE(reachable(m, g, lp));
  CHECK_FALSE(oracle::reachable(m, g, lp));
  CHECK(affordance_at(m, g, lp) == 0.0);
}

TEST_CASE("fingers closing on cloth collide") {
  const ClothMesh m = flat();
  const LabelParams lp;
  // Closing axis along x: the sheet lies across both finger slabs.
  const GripperBox g{Vec3(0.15, 0.0, -0.15), grasp_axes(Vec3::UnitX(), Vec3::UnitY()), lp.gripper};
  CHECK_FALSE(collision_free(m, g));
  CHECK_FALSE(oracle::collision_free(m, g));
}

TEST_CASE("affordance composes the four criteria") {
  EnvParams env;
  const LabelParams lp;
  const ClothMesh m = make_configuration(env.cloth, 31, 0.0, env.configuration);
  AffordanceLabeler lab(m, lp);
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const GripperBox g = random_box(m, rng, lp);
    const double ep = oracle::edge_percentage(m, g);
    const bool ok = oracle::collision_free(m, g) && oracle::single_layer(m, g, lp) && oracle::reachable(m, g, lp);
    const double expect = ok ? ep : 0.0;
    const double v = lab.affordance_at(g);
    CHECK(v == expect);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("label map equals per-pixel affordance and stays in range") {
  EnvParams env;
  const ClothMesh m = make_configuration(env.cloth, 13, 30.0, env.configuration);
  const RenderResult r = render_depth(m, env.camera);
  const AffordanceMap map = label_image(m, r, default_grasp_axes(), env.label);
  CHECK(map.values.width() == r.depth.width());
  CHECK(map.values.height() == r.depth.height());
  int checked = 0;
  for (int row = 0; row < r.depth.height(); row += 3) {
    for (int col = 0; col < r.depth.width(); col += 3) {
      const double v = map.values(row, col);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      const auto p = back_project(m, r.hits, row, col);
      if (!p) {
        CHECK(v == 0.0);
        continue;
      }
      ++checked;
      CHECK(v == affordance_at(m, GripperBox{*p, default_grasp_axes(), env.label.gripper}, env.label));
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("flat sheet is graspable along the edge facing the arm only") {
  Camera cam;
  cam.position = Vec3(0.15, -1.0, -0.15);
  cam.look_at = Vec3(0.15, 0.0, -0.15);
  const ClothMesh m = flat(25);
  const RenderResult r = render_depth(m, cam);
  const AffordanceMap map = label_image(m, r, default_grasp_axes());
  const double reach = m.params().edge_band_m + 0.5 * GripperGeometry{}.opening_w;
  int right = 0, right_pos = 0;
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const auto p = back_project(m, r.hits, row, col);
      if (!p) continue;
      if (map.values(row, col) > 0.0) CHECK(p->x() >= 0.3 - reach);
      if (p->x() >= 0.3 - 0.005 && p->z() < -0.03 && p->z() > -0.27) {
        ++right;
        right_pos += map.values(row, col) > 0.0;
      }
    }
  }
  REQUIRE(right > 0);
  CHECK(right_pos == right);
}
