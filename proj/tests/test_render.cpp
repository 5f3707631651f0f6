#include "vtc/dataset.hpp"
#include "vtc/image.hpp"
#include "vtc/render.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace vtc;

namespace {

// Flat 0.3 m sheet in the plane y = 0.1, one meter in front of the default camera.
ClothMesh flat_sheet() {
  const ClothParams p = ClothParams::standard(0.3, 0.3, 25, 25);
  return build_cloth(p, {Pin{0, Vec3(-0.15, 0.1, -0.07)}});
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("vtc_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("fronto-parallel sheet renders at constant depth") {
  const Camera cam;
  const RenderResult r = render_depth(flat_sheet(), cam);
  int cloth = 0;
  for (std::size_t i = 0; i < r.depth.size(); ++i) {
    if (r.depth[i] == 0.0) continue;
    ++cloth;
    CHECK(r.depth[i] == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(cloth > 1000);
}

TEST_CASE("mesh behind the camera renders empty") {
  const ClothParams p = ClothParams::standard(0.3, 0.3, 25, 25);
  const ClothMesh behind = build_cloth(p, {Pin{0, Vec3(-0.15, -2.0, 0.0)}});
  const RenderResult r = render_depth(behind, Camera{});
  for (std::size_t i = 0; i < r.depth.size(); ++i) CHECK(r.depth[i] == 0.0);
}

TEST_CASE("back-projected hits re-project to their pixel centers") {
  const Camera cam;
  const ClothMesh m = make_configuration(ClothParams{}, 4, 45.0);
  const RenderResult r = render_depth(m, cam);
  double worst = 0.0;
  int hits = 0;
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const auto p = back_project(m, r.hits, row, col);
      if (!p) continue;
      ++hits;
      const auto pr = cam.project(*p);
      worst = std::max({worst, std::abs(pr.x - (col + 0.5)), std::abs(pr.y - (row + 0.5))});
      CHECK(pr.depth == doctest::Approx(r.depth(row, col)).epsilon(1e-9));
      CHECK(r.depth(row, col) > cam.near_m);
      CHECK(r.depth(row, col) < cam.far_m);
    }
  }
  CHECK(hits > 500);
  CHECK(worst <= 0.5);
}

TEST_CASE("rendering is deterministic down to the PGM bytes") {
  const ClothMesh m = make_configuration(ClothParams{}, 9, 0.0);
  const auto d = scratch_dir("render_det");
  write_depth(d / "a.pgm", render_depth(m, Camera{}).depth);
  write_depth(d / "b.pgm", render_depth(m, Camera{}).depth);
  CHECK(slurp(d / "a.pgm") == slurp(d / "b.pgm"));
  const DepthImage back = read_depth(d / "a.pgm");
  const DepthImage orig = render_depth(m, Camera{}).depth;
  for (std::size_t i = 0; i < orig.size(); ++i) CHECK(std::abs(back[i] - orig[i]) <= 0.5 * kDepthMetersPerUnit);
  std::filesystem::remove_all(d);
}

TEST_CASE("camera contract") {
  Camera c;
  c.width = 8;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = Camera{};
  c.near_m = 4.0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("black rectangles") {
  const DepthImage img = render_depth(make_configuration(ClothParams{}, 3, 0.0), Camera{}).depth;
  SUBCASE("an empty count range is the identity") {
    RectangleSpec none;
    none.count_max = 0;
    CHECK(add_black_rectangles(img, 1, none) == img);
  }
  SUBCASE("seeded and never adds depth") {
    RectangleSpec spec;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const DepthImage a = add_black_rectangles(img, s, spec);
      CHECK(a == add_black_rectangles(img, s, spec));
      int zeroed = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i] == img[i] || a[i] == 0.0));
        zeroed += (a[i] == 0.0 && img[i] != 0.0) ? 1 : 0;
      }
      worst = std::max(worst, static_cast<double>(zeroed) / static_cast<double>(img.size()));
    }
    CHECK(worst <= 0.30);
  }
}

TEST_CASE("reachability rules") {
  const Camera cam;
  const ClothMesh m = flat_sheet();
  const RenderResult r = render_depth(m, cam);
  const Vec3 holder = m.positions()[m.index(24, 0)];  // top right
  const PixelMask mask = reachability_mask(r.depth, r.hits, m, holder);
  const PixelMask cloth = cloth_mask(r.depth);
  int on = 0;
  double zmin = 1e9, zmax = -1e9;
  for (const Vec3& x : m.positions()) {
    zmin = std::min(zmin, x.z());
    zmax = std::max(zmax, x.z());
  }
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      if (!mask(row, col)) continue;
      ++on;
      CHECK(cloth(row, col) == 1);
      CHECK(col >= cam.width / 2);
      const Vec3 p = *back_project(m, r.hits, row, col);
      CHECK((p - holder).norm() >= 0.04);
      CHECK(p.z() >= zmin + 0.1 * (zmax - zmin));
    }
  }
  CHECK(on > 100);
}

TEST_CASE("reach mask is a subset of the cloth mask on settled scenes") {
  EnvParams env;
  const ClothMesh m = make_configuration(env.cloth, 21, 0.0, env.configuration);
  for (double rot : {0.0, 90.0, 210.0}) {
    const SceneSample s = make_scene(env, m, 21, rot, false);
    const PixelMask cloth = cloth_mask(s.scene.depth);
    for (std::size_t i = 0; i < cloth.size(); ++i) CHECK((s.reach[i] == 0 || cloth[i] == 1));
  }
}

TEST_CASE("PGM round trips") {
  const auto d = scratch_dir("pgm");
  Raster<std::uint16_t> a(5, 3);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = static_cast<std::uint16_t>(i * 4099);
  write_pgm16(d / "a.pgm", a);
  CHECK(read_pgm16(d / "a.pgm") == a);
  Raster<std::uint8_t> b(4, 4, 7);
  write_pgm8(d / "b.pgm", b);
  CHECK(read_pgm8(d / "b.pgm") == b);
  CHECK_THROWS_AS(read_pgm16(d / "missing.pgm"), IoError);
  std::ofstream(d / "bad.pgm") << "P2 1 1 255\n0\n";
  CHECK_THROWS_AS(read_pgm16(d / "bad.pgm"), IoError);
  std::filesystem::remove_all(d);
}
