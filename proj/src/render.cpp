#include "vtc/render.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace vtc {

void Camera::validate() const {
  if (width < 16 || height < 16) throw ContractError("camera: image must be at least 16x16");
  if (!(near_m > 0.0 && near_m < far_m)) throw ContractError("camera: require 0 < near < far");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) throw ContractError("camera: bad field of view");
  if ((look_at - position).norm() <= 0.0) throw ContractError("camera: look_at equals position");
  if (forward().cross(up).norm() < 1e-9) throw ContractError("camera: up parallel to view axis");
}

Vec3 Camera::forward() const { return (look_at - position).normalized(); }
Vec3 Camera::right() const { return forward().cross(up).normalized(); }
Vec3 Camera::camera_up() const { return right().cross(forward()); }
double Camera::focal_px() const { return 0.5 * width / std::tan(0.5 * deg2rad(hfov_deg)); }

Camera::Projection Camera::project(const Vec3& p) const {
  const Vec3 q = p - position;
  Projection out;
  out.depth = q.dot(forward());
  const double f = focal_px();
  out.x = 0.5 * width + f * q.dot(right()) / out.depth;
  out.y = 0.5 * height - f * q.dot(camera_up()) / out.depth;
  return out;
}

Vec3 Camera::ray(int row, int col) const {
  const double f = focal_px();
  return forward() + ((col + 0.5 - 0.5 * width) / f) * right() -
         ((row + 0.5 - 0.5 * height) / f) * camera_up();
}

nlohmann::json Camera::to_json() const {
  auto v = [](const Vec3& x) { return nlohmann::json::array({x.x(), x.y(), x.z()}); };
  return {{"position", v(position)}, {"look_at", v(look_at)}, {"up", v(up)},
          {"hfov_deg", hfov_deg},    {"width", width},        {"height", height},
          {"near_m", near_m},        {"far_m", far_m}};
}

Camera Camera::from_json(const nlohmann::json& doc) {
  Camera cam;
  auto v = [](const nlohmann::json& a) { return Vec3(a.at(0), a.at(1), a.at(2)); };
  if (doc.contains("position")) cam.position = v(doc["position"]);
  if (doc.contains("look_at")) cam.look_at = v(doc["look_at"]);
  if (doc.contains("up")) cam.up = v(doc["up"]);
  cam.hfov_deg = doc.value("hfov_deg", cam.hfov_deg);
  cam.width = doc.value("width", cam.width);
  cam.height = doc.value("height", cam.height);
  cam.near_m = doc.value("near_m", cam.near_m);
  cam.far_m = doc.value("far_m", cam.far_m);
  cam.validate();
  return cam;
}

namespace {

// Moller-Trumbore. Returns t along `dir` (not normalized) or +inf.
double intersect(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& v1,
                 const Vec3& v2, double& b1, double& b2) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-18) return std::numeric_limits<double>::infinity();
  const double inv = 1.0 / det;
  const Vec3 tv = origin - v0;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
  b1 = u;
  b2 = v;
  return e2.dot(qv) * inv;
}

}  // namespace

RenderResult render_depth(const ClothMesh& mesh, const Camera& cam) {
  cam.validate();
  RenderResult out{DepthImage(cam.width, cam.height, 0.0), HitMap(cam.width, cam.height)};
  const auto& x = mesh.positions();

  auto test_pixel = [&](std::size_t t, const Vec3& v0, const Vec3& v1, const Vec3& v2, int row,
                        int col) {
    double b1 = 0.0, b2 = 0.0;
    const double depth = intersect(cam.position, cam.ray(row, col), v0, v1, v2, b1, b2);
    if (!(depth > cam.near_m && depth < cam.far_m)) return;
    double& best = out.depth(row, col);
    if (best == 0.0 || depth < best) {
      best = depth;
      out.hits(row, col) = Hit{static_cast<int>(t), b1, b2};
    }
  };

  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto tri = mesh.triangle(t);
    const Vec3& v0 = x[tri[0]];
    const Vec3& v1 = x[tri[1]];
    const Vec3& v2 = x[tri[2]];
    const auto p0 = cam.project(v0), p1 = cam.project(v1), p2 = cam.project(v2);
    const double zmin = std::min({p0.depth, p1.depth, p2.depth});
    const double zmax = std::max({p0.depth, p1.depth, p2.depth});
    if (zmax <= cam.near_m || zmin >= cam.far_m) continue;
    int r0 = 0, r1 = cam.height - 1, c0 = 0, c1 = cam.width - 1;
    if (zmin > cam.near_m) {
      const double xmin = std::min({p0.x, p1.x, p2.x}), xmax = std::max({p0.x, p1.x, p2.x});
      const double ymin = std::min({p0.y, p1.y, p2.y}), ymax = std::max({p0.y, p1.y, p2.y});
      c0 = std::max(0, static_cast<int>(std::floor(xmin - 0.5)));
      c1 = std::min(cam.width - 1, static_cast<int>(std::ceil(xmax - 0.5)));
      r0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
      r1 = std::min(cam.height - 1, static_cast<int>(std::ceil(ymax - 0.5)));
    }
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) test_pixel(t, v0, v1, v2, row, col);
    }
  }
  return out;
}

std::optional<Vec3> back_project(const ClothMesh& mesh, const HitMap& hits, int row, int col) {
  const Hit& h = hits(row, col);
  if (h.triangle < 0) return std::nullopt;
  const auto tri = mesh.triangle(static_cast<std::size_t>(h.triangle));
  const auto& x = mesh.positions();
  return (1.0 - h.b1 - h.b2) * x[tri[0]] + h.b1 * x[tri[1]] + h.b2 * x[tri[2]];
}

PixelMask cloth_mask(const DepthImage& depth) {
  PixelMask m(depth.width(), depth.height());
  for (std::size_t i = 0; i < depth.size(); ++i) m[i] = depth[i] > 0.0 ? 1 : 0;
  return m;
}

DepthImage add_black_rectangles(const DepthImage& img, std::uint64_t seed,
                                const RectangleSpec& spec) {
  if (spec.count_min < 0 || spec.count_max < spec.count_min) {
    throw ContractError("add_black_rectangles: bad count range");
  }
  if (!(spec.size_min_px > 0.0) || spec.size_max_px < spec.size_min_px) {
    throw ContractError("add_black_rectangles: bad size range");
  }
  DepthImage out = img;
  Rng rng(derive_seed(seed, 0xB1ACu));
  const int n = uniform_int(rng, spec.count_min, spec.count_max);
  for (int k = 0; k < n; ++k) {
    const double cx = uniform(rng, 0.0, img.width());
    const double cy = uniform(rng, 0.0, img.height());
    const double hw = 0.5 * uniform(rng, spec.size_min_px, spec.size_max_px);
    const double hh = 0.5 * uniform(rng, spec.size_min_px, spec.size_max_px);
    const double ang = uniform(rng, 0.0, kPi);
    const double ca = std::cos(ang), sa = std::sin(ang);
    const double reach = std::sqrt(hw * hw + hh * hh);
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
    const int r1 = std::min(img.height() - 1, static_cast<int>(std::ceil(cy + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
    const int c1 = std::min(img.width() - 1, static_cast<int>(std::ceil(cx + reach)));
    for (int row = r0; row <= r1; ++row) {
      for (int col = c0; col <= c1; ++col) {
        const double dx = col + 0.5 - cx, dy = row + 0.5 - cy;
        const double lx = ca * dx + sa * dy, ly = -sa * dx + ca * dy;
        if (std::abs(lx) <= hw && std::abs(ly) <= hh) out(row, col) = 0.0;
      }
    }
  }
  return out;
}

PixelMask reachability_mask(const DepthImage& img, const HitMap& hits, const ClothMesh& mesh,
                            const Vec3& holding_gripper, const ReachParams& params) {
  PixelMask mask(img.width(), img.height());
  if (mesh.size() == 0) return mask;
  const Vec3 side = params.approach_side.normalized();
  double smin = std::numeric_limits<double>::infinity(), smax = -smin;
  double zmin = smin, zmax = -smin;
  for (const Vec3& x : mesh.positions()) {
    smin = std::min(smin, x.dot(side));
    smax = std::max(smax, x.dot(side));
    zmin = std::min(zmin, x.z());
    zmax = std::max(zmax, x.z());
  }
  const double side_mid = 0.5 * (smin + smax);
  const double z_floor = zmin + params.bottom_fraction * (zmax - zmin);
  for (int row = 0; row < img.height(); ++row) {
    for (int col = 0; col < img.width(); ++col) {
      if (img(row, col) <= 0.0) continue;
      const auto p = back_project(mesh, hits, row, col);
      if (!p) continue;
      if ((*p - holding_gripper).norm() < params.clearance_m) continue;
      if (p->dot(side) < side_mid) continue;
      if (p->z() < z_floor) continue;
      mask(row, col) = 1;
    }
  }
  return mask;
}

}  // namespace vtc
