#include "vtc/affordance_label.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vtc {

void GripperGeometry::validate() const {
  if (!(opening_w > 0.0 && finger_len > 0.0 && finger_depth > 0.0 && finger_thickness > 0.0)) {
    throw ContractError("gripper: all extents must be positive");
  }
}

void LabelParams::validate() const {
  gripper.validate();
  if (sweep_m < 0.0) throw ContractError("label params: negative sweep length");
  if (ray_grid < 1) throw ContractError("label params: ray grid must be at least 1");
  if (!(capture_factor > 0.0 && adjacency_factor > 0.0)) {
    throw ContractError("label params: capture and adjacency factors must be positive");
  }
}

Mat3 grasp_axes(const Vec3& closing, const Vec3& approach) {
  const Vec3 c = closing.normalized();
  Vec3 a = approach - approach.dot(c) * c;
  if (a.norm() < 1e-12) throw ContractError("grasp_axes: closing and approach are parallel");
  a.normalize();
  Mat3 m;
  m.col(0) = c;
  m.col(1) = a;
  m.col(2) = c.cross(a);
  return m;
}

Mat3 default_grasp_axes() { return grasp_axes(Vec3::UnitY(), -Vec3::UnitX()); }

bool GripperBox::in_opening(const Vec3& p) const {
  const Vec3 l = local(p);
  return std::abs(l.x()) <= 0.5 * geom.opening_w && std::abs(l.y()) <= 0.5 * geom.finger_len &&
         std::abs(l.z()) <= 0.5 * geom.finger_depth;
}

bool GripperBox::in_finger_slab(const Vec3& p) const {
  const Vec3 l = local(p);
  const double c = std::abs(l.x());
  return c > 0.5 * geom.opening_w && c <= 0.5 * geom.opening_w + geom.finger_thickness &&
         std::abs(l.y()) <= 0.5 * geom.finger_len && std::abs(l.z()) <= 0.5 * geom.finger_depth;
}

NodeIndex::Key NodeIndex::key(int i, int j, int k) {
  constexpr Key off = 1 << 20;
  return ((static_cast<Key>(i) + off) << 42) | ((static_cast<Key>(j) + off) << 21) |
         (static_cast<Key>(k) + off);
}

NodeIndex::NodeIndex(const std::vector<Vec3>& points, double cell) : cell_(cell) {
  for (std::size_t n = 0; n < points.size(); ++n) {
    const Vec3& p = points[n];
    cells_[key(coord(p.x()), coord(p.y()), coord(p.z()))].push_back(n);
  }
}

void NodeIndex::query(const Vec3& lo, const Vec3& hi, std::vector<std::size_t>& out) const {
  const int i0 = coord(lo.x()), i1 = coord(hi.x());
  const int j0 = coord(lo.y()), j1 = coord(hi.y());
  const int k0 = coord(lo.z()), k1 = coord(hi.z());
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      for (int k = k0; k <= k1; ++k) {
        auto it = cells_.find(key(i, j, k));
        if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
      }
    }
  }
}

AffordanceLabeler::AffordanceLabeler(const ClothMesh& mesh, const LabelParams& params)
    : mesh_(&mesh), params_(params), index_(mesh.positions(), 0.02) {
  params_.validate();
  boundary_.resize(mesh.size());
  for (std::size_t n = 0; n < mesh.size(); ++n) {
    boundary_[n] = classify_node(mesh, n) != NodeClass::interior ? 1 : 0;
  }
}

GripperBox AffordanceLabeler::box_at(const Vec3& center, const Mat3& axes) const {
  return GripperBox{center, axes, params_.gripper};
}

double AffordanceLabeler::capture_radius() const {
  return params_.capture_factor * mesh_->params().spacing();
}

double AffordanceLabeler::adjacency_threshold() const {
  return params_.adjacency_factor * mesh_->params().spacing();
}

// Candidates for the local region |closing| <= half opening + finger + pad,
// approach in [a_lo - pad, a_hi + pad], |width| <= half depth + pad.
void AffordanceLabeler::candidates(const GripperBox& g, double a_lo, double a_hi, double pad,
                                   std::vector<std::size_t>& out) const {
  const GripperGeometry& gg = g.geom;
  const double hc = 0.5 * gg.opening_w + gg.finger_thickness + pad;
  const double hw = 0.5 * gg.finger_depth + pad;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int sc : {-1, 1}) {
    for (double a : {a_lo - pad, a_hi + pad}) {
      for (int sw : {-1, 1}) {
        const Vec3 corner = g.center + g.axes * Vec3(sc * hc, a, sw * hw);
        lo = lo.cwiseMin(corner);
        hi = hi.cwiseMax(corner);
      }
    }
  }
  out.clear();
  index_.query(lo, hi, out);
}

double AffordanceLabeler::edge_percentage(const GripperBox& g) const {
  const double hl = 0.5 * g.geom.finger_len;
  candidates(g, -hl, hl, 0.0, scratch_);
  std::size_t inside = 0, boundary = 0;
  for (std::size_t n : scratch_) {
    if (!g.in_opening(mesh_->positions()[n])) continue;
    ++inside;
    boundary += boundary_[n];
  }
  return inside == 0 ? 0.0 : static_cast<double>(boundary) / static_cast<double>(inside);
}

bool AffordanceLabeler::collision_free(const GripperBox& g) const {
  const double hl = 0.5 * g.geom.finger_len;
  candidates(g, -hl, hl, 0.0, scratch_);
  for (std::size_t n : scratch_) {
    if (g.in_finger_slab(mesh_->positions()[n])) return false;
  }
  return true;
}

bool AffordanceLabeler::single_layer(const GripperBox& g) const {
  const GripperGeometry& gg = g.geom;
  const double radius = capture_radius();
  const double r2 = radius * radius;
  const double adj2 = adjacency_threshold() * adjacency_threshold();
  const double hl = 0.5 * gg.finger_len;
  candidates(g, -hl, hl, radius, scratch_);

  struct Local {
    std::size_t node;
    Vec3 l;
  };
  std::vector<Local> between;
  for (std::size_t n : scratch_) {
    const Vec3 l = g.local(mesh_->positions()[n]);
    if (std::abs(l.x()) <= 0.5 * gg.opening_w) between.push_back({n, l});
  }

  const int m = params_.ray_grid;
  bool any = false;
  std::vector<std::size_t> captured;
  for (int i = 0; i < m; ++i) {
    const double ra = -0.5 * gg.finger_len + (i + 0.5) * gg.finger_len / m;
    for (int j = 0; j < m; ++j) {
      const double rw = -0.5 * gg.finger_depth + (j + 0.5) * gg.finger_depth / m;
      captured.clear();
      for (const Local& c : between) {
        const double da = c.l.y() - ra, dw = c.l.z() - rw;
        if (da * da + dw * dw <= r2) captured.push_back(c.node);
      }
      if (!captured.empty()) any = true;
      const auto& uv = mesh_->undeformed();
      for (std::size_t p = 0; p < captured.size(); ++p) {
        for (std::size_t q = p + 1; q < captured.size(); ++q) {
          if ((uv[captured[p]] - uv[captured[q]]).squaredNorm() > adj2) return false;
        }
      }
    }
  }
  return any;
}

bool AffordanceLabeler::reachable(const GripperBox& g) const {
  const GripperGeometry& gg = g.geom;
  const double hl = 0.5 * gg.finger_len;
  candidates(g, -hl - params_.sweep_m, hl, 0.0, scratch_);
  const double hc = 0.5 * gg.opening_w + gg.finger_thickness;
  for (std::size_t n : scratch_) {
    const Vec3& p = mesh_->positions()[n];
    const Vec3 l = g.local(p);
    const bool swept = std::abs(l.x()) <= hc && std::abs(l.z()) <= 0.5 * gg.finger_depth &&
                       l.y() >= -hl - params_.sweep_m && l.y() <= hl;
    if (swept && !g.in_opening(p)) return false;
  }
  return true;
}

double AffordanceLabeler::affordance_at(const GripperBox& g) const {
  const double pct = edge_percentage(g);
  if (pct <= 0.0) return 0.0;
  if (!collision_free(g) || !single_layer(g) || !reachable(g)) return 0.0;
  return pct;
}

double edge_percentage(const ClothMesh& mesh, const GripperBox& g) {
  LabelParams p;
  p.gripper = g.geom;
  return AffordanceLabeler(mesh, p).edge_percentage(g);
}

bool collision_free(const ClothMesh& mesh, const GripperBox& g) {
  LabelParams p;
  p.gripper = g.geom;
  return AffordanceLabeler(mesh, p).collision_free(g);
}

bool single_layer(const ClothMesh& mesh, const GripperBox& g, const LabelParams& params) {
  return AffordanceLabeler(mesh, params).single_layer(g);
}

bool reachable(const ClothMesh& mesh, const GripperBox& g, const LabelParams& params) {
  return AffordanceLabeler(mesh, params).reachable(g);
}

double affordance_at(const ClothMesh& mesh, const GripperBox& g, const LabelParams& params) {
  return AffordanceLabeler(mesh, params).affordance_at(g);
}

AffordanceMap label_image(const ClothMesh& mesh, const RenderResult& scene,
                          const Mat3& grasp_orientation, const LabelParams& params) {
  AffordanceLabeler labeler(mesh, params);
  AffordanceMap out{Raster<double>(scene.depth.width(), scene.depth.height(), 0.0),
                    grasp_orientation};
  for (int row = 0; row < scene.depth.height(); ++row) {
    for (int col = 0; col < scene.depth.width(); ++col) {
      if (scene.depth(row, col) <= 0.0) continue;
      const auto p = back_project(mesh, scene.hits, row, col);
      if (!p) continue;
      out.values(row, col) = labeler.affordance_at(labeler.box_at(*p, grasp_orientation));
    }
  }
  return out;
}

AffordanceMap label_image(const ClothMesh& mesh, const Camera& cam, const Mat3& grasp_orientation,
                          const LabelParams& params) {
  return label_image(mesh, render_depth(mesh, cam), grasp_orientation, params);
}

}  // namespace vtc
