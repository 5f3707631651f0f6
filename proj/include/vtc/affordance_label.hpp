#pragma once

#include "vtc/cloth.hpp"
#include "vtc/common.hpp"
#include "vtc/image.hpp"
#include "vtc/render.hpp"

#include <cstdint>
#include <unordered_map>
#include <vector>

namespace vtc {

/// Parallel-jaw gripper extents (meters).
struct GripperGeometry {
  double opening_w = 0.030;         // between finger inner faces
  double finger_len = 0.020;        // along the approach axis
  double finger_depth = 0.020;      // along the finger-width axis
  double finger_thickness = 0.010;  // each finger slab, along the closing axis

  void validate() const;
};

/// Gripper frame: column 0 is the closing axis (finger to finger), column 1 the approach
/// axis (direction of travel), column 2 their cross product.
Mat3 grasp_axes(const Vec3& closing, const Vec3& approach);

/// Fixed grasp orientation: approach travelling along -x (arm on the +x side), fingers
/// closing along the camera's viewing axis (+y), finger width vertical.
Mat3 default_grasp_axes();

struct GripperBox {
  Vec3 center = Vec3::Zero();
  Mat3 axes = Mat3::Identity();
  GripperGeometry geom;

  /// Coordinates of `p` in the gripper frame.
  Vec3 local(const Vec3& p) const { return axes.transpose() * (p - center); }

  bool in_opening(const Vec3& p) const;
  bool in_finger_slab(const Vec3& p) const;
};

struct LabelParams {
  GripperGeometry gripper;
  double sweep_m = 0.15;
  int ray_grid = 5;
  double capture_factor = 0.75;    // capture radius in node spacings
  double adjacency_factor = 2.0;   // adjacency threshold in node spacings

  void validate() const;
};

/// Uniform hash grid over current node positions.
class NodeIndex {
 public:
  NodeIndex(const std::vector<Vec3>& points, double cell);
  /// Appends indices of all points whose cell intersects [lo, hi].
  void query(const Vec3& lo, const Vec3& hi, std::vector<std::size_t>& out) const;

 private:
  using Key = std::int64_t;
  static Key key(int i, int j, int k);
  int coord(double x) const { return static_cast<int>(std::floor(x / cell_)); }

  double cell_;
  std::unordered_map<Key, std::vector<std::size_t>> cells_;
};

/// Evaluates the four geometric grasp criteria on one settled mesh.
class AffordanceLabeler {
 public:
  AffordanceLabeler(const ClothMesh& mesh, const LabelParams& params = {});

  const LabelParams& params() const { return params_; }
  GripperBox box_at(const Vec3& center, const Mat3& axes) const;

  /// Fraction of nodes in the opening that are edge or corner; 0 when empty.
  double edge_percentage(const GripperBox& g) const;
  /// No node inside either finger slab.
  bool collision_free(const GripperBox& g) const;
  /// Every finger-to-finger ray captures only mutually adjacent nodes, and some ray
  /// captures at least one.
  bool single_layer(const GripperBox& g) const;
  /// The approach sweep contains no node outside the final opening.
  bool reachable(const GripperBox& g) const;
  /// edge_percentage gated by the three boolean criteria.
  double affordance_at(const GripperBox& g) const;

  double capture_radius() const;
  double adjacency_threshold() const;

 private:
  void candidates(const GripperBox& g, double a_lo, double a_hi, double pad,
                  std::vector<std::size_t>& out) const;

  const ClothMesh* mesh_;
  LabelParams params_;
  NodeIndex index_;
  std::vector<std::uint8_t> boundary_;  // edge or corner
  mutable std::vector<std::size_t> scratch_;
};

double edge_percentage(const ClothMesh& mesh, const GripperBox& g);
bool collision_free(const ClothMesh& mesh, const GripperBox& g);
bool single_layer(const ClothMesh& mesh, const GripperBox& g, const LabelParams& params = {});
bool reachable(const ClothMesh& mesh, const GripperBox& g, const LabelParams& params = {});
double affordance_at(const ClothMesh& mesh, const GripperBox& g, const LabelParams& params = {});

struct AffordanceMap {
  Raster<double> values;
  Mat3 orientation = Mat3::Identity();
};

/// Per-pixel affordance with the gripper centered on the back-projected surface point.
AffordanceMap label_image(const ClothMesh& mesh, const RenderResult& scene,
                          const Mat3& grasp_orientation, const LabelParams& params = {});
AffordanceMap label_image(const ClothMesh& mesh, const Camera& cam, const Mat3& grasp_orientation,
                          const LabelParams& params = {});

}  // namespace vtc
