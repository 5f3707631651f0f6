#pragma once

#include "vtc/cloth.hpp"
#include "vtc/common.hpp"
#include "vtc/image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>

namespace vtc {

/// Pinhole camera with square pixels. Depth is measured along the optical axis.
struct Camera {
  Vec3 position{0.0, -0.9, -0.22};
  Vec3 look_at{0.0, 0.0, -0.22};
  Vec3 up{0.0, 0.0, 1.0};
  double hfov_deg = 40.0;
  int width = 128;
  int height = 128;
  double near_m = 0.1;
  double far_m = 3.0;

  void validate() const;

  Vec3 forward() const;
  Vec3 right() const;
  Vec3 camera_up() const;
  double focal_px() const;

  /// Continuous image coordinates (x = col + 0.5 at a pixel center) and depth.
  struct Projection {
    double x = 0.0;
    double y = 0.0;
    double depth = 0.0;
  };
  Projection project(const Vec3& p) const;
  /// Ray direction through the center of pixel (row, col), scaled so that its
  /// component along forward() is 1.
  Vec3 ray(int row, int col) const;

  nlohmann::json to_json() const;
  static Camera from_json(const nlohmann::json& doc);
};

struct Hit {
  int triangle = -1;
  double b1 = 0.0;
  double b2 = 0.0;
};

using HitMap = Raster<Hit>;

struct RenderResult {
  DepthImage depth;
  HitMap hits;
};

/// Ray casts every pixel against the cloth triangles (nearest hit wins).
RenderResult render_depth(const ClothMesh& mesh, const Camera& cam);

/// World point under pixel (row, col), if the pixel hit the cloth.
std::optional<Vec3> back_project(const ClothMesh& mesh, const HitMap& hits, int row, int col);

PixelMask cloth_mask(const DepthImage& depth);

struct RectangleSpec {
  int count_min = 0;
  int count_max = 4;
  double size_min_px = 4.0;
  double size_max_px = 22.0;
};

/// Zeroes seeded random rotated rectangles; never creates nonzero pixels.
DepthImage add_black_rectangles(const DepthImage& img, std::uint64_t seed, const RectangleSpec& spec);

struct ReachParams {
  double clearance_m = 0.04;
  double bottom_fraction = 0.2;
  Vec3 approach_side{1.0, 0.0, 0.0};  // the grasping arm comes from this side
};

/// Cloth pixels that are clear of the holding gripper, on the approach-side half of the
/// cloth, and above the bottom fraction of the cloth's vertical extent.
PixelMask reachability_mask(const DepthImage& img, const HitMap& hits, const ClothMesh& mesh,
                            const Vec3& holding_gripper, const ReachParams& params = {});

}  // namespace vtc
