#pragma once

#include "vtc/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace vtc {

/// Material and discretization of a rectangular cloth.
///
/// Spring constants are dimensionless: a spring strained by e pulls with a force of
/// `stiffness * e` node weights (node_mass * 9.81 N). Bands are measured in the
/// undeformed (u, v) frame.
struct ClothParams {
  double width_m = 0.30;
  double height_m = 0.30;
  int grid_w = 25;
  int grid_h = 25;
  double stretch_stiffness = 5000.0;
  double shear_stiffness = 800.0;
  double bend_stiffness = 60.0;
  double node_mass = 3.6e-5;
  double damping = 0.004;
  double edge_band_m = 0.01875;
  double corner_band_m = 0.01875;

  double spacing_u() const { return width_m / (grid_w - 1); }
  double spacing_v() const { return height_m / (grid_h - 1); }
  double spacing() const;
  std::size_t node_count() const { return static_cast<std::size_t>(grid_w) * grid_h; }

  /// Throws ContractError naming the first violated invariant.
  void validate() const;

  /// Parameters with bands set to 1.5x the node spacing.
  static ClothParams standard(double width_m, double height_m, int grid_w, int grid_h);
};

/// Missing keys keep their defaults; the result is not validated.
nlohmann::json cloth_params_to_json(const ClothParams& p);
ClothParams cloth_params_from_json(const nlohmann::json& doc);

enum class NodeClass { interior, edge, corner };

const char* to_string(NodeClass c);

struct Pin {
  std::size_t node = 0;
  Vec3 world = Vec3::Zero();
};

enum class SpringKind : std::uint8_t { stretch, shear, bend };

struct Spring {
  std::size_t a = 0;
  std::size_t b = 0;
  double rest = 0.0;
  SpringKind kind = SpringKind::stretch;
};

/// Orientation of the flat rest sheet before translation onto the first pin.
///
/// The sheet starts in the world x-z plane with +u along +x and +v along -z, is
/// rotated in-plane about the first pinned node, then yawed about the vertical.
struct RestFrame {
  double in_plane_deg = 0.0;
  double yaw_deg = 0.0;
};

class ClothMesh {
 public:
  ClothMesh() = default;

  const ClothParams& params() const { return params_; }
  std::size_t size() const { return undeformed_.size(); }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * params_.grid_w + i; }

  const std::vector<Vec3>& positions() const { return positions_; }
  std::vector<Vec3>& positions() { return positions_; }
  const std::vector<Vec3>& velocities() const { return velocities_; }
  std::vector<Vec3>& velocities() { return velocities_; }
  const std::vector<Vec2>& undeformed() const { return undeformed_; }
  const std::vector<Pin>& pins() const { return pins_; }
  const std::vector<Spring>& springs() const { return springs_; }
  bool is_pinned(std::size_t node) const { return pinned_mask_[node] != 0; }

  /// Two triangles per grid cell; triangle t uses cell t/2.
  std::size_t triangle_count() const;
  std::array<std::size_t, 3> triangle(std::size_t t) const;

  nlohmann::json to_json() const;
  static ClothMesh from_json(const nlohmann::json& doc);

 private:
  friend ClothMesh build_cloth(const ClothParams&, const std::vector<Pin>&, const RestFrame&);

  ClothParams params_;
  std::vector<Vec3> positions_;
  std::vector<Vec3> velocities_;
  std::vector<Vec2> undeformed_;
  std::vector<Pin> pins_;
  std::vector<std::uint8_t> pinned_mask_;
  std::vector<Spring> springs_;

  void build_topology();
};

ClothMesh build_cloth(const ClothParams& params, const std::vector<Pin>& pins,
                      const RestFrame& frame = {});

struct SettleOptions {
  double gravity = -9.81;  // m/s^2 along world z
  long max_steps = 20000;
  long min_steps = 400;
  double ke_eps = 2e-8;  // J
};

struct SettleStats {
  long steps = 0;
  double kinetic_energy = 0.0;
  double dt = 0.0;
};

/// Stable explicit step size for the stiffest spring of `params`.
double settle_dt(const ClothParams& params);

/// Damped semi-implicit Euler integration of `mesh` in place.
SettleStats settle_in_place(ClothMesh& mesh, const SettleOptions& opts);
ClothMesh settle(ClothMesh mesh, const SettleOptions& opts, SettleStats* stats = nullptr);

/// Kinetic + spring + gravitational energy (J).
double total_energy(const ClothMesh& mesh, double gravity);
double kinetic_energy(const ClothMesh& mesh);
/// Largest |len - rest| / rest over stretch springs.
double max_stretch_strain(const ClothMesh& mesh);

NodeClass classify_node(const ClothParams& params, const Vec2& uv);
NodeClass classify_node(const ClothMesh& mesh, std::size_t node);

struct ConfigurationOptions {
  Vec3 pin_world = Vec3::Zero();
  double rotation_increment_deg = 15.0;
  double impulse_speed = 0.6;  // peak horizontal speed of the initial impulse field, m/s
  SettleOptions settle;
};

/// Seeded hanging configuration rotated about the vertical through the pin.
ClothMesh make_configuration(const ClothParams& params, std::uint64_t seed, double rotation_deg,
                             const ConfigurationOptions& opts = {});

/// Settled configuration hanging from `node` (no rotation applied).
ClothMesh hang_from_node(const ClothParams& params, std::size_t node, std::uint64_t seed,
                         const ConfigurationOptions& opts = {});

/// Rigid rotation about the vertical axis through `pivot`. Exact identity for multiples of 360.
ClothMesh rotate_about_vertical(const ClothMesh& mesh, const Vec3& pivot, double degrees);

}  // namespace vtc
