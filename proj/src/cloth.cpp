#include "vtc/cloth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace vtc {

namespace {

constexpr double kWeightG = 9.81;

double spring_constant(const ClothParams& p, const Spring& s) {
  double stiffness = p.stretch_stiffness;
  if (s.kind == SpringKind::shear) stiffness = p.shear_stiffness;
  if (s.kind == SpringKind::bend) stiffness = p.bend_stiffness;
  return stiffness * p.node_mass * kWeightG / s.rest;
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(std::string("invalid cloth parameters: ") + what);
}

}  // namespace

double ClothParams::spacing() const { return std::min(spacing_u(), spacing_v()); }

void ClothParams::validate() const {
  require(grid_w >= 4 && grid_h >= 4, "grid too small");
  require(width_m > 0.0 && height_m > 0.0, "cloth extent must be positive");
  require(stretch_stiffness > 0.0 && shear_stiffness > 0.0 && bend_stiffness > 0.0,
          "stiffness must be positive");
  require(node_mass > 0.0, "node mass must be positive");
  require(damping >= 0.0 && damping < 1.0, "damping must lie in [0,1)");
  require(corner_band_m > 0.0, "corner band must be positive");
  require(corner_band_m <= edge_band_m, "corner band exceeds edge band");
  require(edge_band_m < 0.5 * std::min(width_m, height_m), "edge band exceeds half the cloth");
}

ClothParams ClothParams::standard(double width_m, double height_m, int grid_w, int grid_h) {
  ClothParams p;
  p.width_m = width_m;
  p.height_m = height_m;
  p.grid_w = grid_w;
  p.grid_h = grid_h;
  if (grid_w >= 2 && grid_h >= 2) {
    p.edge_band_m = 1.5 * p.spacing();
    p.corner_band_m = p.edge_band_m;
  }
  return p;
}

const char* to_string(NodeClass c) {
  switch (c) {
    case NodeClass::interior: return "interior";
    case NodeClass::edge: return "edge";
    case NodeClass::corner: return "corner";
  }
  return "?";
}

std::size_t ClothMesh::triangle_count() const {
  return 2 * static_cast<std::size_t>(params_.grid_w - 1) * (params_.grid_h - 1);
}

std::array<std::size_t, 3> ClothMesh::triangle(std::size_t t) const {
  const std::size_t cell = t / 2;
  const int i = static_cast<int>(cell % (params_.grid_w - 1));
  const int j = static_cast<int>(cell / (params_.grid_w - 1));
  const std::size_t a = index(i, j), b = index(i + 1, j), c = index(i + 1, j + 1),
                    d = index(i, j + 1);
  if (t % 2 == 0) return {a, b, c};
  return {a, c, d};
}

void ClothMesh::build_topology() {
  springs_.clear();
  const int gw = params_.grid_w, gh = params_.grid_h;
  auto add = [&](int i0, int j0, int i1, int j1, SpringKind kind) {
    if (i1 < 0 || i1 >= gw || j1 < 0 || j1 >= gh) return;
    Spring s;
    s.a = index(i0, j0);
    s.b = index(i1, j1);
    s.kind = kind;
    s.rest = (undeformed_[s.b] - undeformed_[s.a]).norm();
    springs_.push_back(s);
  };
  for (int j = 0; j < gh; ++j) {
    for (int i = 0; i < gw; ++i) {
      add(i, j, i + 1, j, SpringKind::stretch);
      add(i, j, i, j + 1, SpringKind::stretch);
      add(i, j, i + 1, j + 1, SpringKind::shear);
      add(i, j, i - 1, j + 1, SpringKind::shear);
      add(i, j, i + 2, j, SpringKind::bend);
      add(i, j, i, j + 2, SpringKind::bend);
    }
  }
}

ClothMesh build_cloth(const ClothParams& params, const std::vector<Pin>& pins,
                      const RestFrame& frame) {
  params.validate();
  if (pins.empty()) throw ContractError("build_cloth: at least one pin is required");
  for (const Pin& pin : pins) {
    if (pin.node >= params.node_count()) throw ContractError("build_cloth: pin index out of range");
  }

  ClothMesh mesh;
  mesh.params_ = params;
  const std::size_t n = params.node_count();
  mesh.undeformed_.resize(n);
  for (int j = 0; j < params.grid_h; ++j) {
    for (int i = 0; i < params.grid_w; ++i) {
      mesh.undeformed_[mesh.index(i, j)] = Vec2(i * params.spacing_u(), j * params.spacing_v());
    }
  }

  const Vec2 anchor_uv = mesh.undeformed_[pins.front().node];
  const double c = std::cos(deg2rad(frame.in_plane_deg)), s = std::sin(deg2rad(frame.in_plane_deg));
  const Eigen::AngleAxisd yaw(deg2rad(frame.yaw_deg), Vec3::UnitZ());
  const bool identity = frame.in_plane_deg == 0.0 && frame.yaw_deg == 0.0;

  mesh.positions_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 d = mesh.undeformed_[k] - anchor_uv;
    Vec3 local(d.x(), 0.0, -d.y());
    if (!identity) {
      // in-plane rotation within x-z, then yaw
      local = Vec3(c * d.x() + s * d.y(), 0.0, s * d.x() - c * d.y());
      local = yaw * local;
    }
    mesh.positions_[k] = pins.front().world + local;
  }
  mesh.pins_ = pins;
  mesh.pinned_mask_.assign(n, 0);
  for (const Pin& pin : pins) {
    mesh.pinned_mask_[pin.node] = 1;
    mesh.positions_[pin.node] = pin.world;
  }
  mesh.velocities_.assign(n, Vec3::Zero());
  mesh.build_topology();
  return mesh;
}

double settle_dt(const ClothParams& p) {
  const double s = p.spacing();
  const double k_per_mass =
      kWeightG * std::max({p.stretch_stiffness / s, p.shear_stiffness / (s * std::sqrt(2.0)),
                           p.bend_stiffness / (2.0 * s)});
  return 0.4 * std::sqrt(1.0 / k_per_mass);
}

double kinetic_energy(const ClothMesh& mesh) {
  double ke = 0.0;
  for (const Vec3& v : mesh.velocities()) ke += v.squaredNorm();
  return 0.5 * mesh.params().node_mass * ke;
}

double total_energy(const ClothMesh& mesh, double gravity) {
  const ClothParams& p = mesh.params();
  double e = kinetic_energy(mesh);
  for (const Spring& s : mesh.springs()) {
    const double stretch = (mesh.positions()[s.b] - mesh.positions()[s.a]).norm() - s.rest;
    e += 0.5 * spring_constant(p, s) * stretch * stretch;
  }
  for (const Vec3& x : mesh.positions()) e += -p.node_mass * gravity * x.z();
  return e;
}

double max_stretch_strain(const ClothMesh& mesh) {
  double worst = 0.0;
  for (const Spring& s : mesh.springs()) {
    if (s.kind != SpringKind::stretch) continue;
    const double len = (mesh.positions()[s.b] - mesh.positions()[s.a]).norm();
    worst = std::max(worst, std::abs(len - s.rest) / s.rest);
  }
  return worst;
}

SettleStats settle_in_place(ClothMesh& mesh, const SettleOptions& opts) {
  const ClothParams& p = mesh.params();
  const double dt = settle_dt(p);
  const std::size_t n = mesh.size();
  std::vector<double> k(mesh.springs().size());
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = spring_constant(p, mesh.springs()[i]);

  auto& x = mesh.positions();
  auto& v = mesh.velocities();
  std::vector<Vec3> force(n);
  const Vec3 gravity_acc(0.0, 0.0, opts.gravity);
  const double keep = 1.0 - p.damping;
  const double inv_m = 1.0 / p.node_mass;

  SettleStats stats;
  stats.dt = dt;
  for (long step = 0; step < opts.max_steps; ++step) {
    std::fill(force.begin(), force.end(), Vec3::Zero());
    for (std::size_t si = 0; si < k.size(); ++si) {
      const Spring& s = mesh.springs()[si];
      const Vec3 d = x[s.b] - x[s.a];
      const double len = d.norm();
      if (len <= 0.0) continue;
      const Vec3 f = (k[si] * (len - s.rest) / len) * d;
      force[s.a] += f;
      force[s.b] -= f;
    }
    double ke = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mesh.is_pinned(i)) {
        v[i].setZero();
        continue;
      }
      v[i] += dt * (force[i] * inv_m + gravity_acc);
      v[i] *= keep;
      x[i] += dt * v[i];
      if (!x[i].allFinite()) throw SimulationError("cloth simulation diverged", step);
      ke += v[i].squaredNorm();
    }
    ke *= 0.5 * p.node_mass;
    stats.steps = step + 1;
    stats.kinetic_energy = ke;
    if (step + 1 >= opts.min_steps && ke < opts.ke_eps) break;
  }
  return stats;
}

ClothMesh settle(ClothMesh mesh, const SettleOptions& opts, SettleStats* stats) {
  SettleStats s = settle_in_place(mesh, opts);
  if (stats) *stats = s;
  return mesh;
}

NodeClass classify_node(const ClothParams& p, const Vec2& uv) {
  const double du = std::min(uv.x(), p.width_m - uv.x());
  const double dv = std::min(uv.y(), p.height_m - uv.y());
  if (du <= p.corner_band_m && dv <= p.corner_band_m) return NodeClass::corner;
  if (std::min(du, dv) <= p.edge_band_m) return NodeClass::edge;
  return NodeClass::interior;
}

NodeClass classify_node(const ClothMesh& mesh, std::size_t node) {
  return classify_node(mesh.params(), mesh.undeformed()[node]);
}

ClothMesh rotate_about_vertical(const ClothMesh& mesh, const Vec3& pivot, double degrees) {
  double r = std::fmod(degrees, 360.0);
  if (r < 0.0) r += 360.0;
  if (r == 0.0) return mesh;
  const Eigen::AngleAxisd rot(deg2rad(r), Vec3::UnitZ());
  const Mat3 m = rot.toRotationMatrix();
  ClothMesh out = mesh;
  for (Vec3& x : out.positions()) x = pivot + m * (x - pivot);
  for (Vec3& v : out.velocities()) v = m * v;
  return out;
}

ClothMesh hang_from_node(const ClothParams& params, std::size_t node, std::uint64_t seed,
                         const ConfigurationOptions& opts) {
  params.validate();
  if (node >= params.node_count()) throw ContractError("hang_from_node: node index out of range");
  Rng rng(derive_seed(seed, 0xC10u));

  const int gw = params.grid_w;
  const Vec2 uv(static_cast<double>(node % gw) * params.spacing_u(),
                static_cast<double>(node / gw) * params.spacing_v());
  // Rest sheet coordinates: (u - u_p) along x, -(v - v_p) along z. Rotate so the cloth
  // centre hangs straight below the pin, plus a little jitter.
  const double cx = 0.5 * params.width_m - uv.x();
  const double cz = -(0.5 * params.height_m - uv.y());
  double in_plane = -90.0 - rad2deg(std::atan2(cz, cx));
  if (std::abs(cx) < 1e-12 && std::abs(cz) < 1e-12) in_plane = 0.0;
  in_plane += uniform(rng, -12.0, 12.0);
  RestFrame frame;
  frame.in_plane_deg = in_plane;
  frame.yaw_deg = uniform(rng, 0.0, 360.0);

  ClothMesh mesh = build_cloth(params, {Pin{node, opts.pin_world}}, frame);

  // Seeded smooth horizontal impulse field.
  struct Mode {
    double fu, fv, phase, ax, ay;
  };
  std::vector<Mode> modes(3);
  for (Mode& m : modes) {
    m.fu = uniform(rng, 0.3, 1.6);
    m.fv = uniform(rng, 0.3, 1.6);
    m.phase = uniform(rng, 0.0, 2.0 * kPi);
    const double dir = uniform(rng, 0.0, 2.0 * kPi);
    m.ax = std::cos(dir);
    m.ay = std::sin(dir);
  }
  for (std::size_t k = 0; k < mesh.size(); ++k) {
    if (mesh.is_pinned(k)) continue;
    const double un = mesh.undeformed()[k].x() / params.width_m;
    const double vn = mesh.undeformed()[k].y() / params.height_m;
    Vec3 vel = Vec3::Zero();
    for (const Mode& m : modes) {
      const double w = std::sin(2.0 * kPi * (m.fu * un + m.fv * vn) + m.phase);
      vel += Vec3(m.ax * w, m.ay * w, 0.0);
    }
    mesh.velocities()[k] = (opts.impulse_speed / std::sqrt(3.0)) * vel;
  }
  settle_in_place(mesh, opts.settle);
  for (Vec3& v : mesh.velocities()) v.setZero();
  return mesh;
}

ClothMesh make_configuration(const ClothParams& params, std::uint64_t seed, double rotation_deg,
                             const ConfigurationOptions& opts) {
  const double inc = opts.rotation_increment_deg;
  if (!(inc > 0.0)) throw ContractError("make_configuration: rotation increment must be positive");
  const double q = rotation_deg / inc;
  if (std::abs(q - std::round(q)) > 1e-9) {
    throw ContractError("make_configuration: rotation must be a multiple of the increment");
  }
  params.validate();
  Rng rng(derive_seed(seed, 0xB0u));
  // Boundary ring of the grid.
  std::vector<std::size_t> boundary;
  for (int j = 0; j < params.grid_h; ++j) {
    for (int i = 0; i < params.grid_w; ++i) {
      if (i == 0 || j == 0 || i == params.grid_w - 1 || j == params.grid_h - 1) {
        boundary.push_back(static_cast<std::size_t>(j) * params.grid_w + i);
      }
    }
  }
  const std::size_t node = boundary[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<int>(boundary.size()) - 1))];
  ClothMesh settled = hang_from_node(params, node, seed, opts);
  return rotate_about_vertical(settled, opts.pin_world, rotation_deg);
}

nlohmann::json cloth_params_to_json(const ClothParams& p) {
  return {{"width_m", p.width_m},
          {"height_m", p.height_m},
          {"grid_w", p.grid_w},
          {"grid_h", p.grid_h},
          {"stretch_stiffness", p.stretch_stiffness},
          {"shear_stiffness", p.shear_stiffness},
          {"bend_stiffness", p.bend_stiffness},
          {"node_mass", p.node_mass},
          {"damping", p.damping},
          {"edge_band_m", p.edge_band_m},
          {"corner_band_m", p.corner_band_m}};
}

ClothParams cloth_params_from_json(const nlohmann::json& jp) {
  ClothParams p;
  p.width_m = jp.value("width_m", p.width_m);
  p.height_m = jp.value("height_m", p.height_m);
  p.grid_w = jp.value("grid_w", p.grid_w);
  p.grid_h = jp.value("grid_h", p.grid_h);
  p.stretch_stiffness = jp.value("stretch_stiffness", p.stretch_stiffness);
  p.shear_stiffness = jp.value("shear_stiffness", p.shear_stiffness);
  p.bend_stiffness = jp.value("bend_stiffness", p.bend_stiffness);
  p.node_mass = jp.value("node_mass", p.node_mass);
  p.damping = jp.value("damping", p.damping);
  p.edge_band_m = jp.value("edge_band_m", p.edge_band_m);
  p.corner_band_m = jp.value("corner_band_m", p.corner_band_m);
  return p;
}

nlohmann::json ClothMesh::to_json() const {
  nlohmann::json doc;
  doc["format"] = "vtc.cloth_mesh";
  doc["version"] = 1;
  doc["params"] = cloth_params_to_json(params_);
  auto& und = doc["undeformed"] = nlohmann::json::array();
  for (const Vec2& u : undeformed_) und.push_back({u.x(), u.y()});
  auto& pos = doc["positions"] = nlohmann::json::array();
  for (const Vec3& x : positions_) pos.push_back({x.x(), x.y(), x.z()});
  auto& pins = doc["pins"] = nlohmann::json::array();
  for (const Pin& pin : pins_) {
    pins.push_back({{"node", pin.node}, {"world", {pin.world.x(), pin.world.y(), pin.world.z()}}});
  }
  return doc;
}

ClothMesh ClothMesh::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "vtc.cloth_mesh") {
      throw ContractError("mesh document: unexpected format tag");
    }
    if (doc.at("version").get<int>() != 1) throw ContractError("mesh document: unsupported version");
    const ClothParams p = cloth_params_from_json(doc.at("params"));
    std::vector<Pin> pins;
    for (const auto& jpin : doc.at("pins")) {
      const auto& w = jpin.at("world");
      pins.push_back(Pin{jpin.at("node").get<std::size_t>(), Vec3(w.at(0), w.at(1), w.at(2))});
    }
    ClothMesh mesh = build_cloth(p, pins);
    const auto& pos = doc.at("positions");
    if (pos.size() != mesh.size()) throw ContractError("mesh document: position count mismatch");
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      mesh.positions_[k] = Vec3(pos[k].at(0), pos[k].at(1), pos[k].at(2));
    }
    const auto& und = doc.at("undeformed");
    if (und.size() != mesh.size()) throw ContractError("mesh document: undeformed count mismatch");
    for (std::size_t k = 0; k < mesh.size(); ++k) {
      const Vec2 u(und[k].at(0), und[k].at(1));
      if ((u - mesh.undeformed_[k]).norm() > 1e-12) {
        throw ContractError("mesh document: undeformed coordinates do not match the grid");
      }
    }
    return mesh;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("mesh document: ") + e.what());
  }
}

}  // namespace vtc
