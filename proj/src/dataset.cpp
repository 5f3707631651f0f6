#include "vtc/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace vtc {

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const nlohmann::json& a) { return Vec3(a.at(0), a.at(1), a.at(2)); }

std::string stem(int seed_index, int rotation_index, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "s%04d/r%03d_%s.pgm", seed_index, rotation_index, kind);
  return buf;
}

}  // namespace

nlohmann::json EnvParams::to_json() const {
  nlohmann::json doc;
  doc["cloth"] = cloth_params_to_json(cloth);
  doc["configuration"] = {{"pin_world", vec_json(configuration.pin_world)},
                          {"rotation_increment_deg", configuration.rotation_increment_deg},
                          {"impulse_speed", configuration.impulse_speed},
                          {"gravity", configuration.settle.gravity},
                          {"max_steps", configuration.settle.max_steps},
                          {"min_steps", configuration.settle.min_steps},
                          {"ke_eps", configuration.settle.ke_eps}};
  doc["camera"] = camera.to_json();
  const GripperGeometry& g = label.gripper;
  doc["label"] = {{"opening_w", g.opening_w},          {"finger_len", g.finger_len},
                  {"finger_depth", g.finger_depth},    {"finger_thickness", g.finger_thickness},
                  {"sweep_m", label.sweep_m},          {"ray_grid", label.ray_grid},
                  {"capture_factor", label.capture_factor},
                  {"adjacency_factor", label.adjacency_factor}};
  doc["reach"] = {{"clearance_m", reach.clearance_m},
                  {"bottom_fraction", reach.bottom_fraction},
                  {"approach_side", vec_json(reach.approach_side)}};
  doc["rectangles"] = {{"count_min", rectangles.count_min},
                       {"count_max", rectangles.count_max},
                       {"size_min_px", rectangles.size_min_px},
                       {"size_max_px", rectangles.size_max_px}};
  return doc;
}

EnvParams EnvParams::from_json(const nlohmann::json& doc) {
  EnvParams env;
  try {
    if (doc.contains("cloth")) env.cloth = cloth_params_from_json(doc["cloth"]);
    if (doc.contains("configuration")) {
      const auto& c = doc["configuration"];
      ConfigurationOptions& o = env.configuration;
      if (c.contains("pin_world")) o.pin_world = json_vec(c["pin_world"]);
      o.rotation_increment_deg = c.value("rotation_increment_deg", o.rotation_increment_deg);
      o.impulse_speed = c.value("impulse_speed", o.impulse_speed);
      o.settle.gravity = c.value("gravity", o.settle.gravity);
      o.settle.max_steps = c.value("max_steps", o.settle.max_steps);
      o.settle.min_steps = c.value("min_steps", o.settle.min_steps);
      o.settle.ke_eps = c.value("ke_eps", o.settle.ke_eps);
    }
    if (doc.contains("camera")) env.camera = Camera::from_json(doc["camera"]);
    if (doc.contains("label")) {
      const auto& l = doc["label"];
      GripperGeometry& g = env.label.gripper;
      g.opening_w = l.value("opening_w", g.opening_w);
      g.finger_len = l.value("finger_len", g.finger_len);
      g.finger_depth = l.value("finger_depth", g.finger_depth);
      g.finger_thickness = l.value("finger_thickness", g.finger_thickness);
      env.label.sweep_m = l.value("sweep_m", env.label.sweep_m);
      env.label.ray_grid = l.value("ray_grid", env.label.ray_grid);
      env.label.capture_factor = l.value("capture_factor", env.label.capture_factor);
      env.label.adjacency_factor = l.value("adjacency_factor", env.label.adjacency_factor);
    }
    if (doc.contains("reach")) {
      const auto& r = doc["reach"];
      env.reach.clearance_m = r.value("clearance_m", env.reach.clearance_m);
      env.reach.bottom_fraction = r.value("bottom_fraction", env.reach.bottom_fraction);
      if (r.contains("approach_side")) env.reach.approach_side = json_vec(r["approach_side"]);
    }
    if (doc.contains("rectangles")) {
      const auto& r = doc["rectangles"];
      RectangleSpec& s = env.rectangles;
      s.count_min = r.value("count_min", s.count_min);
      s.count_max = r.value("count_max", s.count_max);
      s.size_min_px = r.value("size_min_px", s.size_min_px);
      s.size_max_px = r.value("size_max_px", s.size_max_px);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("environment config: ") + e.what());
  }
  env.cloth.validate();
  env.camera.validate();
  env.label.validate();
  return env;
}

std::uint64_t configuration_seed(std::uint64_t base_seed, int index) {
  return derive_seed(base_seed, 0x5EED0000u + static_cast<std::uint64_t>(index));
}

SceneSample make_scene(const EnvParams& env, const ClothMesh& settled, std::uint64_t config_seed,
                       double rotation_deg, bool with_labels) {
  SceneSample s;
  s.config_seed = config_seed;
  s.rotation_deg = rotation_deg;
  s.mesh = rotate_about_vertical(settled, env.configuration.pin_world, rotation_deg);
  s.scene = render_depth(s.mesh, env.camera);
  const auto rot_tag = static_cast<std::uint64_t>(std::llround(rotation_deg * 1000.0));
  s.depth_aug = add_black_rectangles(s.scene.depth, derive_seed(config_seed, rot_tag), env.rectangles);
  s.reach = reachability_mask(s.scene.depth, s.scene.hits, s.mesh, env.configuration.pin_world,
                              env.reach);
  if (with_labels) {
    s.affordance = label_image(s.mesh, s.scene, default_grasp_axes(), env.label);
  } else {
    s.affordance.values = Raster<double>(env.camera.width, env.camera.height, 0.0);
    s.affordance.orientation = default_grasp_axes();
  }
  return s;
}

void write_affordance(const std::filesystem::path& path, const Raster<double>& values) {
  write_pgm16(path, quantize16(values, 1.0 / 65535.0));
}

Raster<double> read_affordance(const std::filesystem::path& path) {
  return dequantize16(read_pgm16(path), 1.0 / 65535.0);
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json doc;
  doc["format"] = "vtc.affordance_dataset";
  doc["version"] = 1;
  doc["base_seed"] = base_seed;
  doc["n_seeds"] = n_seeds;
  doc["rotation_increment_deg"] = rotation_increment_deg;
  doc["env"] = env.to_json();
  auto& items = doc["entries"] = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    items.push_back({{"seed_index", e.seed_index},
                     {"config_seed", e.config_seed},
                     {"rotation_deg", e.rotation_deg},
                     {"depth", e.depth},
                     {"depth_aug", e.depth_aug},
                     {"affordance", e.affordance},
                     {"reach_mask", e.reach_mask}});
  }
  return doc;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.at("format").get<std::string>() != "vtc.affordance_dataset") {
      throw ContractError("manifest: unexpected format tag");
    }
    if (doc.at("version").get<int>() != 1) throw ContractError("manifest: unsupported version");
    m.base_seed = doc.at("base_seed");
    m.n_seeds = doc.at("n_seeds");
    m.rotation_increment_deg = doc.at("rotation_increment_deg");
    m.env = EnvParams::from_json(doc.at("env"));
    for (const auto& e : doc.at("entries")) {
      m.entries.push_back(ManifestEntry{e.at("seed_index"), e.at("config_seed"),
                                        e.at("rotation_deg"), e.at("depth"), e.at("depth_aug"),
                                        e.at("affordance"), e.at("reach_mask")});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
  return m;
}

DatasetManifest generate_dataset(const EnvParams& env, int n_seeds, double rotation_increment_deg,
                                 std::uint64_t base_seed, const std::filesystem::path& out_dir) {
  if (n_seeds < 1) throw ContractError("generate_dataset: need at least one seed");
  if (!(rotation_increment_deg > 0.0 && rotation_increment_deg <= 360.0)) {
    throw ContractError("generate_dataset: rotation increment must be in (0, 360]");
  }
  const double turns = 360.0 / rotation_increment_deg;
  const int n_rot = static_cast<int>(std::llround(turns));
  if (std::abs(turns - n_rot) > 1e-9) {
    throw ContractError("generate_dataset: increment must divide 360");
  }

  DatasetManifest m;
  m.root = out_dir;
  m.base_seed = base_seed;
  m.n_seeds = n_seeds;
  m.rotation_increment_deg = rotation_increment_deg;
  m.env = env;
  m.env.configuration.rotation_increment_deg = rotation_increment_deg;

  std::vector<std::filesystem::path> written;
  std::vector<std::filesystem::path> created_dirs;
  auto cleanup = [&]() {
    std::error_code ec;
    for (const auto& p : written) std::filesystem::remove(p, ec);
    for (auto it = created_dirs.rbegin(); it != created_dirs.rend(); ++it) {
      std::filesystem::remove(*it, ec);
    }
  };

  try {
    std::error_code ec;
    if (!std::filesystem::exists(out_dir)) {
      if (!std::filesystem::create_directories(out_dir, ec) || ec) {
        throw IoError("cannot create output directory: " + out_dir.string());
      }
      created_dirs.push_back(out_dir);
    }
    for (int si = 0; si < n_seeds; ++si) {
      const std::uint64_t cseed = configuration_seed(base_seed, si);
      const ClothMesh settled = make_configuration(env.cloth, cseed, 0.0, m.env.configuration);
      const auto dir = out_dir / stem(si, 0, "x").substr(0, 5);
      if (!std::filesystem::exists(dir)) {
        if (!std::filesystem::create_directory(dir, ec) || ec) {
          throw IoError("cannot create directory: " + dir.string());
        }
        created_dirs.push_back(dir);
      }
      for (int ri = 0; ri < n_rot; ++ri) {
        const double rot = ri * rotation_increment_deg;
        const SceneSample s = make_scene(m.env, settled, cseed, rot);
        ManifestEntry e{si, cseed, rot, stem(si, ri, "depth"), stem(si, ri, "depth_aug"),
                        stem(si, ri, "afford"), stem(si, ri, "reach")};
        auto emit = [&](const std::string& rel, auto&& writer) {
          const auto path = out_dir / rel;
          written.push_back(path);
          writer(path);
        };
        emit(e.depth, [&](const auto& p) {
          written.push_back(std::filesystem::path(p).replace_extension(".json"));
          write_depth(p, s.scene.depth);
        });
        emit(e.depth_aug, [&](const auto& p) {
          written.push_back(std::filesystem::path(p).replace_extension(".json"));
          write_depth(p, s.depth_aug);
        });
        emit(e.affordance, [&](const auto& p) { write_affordance(p, s.affordance.values); });
        emit(e.reach_mask, [&](const auto& p) { write_mask(p, s.reach); });
        m.entries.push_back(std::move(e));
      }
    }
    const auto mpath = out_dir / "manifest.json";
    written.push_back(mpath);
    std::ofstream out(mpath);
    if (!out) throw IoError("cannot open for writing: " + mpath.string());
    out << m.to_json().dump(1) << '\n';
    if (!out) throw IoError("write failed: " + mpath.string());
  } catch (const IoError&) {
    cleanup();
    throw;
  }
  return m;
}

LoadedPair load_pair(const DatasetManifest& manifest, const ManifestEntry& entry) {
  LoadedPair p;
  p.depth = read_depth(manifest.root / entry.depth);
  p.depth_aug = read_depth(manifest.root / entry.depth_aug);
  p.affordance = read_affordance(manifest.root / entry.affordance);
  p.reach = read_mask(manifest.root / entry.reach_mask);
  return p;
}

}  // namespace vtc
