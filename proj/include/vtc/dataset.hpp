#pragma once

#include "vtc/affordance_label.hpp"
#include "vtc/cloth.hpp"
#include "vtc/render.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vtc {

/// One simulated environment: cloth, camera and labeling geometry.
struct EnvParams {
  ClothParams cloth;
  ConfigurationOptions configuration;
  Camera camera;
  LabelParams label;
  ReachParams reach;
  RectangleSpec rectangles;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static EnvParams from_json(const nlohmann::json& doc);
};

/// Everything derived from one (configuration seed, rotation) pair.
struct SceneSample {
  std::uint64_t config_seed = 0;
  double rotation_deg = 0.0;
  ClothMesh mesh;
  RenderResult scene;
  DepthImage depth_aug;  // black-rectangle copy of scene.depth
  PixelMask reach;
  AffordanceMap affordance;
};

std::uint64_t configuration_seed(std::uint64_t base_seed, int index);

/// Builds the rotated scene from an already settled, unrotated configuration.
SceneSample make_scene(const EnvParams& env, const ClothMesh& settled, std::uint64_t config_seed,
                       double rotation_deg, bool with_labels = true);

struct ManifestEntry {
  int seed_index = 0;
  std::uint64_t config_seed = 0;
  double rotation_deg = 0.0;
  std::string depth;
  std::string depth_aug;
  std::string affordance;
  std::string reach_mask;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::uint64_t base_seed = 0;
  int n_seeds = 0;
  double rotation_increment_deg = 15.0;
  EnvParams env;
  std::vector<ManifestEntry> entries;

  nlohmann::json to_json() const;
  static DatasetManifest load(const std::filesystem::path& manifest_path);
};

/// Writes n_seeds x (360 / increment) depth/affordance pairs plus `manifest.json`.
/// On I/O failure every file written so far is removed before the IoError propagates.
DatasetManifest generate_dataset(const EnvParams& env, int n_seeds, double rotation_increment_deg,
                                 std::uint64_t base_seed, const std::filesystem::path& out_dir);

struct LoadedPair {
  DepthImage depth;
  DepthImage depth_aug;
  Raster<double> affordance;
  PixelMask reach;
};

LoadedPair load_pair(const DatasetManifest& manifest, const ManifestEntry& entry);

/// Affordance maps are stored as 16-bit PGM scaled by 65535.
void write_affordance(const std::filesystem::path& path, const Raster<double>& values);
Raster<double> read_affordance(const std::filesystem::path& path);

}  // namespace vtc
