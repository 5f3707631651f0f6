#pragma once

#include "vtc/affordance_learn.hpp"
#include "vtc/dataset.hpp"
#include "vtc/pipeline.hpp"
#include "vtc/sliding.hpp"
#include "vtc/tactile.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace vtc {

/// Settings for every tool, one section per module. Missing sections and keys keep
/// their defaults; the target environment defaults to default_target_env(env) and the
/// pipeline environment to the target environment.
struct RunConfig {
  EnvParams env;
  EnvParams target_env;
  TactileDatasetOptions tactile;
  TransferOptions transfer;
  SlidingPlant horizontal_plant = SlidingPlant::horizontal();
  RolloutOptions rollout;
  Eigen::Matrix3d lqr_q = default_lqr_q();
  double lqr_r = kDefaultLqrR;
  PipelineConfig pipeline;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
  /// Empty text gives the defaults.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

/// IoError when the file cannot be read, ContractError when it is not JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

TransferOptions transfer_options_from_json(const nlohmann::json& doc, TransferOptions base = {});
nlohmann::json transfer_options_to_json(const TransferOptions& o);

}  // namespace vtc
