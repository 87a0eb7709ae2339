#pragma once

// Run configuration: one JSON document describing a reconstruction run.
//
//   {
//     "scene":     "<builtin id>" | {scene object},   (ignored when "dataset" is set)
//     "dataset":   "<dataset directory>",             optional
//     "rig":       {views, width, height, distance, fov_deg, angle_offset_deg},
//     "network":   {...}, "direction": {...}, "train": {...},
//     "sampling":  {coarse, fine, jitter}, "losses": {color, eikonal, mask},
//     "output":    "<directory>",
//     "seed":      <unsigned integer>
//   }
//
// Unknown keys are rejected at every level. Missing fields take defaults; the
// resolved form spells out every field and loads back to itself.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "dirsurf/dirparam.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/render.hpp"
#include "dirsurf/scenes.hpp"
#include "dirsurf/train.hpp"

namespace dirsurf::app {

struct RunConfig {
  scenes::SceneSpec scene;
  std::optional<std::filesystem::path> dataset;
  scenes::RigConfig rig;
  nets::NetworkConfig network;
  dirparam::DirectionalConfig direction;
  train::TrainConfig train;
  render::SamplingConfig sampling;
  train::LossWeights losses;
  std::filesystem::path output;
  std::uint64_t seed = 0;
};

/// Defaults for a scene id: the scene's rig, network dim and the 3D iteration/batch sizes.
RunConfig default_run_config(const std::string& scene_id = "flat2d-disk");

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace dirsurf::app
