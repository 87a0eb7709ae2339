#include "run_config.hpp"

#include "dirsurf/config.hpp"
#include "dirsurf/errors.hpp"
#include "dirsurf/io.hpp"
#include "dirsurf/json_util.hpp"

namespace dirsurf::app {

using nlohmann::json;

namespace {
scenes::SceneSpec dataset_scene(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(io::read_text(dir / "scene.json"));
  } catch (const json::exception& e) {
    throw IoError("bad scene.json in " + dir.string() + ": " + e.what());
  }
  if (!j.contains("scene")) throw IoError("scene.json in " + dir.string() + " has no scene");
  return scenes::scene_from_json(j["scene"], "dataset.scene");
}

void apply_scene_defaults(RunConfig& c) {
  c.rig = scenes::default_rig_config(c.scene.dim);
  c.network.dim = c.scene.dim;
  if (c.scene.dim == 3) {
    c.train.iterations = 30000;
    c.train.rays_per_batch = 512;
    c.train.eval_resolution = 128;
    c.train.eval_points = 100000;
  }
}
}  // namespace

RunConfig default_run_config(const std::string& scene_id) {
  RunConfig c;
  c.scene = scenes::builtin_scene(scene_id);
  apply_scene_defaults(c);
  return c;
}

RunConfig run_config_from_json(const json& j) {
  json_util::require_object(j, "");
  json_util::check_keys(j, {"scene", "dataset", "rig", "network", "direction", "train", "sampling", "losses", "output", "seed"},
                        "");
  RunConfig c;
  if (j.contains("dataset")) {
    c.dataset = json_util::get<std::string>(j, "dataset", "", "");
    if (c.dataset->empty()) throw ConfigError("dataset", "must not be empty");
    // The dataset carries its own scene; an explicit one is only a cross-check.
    c.scene = dataset_scene(*c.dataset);
    if (j.contains("scene") && scenes::scene_from_json(j["scene"], "scene").id != c.scene.id)
      throw ConfigError("scene", "does not match the scene of dataset " + c.dataset->string());
  } else {
    c.scene = scenes::scene_from_json(j.value("scene", json("flat2d-disk")), "scene");
  }
  apply_scene_defaults(c);
  if (j.contains("rig")) c.rig = config::rig_from_json(j["rig"], "rig", c.rig);
  if (j.contains("network")) c.network = config::network_from_json(j["network"], "network", c.network);
  if (c.network.dim != c.scene.dim) throw ConfigError("network.dim", "does not match the scene dimension");
  if (j.contains("direction")) c.direction = config::direction_from_json(j["direction"], "direction", c.direction);
  if (j.contains("train")) c.train = config::train_from_json(j["train"], "train", c.train);
  if (j.contains("sampling")) c.sampling = config::sampling_from_json(j["sampling"], "sampling", c.sampling);
  if (j.contains("losses")) c.losses = config::losses_from_json(j["losses"], "losses", c.losses);
  c.output = json_util::get<std::string>(j, "output", "", "");
  if (j.contains("seed") && !j["seed"].is_number_unsigned()) throw ConfigError("seed", "must be a non-negative integer");
  c.seed = json_util::get<std::uint64_t>(j, "seed", 0, "");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("", "cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
  json j;
  if (c.dataset) {
    j["dataset"] = c.dataset->string();
  } else {
    j["scene"] = scenes::to_json(c.scene);
  }
  j["rig"] = config::to_json(c.rig);
  j["network"] = config::to_json(c.network);
  j["direction"] = config::to_json(c.direction);
  j["train"] = config::to_json(c.train);
  j["sampling"] = config::to_json(c.sampling);
  j["losses"] = config::to_json(c.losses);
  j["output"] = c.output.string();
  j["seed"] = c.seed;
  return j;
}

}  // namespace dirsurf::app
