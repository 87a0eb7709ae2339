#include "dirsurf/config.hpp"

#include <cmath>

#include "dirsurf/errors.hpp"
#include "dirsurf/json_util.hpp"

namespace dirsurf::config {

using json_util::check_keys;
using json_util::get;
using json_util::join;

namespace {
void require_positive(int v, const std::string& path) {
  if (v <= 0) throw ConfigError(path, "must be positive");
}
void require_nonnegative(double v, const std::string& path) {
  if (!(v >= 0.0)) throw ConfigError(path, "must be >= 0");
}
}  // namespace

json to_json(const nets::PeConfig& c) { return {{"frequencies", c.num_frequencies}, {"identity", c.include_identity}}; }

nets::PeConfig pe_from_json(const json& j, const std::string& path, nets::PeConfig c) {
  check_keys(j, {"frequencies", "identity"}, path);
  c.num_frequencies = get<int>(j, "frequencies", c.num_frequencies, path);
  c.include_identity = get<bool>(j, "identity", c.include_identity, path);
  if (c.num_frequencies < 0) throw ConfigError(join(path, "frequencies"), "must be >= 0");
  if (c.num_frequencies > 16) throw ConfigError(join(path, "frequencies"), "at most 16 octaves");
  if (!c.include_identity && c.num_frequencies == 0) throw ConfigError(path, "encoding would be empty");
  return c;
}

json to_json(const nets::NetworkConfig& c) {
  return {{"dim", c.dim},
          {"position_pe", to_json(c.position_pe)},
          {"radiance_position_pe", to_json(c.radiance_position_pe)},
          {"sdf_width", c.sdf_width},
          {"sdf_depth", c.sdf_depth},
          {"sdf_skips", c.sdf_skips},
          {"softplus_beta", c.softplus_beta},
          {"feature_dim", c.feature_dim},
          {"radiance_width", c.radiance_width},
          {"radiance_depth", c.radiance_depth},
          {"init_radius", c.init_radius},
          {"s_init", c.s_init}};
}

nets::NetworkConfig network_from_json(const json& j, const std::string& path, nets::NetworkConfig c) {
  check_keys(j,
             {"dim", "position_pe", "radiance_position_pe", "sdf_width", "sdf_depth", "sdf_skips", "softplus_beta",
              "feature_dim", "radiance_width", "radiance_depth", "init_radius", "s_init"},
             path);
  c.dim = get<int>(j, "dim", c.dim, path);
  if (j.contains("position_pe")) c.position_pe = pe_from_json(j["position_pe"], join(path, "position_pe"), c.position_pe);
  if (j.contains("radiance_position_pe"))
    c.radiance_position_pe =
        pe_from_json(j["radiance_position_pe"], join(path, "radiance_position_pe"), c.radiance_position_pe);
  c.sdf_width = get<int>(j, "sdf_width", c.sdf_width, path);
  c.sdf_depth = get<int>(j, "sdf_depth", c.sdf_depth, path);
  c.sdf_skips = get<std::vector<int>>(j, "sdf_skips", c.sdf_skips, path);
  c.softplus_beta = get<double>(j, "softplus_beta", c.softplus_beta, path);
  c.feature_dim = get<int>(j, "feature_dim", c.feature_dim, path);
  c.radiance_width = get<int>(j, "radiance_width", c.radiance_width, path);
  c.radiance_depth = get<int>(j, "radiance_depth", c.radiance_depth, path);
  c.init_radius = get<double>(j, "init_radius", c.init_radius, path);
  c.s_init = get<double>(j, "s_init", c.s_init, path);
  if (c.dim != 2 && c.dim != 3) throw ConfigError(join(path, "dim"), "must be 2 or 3");
  require_positive(c.sdf_width, join(path, "sdf_width"));
  require_positive(c.sdf_depth, join(path, "sdf_depth"));
  require_positive(c.radiance_width, join(path, "radiance_width"));
  require_positive(c.radiance_depth, join(path, "radiance_depth"));
  if (c.feature_dim < 0) throw ConfigError(join(path, "feature_dim"), "must be >= 0");
  if (!(c.softplus_beta > 0.0)) throw ConfigError(join(path, "softplus_beta"), "must be positive");
  if (!(c.init_radius > 0.0)) throw ConfigError(join(path, "init_radius"), "must be positive");
  if (!(c.s_init > 0.0)) throw ConfigError(join(path, "s_init"), "must be positive");
  if (!c.position_pe.include_identity)
    throw ConfigError(join(path, "position_pe.identity"), "geometric initialization needs the identity channel");
  for (int s : c.sdf_skips) {
    if (s <= 0 || s > c.sdf_depth) throw ConfigError(join(path, "sdf_skips"), "skip layer index out of range");
    if (c.sdf_width <= c.position_pe.output_dim(c.dim))
      throw ConfigError(join(path, "sdf_width"), "skip connections need sdf_width above the encoded input width");
  }
  return c;
}

json to_json(const dirparam::DirectionalConfig& c) {
  return {{"mode", dirparam::mode_name(c.mode)},
          {"fusion", dirparam::fusion_name(c.fusion)},
          {"detach", c.detach_sdf_in_alpha},
          {"gamma_b_init", c.gamma_b_init},
          {"pe", to_json(c.direction_pe)},
          {"negate_view_in_reflection", c.negate_view_in_reflection}};
}

dirparam::DirectionalConfig direction_from_json(const json& j, const std::string& path, dirparam::DirectionalConfig c) {
  check_keys(j, {"mode", "fusion", "detach", "gamma_b_init", "pe", "negate_view_in_reflection"}, path);
  if (j.contains("mode")) {
    try {
      c.mode = dirparam::parse_mode(get<std::string>(j, "mode", "", path));
    } catch (const ConfigError& e) {
      throw ConfigError(join(path, "mode"), e.what());
    }
  }
  if (j.contains("fusion")) {
    try {
      c.fusion = dirparam::parse_fusion(get<std::string>(j, "fusion", "", path));
    } catch (const ConfigError& e) {
      throw ConfigError(join(path, "fusion"), e.what());
    }
  }
  c.detach_sdf_in_alpha = get<bool>(j, "detach", c.detach_sdf_in_alpha, path);
  c.gamma_b_init = get<double>(j, "gamma_b_init", c.gamma_b_init, path);
  if (j.contains("pe")) c.direction_pe = pe_from_json(j["pe"], join(path, "pe"), c.direction_pe);
  c.negate_view_in_reflection = get<bool>(j, "negate_view_in_reflection", c.negate_view_in_reflection, path);
  if (!std::isfinite(c.gamma_b_init) || std::fabs(c.gamma_b_init) > 5.0)
    throw ConfigError(join(path, "gamma_b_init"), "must be finite with |gamma_b_init| <= 5");
  return c;
}

json to_json(const render::SamplingConfig& c) {
  return {{"coarse", c.coarse}, {"fine", c.fine}, {"jitter", c.jitter}};
}

render::SamplingConfig sampling_from_json(const json& j, const std::string& path, render::SamplingConfig c) {
  check_keys(j, {"coarse", "fine", "jitter"}, path);
  c.coarse = get<int>(j, "coarse", c.coarse, path);
  c.fine = get<int>(j, "fine", c.fine, path);
  c.jitter = get<bool>(j, "jitter", c.jitter, path);
  if (c.coarse < 2) throw ConfigError(join(path, "coarse"), "need at least 2 samples");
  if (c.fine < 0) throw ConfigError(join(path, "fine"), "must be >= 0");
  return c;
}

json to_json(const train::TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"rays_per_batch", c.rays_per_batch},
          {"lr", {{"base", c.lr.base}, {"warmup", c.lr.warmup}, {"floor", c.lr.floor}}},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"masked_fraction", c.masked_fraction},
          {"eikonal_points", c.eikonal_points},
          {"log_every", c.log_every},
          {"eval_every", c.eval_every},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_resolution", c.eval_resolution},
          {"eval_points", c.eval_points}};
}

train::TrainConfig train_from_json(const json& j, const std::string& path, train::TrainConfig c) {
  check_keys(j,
             {"iterations", "rays_per_batch", "lr", "adam", "masked_fraction", "eikonal_points", "log_every",
              "eval_every", "checkpoint_every", "eval_resolution", "eval_points"},
             path);
  c.iterations = get<int>(j, "iterations", c.iterations, path);
  c.rays_per_batch = get<int>(j, "rays_per_batch", c.rays_per_batch, path);
  if (j.contains("lr")) {
    const auto& l = j["lr"];
    const std::string p = join(path, "lr");
    check_keys(l, {"base", "warmup", "floor"}, p);
    c.lr.base = get<double>(l, "base", c.lr.base, p);
    c.lr.warmup = get<int>(l, "warmup", c.lr.warmup, p);
    c.lr.floor = get<double>(l, "floor", c.lr.floor, p);
  }
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    const std::string p = join(path, "adam");
    check_keys(a, {"beta1", "beta2", "epsilon"}, p);
    c.adam.beta1 = get<double>(a, "beta1", c.adam.beta1, p);
    c.adam.beta2 = get<double>(a, "beta2", c.adam.beta2, p);
    c.adam.epsilon = get<double>(a, "epsilon", c.adam.epsilon, p);
  }
  c.masked_fraction = get<double>(j, "masked_fraction", c.masked_fraction, path);
  c.eikonal_points = get<int>(j, "eikonal_points", c.eikonal_points, path);
  c.log_every = get<int>(j, "log_every", c.log_every, path);
  c.eval_every = get<int>(j, "eval_every", c.eval_every, path);
  c.checkpoint_every = get<int>(j, "checkpoint_every", c.checkpoint_every, path);
  c.eval_resolution = get<int>(j, "eval_resolution", c.eval_resolution, path);
  c.eval_points = get<int>(j, "eval_points", c.eval_points, path);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(join(path, e.path()), e.what());
  }
  return c;
}

json to_json(const train::LossWeights& c) {
  return {{"color", c.color}, {"eikonal", c.eikonal}, {"mask", c.mask}};
}

train::LossWeights losses_from_json(const json& j, const std::string& path, train::LossWeights c) {
  check_keys(j, {"color", "eikonal", "mask"}, path);
  c.color = get<double>(j, "color", c.color, path);
  c.eikonal = get<double>(j, "eikonal", c.eikonal, path);
  c.mask = get<double>(j, "mask", c.mask, path);
  require_nonnegative(c.color, join(path, "color"));
  require_nonnegative(c.eikonal, join(path, "eikonal"));
  require_nonnegative(c.mask, join(path, "mask"));
  return c;
}

json to_json(const scenes::RigConfig& c) {
  return {{"views", c.views},       {"width", c.width},     {"height", c.height},
          {"distance", c.distance}, {"fov_deg", c.fov_deg}, {"angle_offset_deg", c.angle_offset_deg}};
}

scenes::RigConfig rig_from_json(const json& j, const std::string& path, scenes::RigConfig c) {
  check_keys(j, {"views", "width", "height", "distance", "fov_deg", "angle_offset_deg"}, path);
  c.views = get<int>(j, "views", c.views, path);
  c.width = get<int>(j, "width", c.width, path);
  c.height = get<int>(j, "height", c.height, path);
  c.distance = get<double>(j, "distance", c.distance, path);
  c.fov_deg = get<double>(j, "fov_deg", c.fov_deg, path);
  c.angle_offset_deg = get<double>(j, "angle_offset_deg", c.angle_offset_deg, path);
  require_positive(c.views, join(path, "views"));
  require_positive(c.width, join(path, "width"));
  require_positive(c.height, join(path, "height"));
  if (!(c.distance > 0.0)) throw ConfigError(join(path, "distance"), "must be positive");
  if (c.fov_deg < 0.0 || c.fov_deg >= 180.0) throw ConfigError(join(path, "fov_deg"), "must lie in [0, 180)");
  return c;
}

}  // namespace dirsurf::config
