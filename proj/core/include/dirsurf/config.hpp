#pragma once

// JSON (de)serialization of the module configs. Readers start from the given
// defaults, accept partial objects, and reject unknown keys with a ConfigError
// naming the dotted path.

#include <nlohmann/json.hpp>
#include <string>

#include "dirsurf/dirparam.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/render.hpp"
#include "dirsurf/scenes.hpp"
#include "dirsurf/train.hpp"

namespace dirsurf::config {

using nlohmann::json;

json to_json(const nets::PeConfig& c);
nets::PeConfig pe_from_json(const json& j, const std::string& path, nets::PeConfig base = {});

json to_json(const nets::NetworkConfig& c);
nets::NetworkConfig network_from_json(const json& j, const std::string& path, nets::NetworkConfig base = {});

json to_json(const dirparam::DirectionalConfig& c);
dirparam::DirectionalConfig direction_from_json(const json& j, const std::string& path,
                                                dirparam::DirectionalConfig base = {});

json to_json(const render::SamplingConfig& c);
render::SamplingConfig sampling_from_json(const json& j, const std::string& path, render::SamplingConfig base = {});

json to_json(const train::TrainConfig& c);
train::TrainConfig train_from_json(const json& j, const std::string& path, train::TrainConfig base = {});

json to_json(const train::LossWeights& c);
train::LossWeights losses_from_json(const json& j, const std::string& path, train::LossWeights base = {});

json to_json(const scenes::RigConfig& c);
scenes::RigConfig rig_from_json(const json& j, const std::string& path, scenes::RigConfig base = {});

}  // namespace dirsurf::config
