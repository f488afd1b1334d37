// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <json.hpp>
#include <memory>
#include <string>

#include "net/model.hpp"

namespace gk::net {

// Optimizer-side state carried alongside the weights so training can resume.
struct TrainState {
  long step = 0;
  std::string rng;  // serialized std::mt19937_64
  nlohmann::json extra = nlohmann::json::object();
};

// Directory layout: manifest.json plus one GT01 file per parameter, batch-norm
// buffer and momentum buffer. Existing files are overwritten.
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const TrainState& train = {});

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  TrainState train;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace gk::net
