// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "eval/report.hpp"
#include "loss/objectives.hpp"
#include "net/model.hpp"
#include "prep/sampling.hpp"

namespace gk::app {

struct DataSection {
  std::filesystem::path silhouettes;  // preprocessed index directory (may be empty)
  std::filesystem::path skeletons;    // rendered index directory (may be empty)
  std::vector<std::string> train_conditions;  // empty: every condition
};

struct OptimSection {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<long> milestones;
  long total_steps = 1000;
  std::size_t batch_p = 8;
  std::size_t batch_k = 4;
  std::size_t clip_len = 30;
  bool augment = true;
  prep::AugmentConfig augment_cfg;
  loss::LossWeights weights;
  loss::TripletOptions triplet;
  loss::CeOptions ce;
  long log_every = 10;
};

struct EvalSection {
  bool enabled = false;
  std::vector<std::string> probe_conditions;
  std::vector<std::string> gallery_conditions;
  eval::EvalProtocol protocol;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataSection data;
  nlohmann::json model = nlohmann::json::object();  // ModelConfig fields; num_classes may be omitted
  OptimSection optim;
  EvalSection eval;
  std::filesystem::path output;

  void validate() const;
};

// Relative paths are resolved against `base` (the config file's directory).
// Unknown keys at any level are rejected with ArgumentError.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base);
RunConfig load_run_config(const std::filesystem::path& file);
nlohmann::json to_json(const RunConfig& c);

}  // namespace gk::app
