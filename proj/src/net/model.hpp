// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "net/layers.hpp"

namespace gk::net {

enum class Mode { deepgaitv2, skeletongait, skeletongait_pp };
enum class FusionLocation { low, high };

struct ModelConfig {
  Mode mode = Mode::deepgaitv2;
  std::array<int, 4> depths{1, 1, 1, 1};
  std::size_t channels = 64;
  BlockKind block = BlockKind::pseudo3d;  // full3d or pseudo3d
  std::size_t parts = 16;
  std::size_t embed_dim = 256;
  std::size_t num_classes = 8;
  FusionKind fusion = FusionKind::attention;
  FusionLocation fusion_at = FusionLocation::low;

  // Input channels of the single-branch modes (1 silhouette, 2 skeleton map).
  std::size_t in_channels() const { return mode == Mode::skeletongait ? 2 : 1; }
  // Weighted layers on the main path: 2 * sum(D) + 2.
  int formula_depth() const;
  void validate() const;
};

std::string to_string(Mode m);
std::string to_string(BlockKind k);
std::string to_string(FusionKind k);
std::string to_string(FusionLocation l);

nlohmann::json to_json(const ModelConfig& c);
// Rejects unknown keys; absent keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Network input clips, [N, C, T, 64, 44] each. skeletongait_pp needs both.
struct Inputs {
  std::optional<Tensor> silhouette;
  std::optional<Tensor> skeleton;
};

struct Output {
  Var features;    // [N, P, d] pre-BN
  Var embeddings;  // [N, P, d] post-BN
  Var logits;      // [N, P, Y]
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelState& state() { return st_; }
  const ModelState& state() const { return st_; }

  Output forward(const Inputs& in, NormMode mode);
  // Conv 0 then Stages 1-4 outputs as [N, C, T, H, W] (single-branch modes).
  std::vector<Var> stage_outputs(const Tensor& x, NormMode mode);

  std::size_t parameter_count() const { return st_.params.count(); }
  // Everything except the head (includes both branches and the fusion module).
  std::size_t backbone_parameter_count() const;
  // Counted from the constructed layers along one input-to-output path.
  int constructed_depth() const;

  Fusion& fusion() { return *fusion_; }

 private:
  struct Branch {
    Conv conv0;
    BatchNorm bn0;
    std::vector<Stage> stages;  // leading stages owned by this branch
  };
  Branch make_branch(const std::string& prefix, std::size_t in_ch, std::size_t n_stages, Rng& rng);
  Var run_branch(const Branch& b, const Tensor& x, NormMode mode);

  ModelConfig cfg_;
  ModelState st_;
  std::vector<Branch> branches_;   // one, or two for skeletongait_pp (silhouette first)
  std::vector<Stage> trunk_;       // shared stages after the branches / fusion
  std::optional<Fusion> fusion_;
  Head head_;
};

// Backbone parameters of a freshly built model, without allocating the head.
std::size_t backbone_parameter_count(const ModelConfig& cfg);

}  // namespace gk::net
