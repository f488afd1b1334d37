// SPDX-License-Identifier: Apache-2.0
#include "net/model.hpp"

#include <numeric>
#include <set>

#include "common/error.hpp"

namespace gk::net {
namespace {

constexpr std::array<std::size_t, 4> kWidth{1, 2, 4, 8};
constexpr std::array<std::size_t, 4> kStride{1, 2, 2, 1};

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& values, const char* what) {
  for (E v : values)
    if (to_string(v) == s) return v;
  throw ArgumentError(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::deepgaitv2: return "deepgaitv2";
    case Mode::skeletongait: return "skeletongait";
    case Mode::skeletongait_pp: return "skeletongait_pp";
  }
  return "?";
}
std::string to_string(BlockKind k) {
  switch (k) {
    case BlockKind::plain2d: return "plain2d";
    case BlockKind::full3d: return "full3d";
    case BlockKind::pseudo3d: return "pseudo3d";
  }
  return "?";
}
std::string to_string(FusionKind k) {
  switch (k) {
    case FusionKind::add: return "add";
    case FusionKind::cat: return "cat";
    case FusionKind::attention: return "attention";
  }
  return "?";
}
std::string to_string(FusionLocation l) { return l == FusionLocation::low ? "low" : "high"; }

int ModelConfig::formula_depth() const { return 2 * std::accumulate(depths.begin(), depths.end(), 0) + 2; }

void ModelConfig::validate() const {
  for (int d : depths)
    if (d <= 0) throw ArgumentError("model depths must be four positive block counts");
  if (channels == 0) throw ArgumentError("model channels must be positive");
  if (block == BlockKind::plain2d) throw ArgumentError("block_kind must be full3d or pseudo3d");
  if (parts == 0 || 16 % parts != 0) throw ArgumentError("parts must divide the Stage-4 feature height 16");
  if (embed_dim == 0) throw ArgumentError("embed_dim must be positive");
  if (num_classes == 0) throw ArgumentError("num_classes must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"mode", to_string(c.mode)},           {"depths", c.depths},
          {"channels", c.channels},              {"block_kind", to_string(c.block)},
          {"parts", c.parts},                    {"embed_dim", c.embed_dim},
          {"num_classes", c.num_classes},        {"fusion", to_string(c.fusion)},
          {"fusion_location", to_string(c.fusion_at)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"mode",      "depths",      "channels", "block_kind",     "parts",
                                           "embed_dim", "num_classes", "fusion",   "fusion_location"};
  if (!j.is_object()) throw ArgumentError("model config must be an object");
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ArgumentError("unknown model config key '" + k + "'");
  ModelConfig c;
  try {
    if (j.contains("mode"))
      c.mode = parse_enum(j["mode"].get<std::string>(),
                          std::array{Mode::deepgaitv2, Mode::skeletongait, Mode::skeletongait_pp}, "mode");
    if (j.contains("depths")) {
      const auto d = j["depths"].get<std::vector<int>>();
      if (d.size() != 4) throw ArgumentError("model depths must have four entries");
      std::copy(d.begin(), d.end(), c.depths.begin());
    }
    if (j.contains("channels")) c.channels = j["channels"].get<std::size_t>();
    if (j.contains("block_kind"))
      c.block = parse_enum(j["block_kind"].get<std::string>(), std::array{BlockKind::full3d, BlockKind::pseudo3d},
                           "block_kind");
    if (j.contains("parts")) c.parts = j["parts"].get<std::size_t>();
    if (j.contains("embed_dim")) c.embed_dim = j["embed_dim"].get<std::size_t>();
    if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<std::size_t>();
    if (j.contains("fusion"))
      c.fusion = parse_enum(j["fusion"].get<std::string>(),
                            std::array{FusionKind::add, FusionKind::cat, FusionKind::attention}, "fusion");
    if (j.contains("fusion_location"))
      c.fusion_at = parse_enum(j["fusion_location"].get<std::string>(),
                               std::array{FusionLocation::low, FusionLocation::high}, "fusion_location");
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

Model::Branch Model::make_branch(const std::string& prefix, std::size_t in_ch, std::size_t n_stages, Rng& rng) {
  const std::size_t C = cfg_.channels;
  Branch b{Conv(st_, prefix + ".conv0", in_ch, C, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, rng),
           BatchNorm(st_, prefix + ".bn0", C),
           {}};
  for (std::size_t i = 0; i < n_stages; ++i)
    b.stages.emplace_back(st_, prefix + ".stage" + std::to_string(i + 1), i == 0 ? BlockKind::plain2d : cfg_.block,
                          C * (i == 0 ? 1 : kWidth[i - 1]), C * kWidth[i], kStride[i], cfg_.depths[i], rng);
  return b;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t C = cfg_.channels;
  std::size_t owned = 4;
  if (cfg_.mode == Mode::skeletongait_pp) {
    owned = cfg_.fusion_at == FusionLocation::low ? 1 : 3;
    branches_.push_back(make_branch("sil", 1, owned, rng));
    branches_.push_back(make_branch("ske", 2, owned, rng));
    fusion_.emplace(st_, "fusion", cfg_.fusion, C * kWidth[owned - 1], rng);
  } else {
    branches_.push_back(make_branch("backbone", cfg_.in_channels(), owned, rng));
  }
  for (std::size_t i = owned; i < 4; ++i)
    trunk_.emplace_back(st_, "trunk.stage" + std::to_string(i + 1), cfg_.block, C * kWidth[i - 1], C * kWidth[i],
                        kStride[i], cfg_.depths[i], rng);
  head_ = Head(st_, "head", cfg_.parts, 8 * C, cfg_.embed_dim, cfg_.num_classes, rng);
}

Var Model::run_branch(const Branch& b, const Tensor& x, NormMode mode) {
  Var h = nd::relu(b.bn0(st_, b.conv0(st_, Var(x)), mode));
  for (const auto& s : b.stages) h = s(st_, h, mode);
  return h;
}

namespace {

void check_input(const std::optional<Tensor>& t, std::size_t channels, const char* what) {
  if (!t) throw ArgumentError(std::string("missing ") + what + " input");
  if (t->rank() != 5 || t->dim(1) != channels)
    throw ShapeError(std::string(what) + " input must be [N, " + std::to_string(channels) + ", T, H, W], got " +
                     nd::to_string(t->shape()));
}

}  // namespace

Output Model::forward(const Inputs& in, NormMode mode) {
  Var h;
  if (cfg_.mode == Mode::skeletongait_pp) {
    check_input(in.silhouette, 1, "silhouette");
    check_input(in.skeleton, 2, "skeleton");
    if (in.silhouette->dim(0) != in.skeleton->dim(0) || in.silhouette->dim(2) != in.skeleton->dim(2))
      throw ContractError("silhouette and skeleton clips are not frame-aligned");
    const Var a = run_branch(branches_[0], *in.silhouette, mode);
    const Var b = run_branch(branches_[1], *in.skeleton, mode);
    h = (*fusion_)(st_, a, b, mode);
  } else if (cfg_.mode == Mode::deepgaitv2) {
    check_input(in.silhouette, 1, "silhouette");
    h = run_branch(branches_[0], *in.silhouette, mode);
  } else {
    check_input(in.skeleton, 2, "skeleton");
    h = run_branch(branches_[0], *in.skeleton, mode);
  }
  for (const auto& s : trunk_) h = s(st_, h, mode);
  const HeadOutput o = head_(st_, horizontal_pool(temporal_pool(h), cfg_.parts), mode);
  return {o.features, o.embeddings, o.logits};
}

std::vector<Var> Model::stage_outputs(const Tensor& x, NormMode mode) {
  if (cfg_.mode == Mode::skeletongait_pp) throw ArgumentError("stage_outputs is defined for single-branch modes");
  check_input(std::optional<Tensor>(x), cfg_.in_channels(), "clip");
  const Branch& b = branches_[0];
  std::vector<Var> out{nd::relu(b.bn0(st_, b.conv0(st_, Var(x)), mode))};
  for (const auto& s : b.stages) out.push_back(s(st_, out.back(), mode));
  return out;
}

std::size_t Model::backbone_parameter_count() const { return st_.params.count() - st_.count_with_prefix("head."); }

int Model::constructed_depth() const {
  int depth = 1;  // conv0
  for (const auto& s : branches_[0].stages) depth += 2 * static_cast<int>(s.size());
  for (const auto& s : trunk_) depth += 2 * static_cast<int>(s.size());
  return depth + 1;  // head FC
}

std::size_t backbone_parameter_count(const ModelConfig& cfg) {
  ModelConfig c = cfg;
  c.embed_dim = 1;
  c.num_classes = 1;
  c.parts = 1;
  return Model(c, 0).backbone_parameter_count();
}

}  // namespace gk::net
