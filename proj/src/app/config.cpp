// SPDX-License-Identifier: Apache-2.0
#include "app/config.hpp"

#include <fstream>
#include <set>

#include "common/error.hpp"

namespace gk::app {
namespace fs = std::filesystem;
namespace {

void only_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ArgumentError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ArgumentError("unknown key '" + k + "' in " + where);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path q(p);
  return q.is_absolute() ? q : base / q;
}

DataSection data_from(const nlohmann::json& j, const fs::path& base) {
  only_keys(j, {"silhouettes", "skeletons", "train_conditions"}, "data");
  DataSection d;
  d.silhouettes = resolve(base, j.value("silhouettes", std::string()));
  d.skeletons = resolve(base, j.value("skeletons", std::string()));
  d.train_conditions = j.value("train_conditions", std::vector<std::string>{});
  return d;
}

OptimSection optim_from(const nlohmann::json& j) {
  only_keys(j,
            {"lr", "momentum", "weight_decay", "milestones", "total_steps", "batch_p", "batch_k", "clip_len", "augment",
             "flip_prob", "max_rotation_deg", "erase_prob", "lambda_triplet", "lambda_ce", "margin", "mining",
             "label_smoothing", "ce_kind", "log_every"},
            "optim");
  OptimSection o;
  o.lr = j.value("lr", o.lr);
  o.momentum = j.value("momentum", o.momentum);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  o.milestones = j.value("milestones", o.milestones);
  o.total_steps = j.value("total_steps", o.total_steps);
  o.batch_p = j.value("batch_p", o.batch_p);
  o.batch_k = j.value("batch_k", o.batch_k);
  o.clip_len = j.value("clip_len", o.clip_len);
  o.augment = j.value("augment", o.augment);
  o.augment_cfg.flip_prob = j.value("flip_prob", o.augment_cfg.flip_prob);
  o.augment_cfg.max_rotation_deg = j.value("max_rotation_deg", o.augment_cfg.max_rotation_deg);
  o.augment_cfg.erase_prob = j.value("erase_prob", o.augment_cfg.erase_prob);
  o.weights.triplet = j.value("lambda_triplet", o.weights.triplet);
  o.weights.ce = j.value("lambda_ce", o.weights.ce);
  o.triplet.margin = j.value("margin", o.triplet.margin);
  const auto mining = j.value("mining", std::string("unanchored"));
  if (mining == "unanchored") {
    o.triplet.mining = loss::TripletMining::unanchored;
  } else if (mining == "anchored") {
    o.triplet.mining = loss::TripletMining::anchored;
  } else {
    throw ArgumentError("optim.mining must be unanchored or anchored");
  }
  o.ce.epsilon = j.value("label_smoothing", o.ce.epsilon);
  const auto ce = j.value("ce_kind", std::string("per_class"));
  if (ce == "per_class") {
    o.ce.kind = loss::CeKind::per_class;
  } else if (ce == "conventional") {
    o.ce.kind = loss::CeKind::conventional;
  } else {
    throw ArgumentError("optim.ce_kind must be per_class or conventional");
  }
  o.log_every = j.value("log_every", o.log_every);
  return o;
}

EvalSection eval_from(const nlohmann::json& j) {
  only_keys(j, {"probe_conditions", "gallery_conditions", "protocol"}, "eval");
  EvalSection e;
  e.enabled = true;
  e.probe_conditions = j.value("probe_conditions", std::vector<std::string>{});
  e.gallery_conditions = j.value("gallery_conditions", std::vector<std::string>{});
  if (j.contains("protocol")) e.protocol = eval::protocol_from_json(j["protocol"]);
  return e;
}

}  // namespace

void RunConfig::validate() const {
  if (data.silhouettes.empty() && data.skeletons.empty()) throw ArgumentError("data names no dataset");
  const auto& o = optim;
  if (o.total_steps < 0) throw ArgumentError("optim.total_steps must be nonnegative");
  if (o.lr < 0 || o.momentum < 0 || o.weight_decay < 0) throw ArgumentError("optim rates must be nonnegative");
  for (std::size_t i = 0; i < o.milestones.size(); ++i) {
    if (i && o.milestones[i] <= o.milestones[i - 1]) throw ArgumentError("optim.milestones must be strictly increasing");
    if (o.milestones[i] >= o.total_steps && o.total_steps > 0)
      throw ArgumentError("optim.milestones must lie below total_steps");
  }
  if (o.batch_p < 2 || o.batch_k < 2) throw ArgumentError("optim.batch_p and batch_k must be at least 2");
  if (o.clip_len == 0) throw ArgumentError("optim.clip_len must be positive");
  if (o.log_every <= 0) throw ArgumentError("optim.log_every must be positive");
  if (output.empty()) throw ArgumentError("output directory missing");
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base) {
  only_keys(j, {"schema_version", "seed", "data", "model", "optim", "eval", "output"}, "config");
  RunConfig c;
  try {
    if (j.value("schema_version", 0) != 1) throw ArgumentError("config schema_version must be 1");
    c.seed = j.value("seed", c.seed);
    if (j.contains("data")) c.data = data_from(j["data"], base);
    if (j.contains("model")) {
      c.model = j["model"];
      if (!c.model.is_object()) throw ArgumentError("model must be a JSON object");
      auto probe = c.model;
      if (!probe.contains("num_classes")) probe["num_classes"] = 1;
      net::model_config_from_json(probe);  // validates keys and values
    }
    if (j.contains("optim")) c.optim = optim_from(j["optim"]);
    if (j.contains("eval")) c.eval = eval_from(j["eval"]);
    c.output = resolve(base, j.value("output", std::string()));
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ArgumentError("cannot open config file " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, fs::absolute(file).parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  const auto& o = c.optim;
  nlohmann::json optim{{"lr", o.lr},
                       {"momentum", o.momentum},
                       {"weight_decay", o.weight_decay},
                       {"milestones", o.milestones},
                       {"total_steps", o.total_steps},
                       {"batch_p", o.batch_p},
                       {"batch_k", o.batch_k},
                       {"clip_len", o.clip_len},
                       {"augment", o.augment},
                       {"flip_prob", o.augment_cfg.flip_prob},
                       {"max_rotation_deg", o.augment_cfg.max_rotation_deg},
                       {"erase_prob", o.augment_cfg.erase_prob},
                       {"lambda_triplet", o.weights.triplet},
                       {"lambda_ce", o.weights.ce},
                       {"margin", o.triplet.margin},
                       {"mining", o.triplet.mining == loss::TripletMining::anchored ? "anchored" : "unanchored"},
                       {"label_smoothing", o.ce.epsilon},
                       {"ce_kind", o.ce.kind == loss::CeKind::conventional ? "conventional" : "per_class"},
                       {"log_every", o.log_every}};
  nlohmann::json j{{"schema_version", 1},
                   {"seed", c.seed},
                   {"data",
                    {{"silhouettes", c.data.silhouettes.string()},
                     {"skeletons", c.data.skeletons.string()},
                     {"train_conditions", c.data.train_conditions}}},
                   {"model", c.model},
                   {"optim", optim},
                   {"output", c.output.string()}};
  if (c.eval.enabled)
    j["eval"] = {{"probe_conditions", c.eval.probe_conditions},
                 {"gallery_conditions", c.eval.gallery_conditions},
                 {"protocol", eval::to_json(c.eval.protocol)}};
  return j;
}

}  // namespace gk::app
