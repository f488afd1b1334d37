// SPDX-License-Identifier: Apache-2.0
#include "net/checkpoint.hpp"

#include <fstream>

#include "common/error.hpp"
#include "nd/gt01.hpp"

namespace gk::net {
namespace fs = std::filesystem;
namespace {

constexpr int kSchema = 1;

nlohmann::json entry(const std::string& name, const Tensor& t, const std::string& file) {
  return {{"name", name}, {"shape", t.shape()}, {"file", file}};
}

Tensor load_checked(const fs::path& dir, const nlohmann::json& e, const nd::Shape& expect) {
  const auto file = e.at("file").get<std::string>();
  auto t = nd::load_gt01<Real>(dir / file);
  if (t.shape() != expect || e.at("shape").get<nd::Shape>() != expect)
    throw DataError("checkpoint tensor " + file + " has shape " + nd::to_string(t.shape()) + ", expected " +
                    nd::to_string(expect));
  return t;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model, const TrainState& train) {
  fs::create_directories(dir / "params");
  fs::create_directories(dir / "buffers");
  fs::create_directories(dir / "momentum");
  const auto& st = model.state();
  nlohmann::json params = nlohmann::json::array(), buffers = nlohmann::json::array(),
                 momentum = nlohmann::json::array();
  for (const auto& [name, v] : st.params.params) {
    const std::string file = "params/" + name + ".gt01";
    nd::save_gt01(dir / file, v.value());
    params.push_back(entry(name, v.value(), file));
  }
  for (const auto& [name, b] : st.buffers) {
    const std::string mean = "buffers/" + name + ".mean.gt01", var = "buffers/" + name + ".var.gt01";
    nd::save_gt01(dir / mean, b.running_mean);
    nd::save_gt01(dir / var, b.running_var);
    buffers.push_back({{"name", name}, {"shape", b.running_mean.shape()}, {"mean", mean}, {"var", var}});
  }
  for (const auto& [name, m] : st.params.momentum) {
    const std::string file = "momentum/" + name + ".gt01";
    nd::save_gt01(dir / file, m);
    momentum.push_back(entry(name, m, file));
  }
  const nlohmann::json manifest{{"schema_version", kSchema},
                                {"config", to_json(model.config())},
                                {"parameters", params},
                                {"buffers", buffers},
                                {"momentum", momentum},
                                {"step", train.step},
                                {"rng", train.rng},
                                {"extra", train.extra}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(1) << '\n';
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in " + dir.string());
  LoadedCheckpoint out;
  try {
    const auto m = nlohmann::json::parse(in);
    if (m.at("schema_version").get<int>() != kSchema) throw IoError("unsupported checkpoint schema");
    out.model = std::make_unique<Model>(model_config_from_json(m.at("config")), 0);
    auto& st = out.model->state();
    std::size_t seen = 0;
    for (const auto& e : m.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      auto it = st.params.params.find(name);
      if (it == st.params.params.end()) throw DataError("checkpoint has unknown parameter " + name);
      it->second.mutable_value() = load_checked(dir, e, it->second.shape());
      ++seen;
    }
    if (seen != st.params.params.size()) throw DataError("checkpoint is missing parameters");
    for (const auto& e : m.at("buffers")) {
      const auto name = e.at("name").get<std::string>();
      auto it = st.buffers.find(name);
      if (it == st.buffers.end()) throw DataError("checkpoint has unknown buffer " + name);
      const nd::Shape s = it->second.running_mean.shape();
      it->second.running_mean = load_checked(dir, {{"file", e.at("mean")}, {"shape", e.at("shape")}}, s);
      it->second.running_var = load_checked(dir, {{"file", e.at("var")}, {"shape", e.at("shape")}}, s);
    }
    for (const auto& e : m.at("momentum")) {
      const auto name = e.at("name").get<std::string>();
      auto it = st.params.params.find(name);
      if (it == st.params.params.end()) throw DataError("checkpoint has momentum for unknown parameter " + name);
      st.params.momentum[name] = load_checked(dir, e, it->second.shape());
    }
    out.train.step = m.at("step").get<long>();
    out.train.rng = m.at("rng").get<std::string>();
    out.train.extra = m.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  return out;
}

}  // namespace gk::net
