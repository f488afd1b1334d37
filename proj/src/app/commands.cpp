// SPDX-License-Identifier: Apache-2.0
#include "app/commands.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "app/config.hpp"
#include "app/gradcheck_suite.hpp"
#include "app/synth.hpp"
#include "app/train.hpp"
#include "common/error.hpp"
#include "eval/report.hpp"
#include "nd/gt01.hpp"
#include "prep/align.hpp"
#include "prep/dataset.hpp"
#include "skel/pose.hpp"

namespace gk::app {
namespace fs = std::filesystem;
namespace {

void require_dir(const fs::path& p, const char* what) {
  if (p.empty() || !fs::is_directory(p)) throw ArgumentError(std::string(what) + " directory not found: " + p.string());
}

// subject / condition / view from a path relative to the dataset root, whose
// last component names the view (file stem or directory).
prep::SequenceKey key_from(const fs::path& rel) {
  std::vector<std::string> parts;
  for (const auto& c : rel) parts.push_back(c.string());
  parts.back() = fs::path(parts.back()).stem().string();
  if (parts.size() == 1) return {parts[0], "default", "default"};
  if (parts.size() == 2) return {parts[0], "default", parts[1]};
  std::string cond = parts[1];
  for (std::size_t i = 2; i + 1 < parts.size(); ++i) cond += "_" + parts[i];
  return {parts[0], cond, parts.back()};
}

std::string rel_gt01(const prep::SequenceKey& k) { return k.subject + "/" + k.condition + "/" + k.view + ".gt01"; }

long frame_number(const fs::path& file, long fallback) {
  const auto stem = file.stem().string();
  std::string digits;
  for (auto it = stem.rbegin(); it != stem.rend() && std::isdigit(static_cast<unsigned char>(*it)); ++it)
    digits.insert(digits.begin(), *it);
  return digits.empty() ? fallback : std::stol(digits);
}

nlohmann::json read_json_file(const fs::path& p, const char* what) {
  std::ifstream in(p);
  if (!in) throw ArgumentError(std::string("cannot open ") + what + " " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string(what) + " " + p.string() + " is not valid JSON: " + e.what());
  }
}

template <typename F>
std::vector<fs::path> sorted_walk(const fs::path& root, F keep) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (keep(e)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

nlohmann::json render_skeleton_dir(const fs::path& poses, const fs::path& out, const skel::RenderConfig& cfg) {
  cfg.validate();
  require_dir(poses, "poses");
  const auto files = sorted_walk(poses, [](const fs::directory_entry& e) {
    return e.is_regular_file() && e.path().extension() == ".jsonl";
  });
  prep::DatasetIndex idx;
  idx.modality = "skeleton";
  fs::create_directories(out);
  for (const auto& f : files) {
    const auto key = key_from(fs::relative(f, poses));
    const auto seq = skel::read_pose_jsonl(f);
    const auto r = skel::render_sequence(seq, cfg);
    idx.dropped_frames += r.dropped.size();
    if (r.frames.empty()) {
      idx.skipped.push_back({key, seq.empty() ? "no frames" : "every frame dropped: " + r.dropped.front().reason});
      continue;
    }
    const auto rel = rel_gt01(key);
    fs::create_directories((out / rel).parent_path());
    nd::save_gt01(out / rel, r.maps);
    idx.entries.push_back({key, rel, r.frames});
  }
  prep::write_index(out, idx);
  return {{"sequences", idx.entries.size()}, {"skipped", idx.skipped.size()}, {"dropped_frames", idx.dropped_frames},
          {"index", (out / prep::kIndexFile).string()}};
}

nlohmann::json preprocess_dir(const fs::path& sils, const fs::path& out) {
  require_dir(sils, "silhouette");
  const auto frames = sorted_walk(sils, [](const fs::directory_entry& e) {
    return e.is_regular_file() && e.path().extension() == ".pgm";
  });
  std::map<fs::path, std::vector<fs::path>> by_dir;
  for (const auto& f : frames) by_dir[f.parent_path()].push_back(f);
  prep::DatasetIndex idx;
  idx.modality = "silhouette";
  fs::create_directories(out);
  const prep::AlignConfig ac;
  for (const auto& [dir, files] : by_dir) {
    const auto key = key_from(fs::relative(dir, sils));
    std::vector<float> buf;
    std::vector<long> kept;
    for (std::size_t i = 0; i < files.size(); ++i) {
      prep::GrayImage img;
      try {
        img = prep::read_pgm(files[i]);
      } catch (const IoError& e) {
        throw DataError(std::string(e.what()) + " (" + files[i].string() + ")");
      }
      try {
        const auto a = prep::align_silhouette(img, ac);
        for (auto v : a.pixels) buf.push_back(v ? 1.0f : 0.0f);
        kept.push_back(frame_number(files[i], static_cast<long>(i)));
      } catch (const DataError&) {
        ++idx.dropped_frames;
      }
    }
    if (kept.empty()) {
      idx.skipped.push_back({key, "empty silhouette sequence"});
      continue;
    }
    const auto rel = rel_gt01(key);
    fs::create_directories((out / rel).parent_path());
    nd::save_gt01(out / rel, nd::TensorF({kept.size(), ac.out_height, ac.out_width}, std::move(buf)));
    idx.entries.push_back({key, rel, kept});
  }
  prep::write_index(out, idx);
  return {{"sequences", idx.entries.size()}, {"skipped", idx.skipped.size()}, {"dropped_frames", idx.dropped_frames},
          {"index", (out / prep::kIndexFile).string()}};
}

nlohmann::json gen_synth_cmd(const fs::path& spec_file, const fs::path& out) {
  const auto spec = synth_spec_from_json(read_json_file(spec_file, "synthetic spec"));
  generate_synth(spec, out);
  const std::size_t n = spec.identities * spec.sequences * spec.views;
  return {{"pose_sequences", spec.modality != "silhouette" ? n : 0},
          {"silhouette_sequences", spec.modality != "pose" ? n : 0},
          {"out", out.string()}};
}

nlohmann::json train_cmd(const fs::path& config_file, const std::optional<fs::path>& resume) {
  const auto cfg = load_run_config(config_file);
  const auto res = run_training(cfg, resume);
  nlohmann::json j{{"steps", res.log.empty() ? 0 : res.log.back().step}, {"checkpoint", res.checkpoint.string()}};
  if (!res.log.empty()) {
    j["final_loss"] = res.log.back().loss;
    j["first_nonzero"] = res.log.front().nonzero;
    j["final_nonzero"] = res.log.back().nonzero;
  }
  if (res.report) j["report"] = eval::to_json(*res.report);
  return j;
}

nlohmann::json embed_cmd(const fs::path& checkpoint, const fs::path& silhouettes, const fs::path& skeletons,
                         const std::vector<std::string>& conditions, const fs::path& out) {
  require_dir(checkpoint, "checkpoint");
  auto ck = net::load_checkpoint(checkpoint);
  const auto corpus = select_conditions(load_corpus({silhouettes, skeletons, {}}, ck.model->config().mode), conditions);
  if (corpus.items.empty()) throw DataError("no sequences match the requested conditions");
  const auto set = embed_corpus(*ck.model, corpus);
  eval::write_embeddings(out, set);
  return {{"embeddings", set.items.size()}, {"parts", set.parts}, {"dim", set.dim}, {"out", out.string()}};
}

nlohmann::json eval_cmd(const fs::path& gallery, const fs::path& probe, const fs::path& protocol) {
  eval::EvalProtocol p;
  if (!protocol.empty()) {
    if (!fs::is_regular_file(protocol)) throw ArgumentError("protocol file not found: " + protocol.string());
    p = eval::protocol_from_json(read_json_file(protocol, "protocol"));
  }
  require_dir(gallery, "gallery");
  require_dir(probe, "probe");
  return eval::to_json(eval::evaluate(p, eval::read_embeddings(probe), eval::read_embeddings(gallery)));
}

nlohmann::json gradcheck_cmd(std::size_t cases, std::uint64_t seed, const std::optional<std::string>& only) {
  GradSuiteOptions o;
  o.cases = cases;
  o.seed = seed;
  o.only = only;
  const auto res = run_gradcheck_suite(o);
  nlohmann::json checks = nlohmann::json::array();
  bool ok = true;
  for (const auto& c : res) {
    checks.push_back({{"name", c.name},
                      {"cases", c.cases},
                      {"elements", c.elements},
                      {"max_rel_error", c.max_rel_error},
                      {"passed", c.passed}});
    ok = ok && c.passed;
  }
  return {{"checks", checks}, {"tolerance", o.tolerance}, {"passed", ok}};
}

}  // namespace gk::app
