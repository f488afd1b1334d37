// SPDX-License-Identifier: Apache-2.0
#include "prep/dataset.hpp"

#include <fstream>
#include <json.hpp>

#include "common/error.hpp"
#include "nd/gt01.hpp"

namespace gk::prep {
namespace {

nlohmann::json key_json(const SequenceKey& k) {
  return {{"subject", k.subject}, {"condition", k.condition}, {"view", k.view}};
}

SequenceKey key_from(const nlohmann::json& j) {
  return {j.at("subject").get<std::string>(), j.at("condition").get<std::string>(), j.at("view").get<std::string>()};
}

}  // namespace

const IndexEntry* DatasetIndex::find(const SequenceKey& key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e;
  return nullptr;
}

nd::TensorF DatasetIndex::load(const IndexEntry& e) const {
  auto t = nd::load_gt01<float>(root / e.path);
  if (t.rank() < 1 || t.dim(0) != e.frames.size())
    throw DataError("sequence " + e.key.str() + ": stored frame count does not match the index");
  return t;
}

void write_index(const std::filesystem::path& dir, const DatasetIndex& index) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : index.entries) {
    auto j = key_json(e.key);
    j["path"] = e.path;
    j["frame_count"] = e.frame_count();
    j["frames"] = e.frames;
    entries.push_back(j);
  }
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : index.skipped) {
    auto j = key_json(s.key);
    j["reason"] = s.reason;
    skipped.push_back(j);
  }
  const nlohmann::json doc{{"schema_version", 1},
                           {"modality", index.modality},
                           {"entries", entries},
                           {"skipped", skipped},
                           {"dropped_frames", index.dropped_frames}};
  std::ofstream out(dir / kIndexFile, std::ios::trunc);
  if (!out) throw IoError("cannot write index in " + dir.string());
  out << doc.dump(1) << '\n';
}

DatasetIndex read_index(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / kIndexFile : path;
  std::ifstream in(file);
  if (!in) throw IoError("cannot open dataset index: " + file.string());
  DatasetIndex idx;
  idx.root = file.parent_path();
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("schema_version").get<int>() != 1) throw IoError("unsupported index schema in " + file.string());
    idx.modality = doc.at("modality").get<std::string>();
    for (const auto& j : doc.at("entries")) {
      IndexEntry e{key_from(j), j.at("path").get<std::string>(), j.at("frames").get<std::vector<long>>()};
      idx.entries.push_back(std::move(e));
    }
    for (const auto& j : doc.at("skipped")) idx.skipped.push_back({key_from(j), j.at("reason").get<std::string>()});
    idx.dropped_frames = doc.value("dropped_frames", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset index " + file.string() + ": " + e.what());
  }
  return idx;
}

std::map<std::string, int> contiguous_labels(const std::vector<SequenceKey>& keys) {
  std::map<std::string, int> m;
  for (const auto& k : keys) m.emplace(k.subject, 0);
  int next = 0;
  for (auto& [_, v] : m) v = next++;
  return m;
}

}  // namespace gk::prep
