// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nd/tensor.hpp"

namespace gk::prep {

struct SequenceKey {
  std::string subject;
  std::string condition;
  std::string view;
  auto operator<=>(const SequenceKey&) const = default;
  std::string str() const { return subject + "/" + condition + "/" + view; }
};

struct IndexEntry {
  SequenceKey key;
  std::string path;          // GT01 tensor, relative to the index file's directory
  std::vector<long> frames;  // source frame number of each stored frame
  std::size_t frame_count() const { return frames.size(); }
};

struct SkippedEntry {
  SequenceKey key;
  std::string reason;
};

// Index of preprocessed sequences (silhouettes or skeleton maps) in one directory.
struct DatasetIndex {
  std::string modality;  // "silhouette" or "skeleton"
  std::vector<IndexEntry> entries;
  std::vector<SkippedEntry> skipped;
  std::size_t dropped_frames = 0;
  std::filesystem::path root;  // directory containing the index file (not serialized)

  const IndexEntry* find(const SequenceKey& key) const;
  nd::TensorF load(const IndexEntry& e) const;
};

constexpr const char* kIndexFile = "index.json";

void write_index(const std::filesystem::path& dir, const DatasetIndex& index);
// Accepts either the index file or the directory holding it.
DatasetIndex read_index(const std::filesystem::path& path);

// Sorted distinct subjects mapped to 0..n-1.
std::map<std::string, int> contiguous_labels(const std::vector<SequenceKey>& keys);

}  // namespace gk::prep
