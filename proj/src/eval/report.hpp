// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "eval/metrics.hpp"

namespace gk::eval {

struct EmbeddingRecord {
  std::string subject, condition, view;
  std::vector<double> values;  // [parts, dim] row-major
};

struct EmbeddingSet {
  std::size_t parts = 0, dim = 0;
  std::vector<EmbeddingRecord> items;
  void validate() const;
};

// Directory layout: embeddings.json listing records, each with a GT01 [parts, dim] file.
void write_embeddings(const std::filesystem::path& dir, const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& dir);

// Unset fields accept everything.
struct Selector {
  std::optional<std::set<std::string>> subjects, conditions, views;
  bool accepts(const EmbeddingRecord& r) const;
};

struct EvalProtocol {
  Selector probe, gallery;
  bool exclude_identical = true;  // same subject, condition and view
  bool exclude_same_view = false;
  bool view_matrix = true;
  std::vector<std::size_t> ks{1, 5, 10, 20};
};

EvalProtocol protocol_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalProtocol& p);

struct ConditionRow {
  double rank1 = 0, map = 0, minp = 0;
  std::size_t probes = 0;
};

struct ViewMatrix {
  std::vector<std::string> views;  // row = probe view, column = gallery view
  std::vector<double> cells;       // NaN where no probe has a gallery entry left after exclusion
};

struct EvalReport {
  std::map<std::size_t, double> rank;  // k -> accuracy
  double map = 0, minp = 0;
  std::size_t probes = 0, gallery = 0, no_match_probes = 0;
  std::optional<ViewMatrix> view_matrix;
  std::map<std::string, ConditionRow> conditions;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

DistanceMatrix distances(const EmbeddingSet& probe, const EmbeddingSet& gallery);

// Rank-1 for every (probe view, gallery view) pair, gallery restricted to the
// column view, identical-sequence pairs excluded.
ViewMatrix cross_view_matrix(const EmbeddingSet& probe, const EmbeddingSet& gallery);

EvalReport evaluate(const EvalProtocol& protocol, const EmbeddingSet& probe, const EmbeddingSet& gallery);

}  // namespace gk::eval
