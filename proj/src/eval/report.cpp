// SPDX-License-Identifier: Apache-2.0
#include "eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "common/error.hpp"
#include "nd/gt01.hpp"

namespace gk::eval {
namespace fs = std::filesystem;
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json number(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double number_from(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

bool identical(const EmbeddingRecord& a, const EmbeddingRecord& b) {
  return a.subject == b.subject && a.condition == b.condition && a.view == b.view;
}

EmbeddingSet filter(const EmbeddingSet& s, const Selector& sel) {
  EmbeddingSet out{s.parts, s.dim, {}};
  for (const auto& r : s.items)
    if (sel.accepts(r)) out.items.push_back(r);
  return out;
}

// Subjects mapped to integers shared by both sides.
void labels_of(const EmbeddingSet& p, const EmbeddingSet& g, std::vector<int>& pl, std::vector<int>& gl) {
  std::map<std::string, int> ids;
  auto id = [&](const std::string& s) { return ids.emplace(s, static_cast<int>(ids.size())).first->second; };
  pl.clear();
  gl.clear();
  for (const auto& r : p.items) pl.push_back(id(r.subject));
  for (const auto& r : g.items) gl.push_back(id(r.subject));
}

Exclusion exclusion_for(const EmbeddingSet& p, const EmbeddingSet& g, bool identical_seq, bool same_view) {
  Exclusion e;
  e.mask.assign(p.items.size() * g.items.size(), 0);
  for (std::size_t i = 0; i < p.items.size(); ++i)
    for (std::size_t j = 0; j < g.items.size(); ++j)
      e.mask[i * g.items.size() + j] = (identical_seq && identical(p.items[i], g.items[j])) ||
                                       (same_view && p.items[i].view == g.items[j].view);
  return e;
}

std::optional<std::set<std::string>> string_set(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<std::set<std::string>>();
}

Selector selector_from(const nlohmann::json& j) {
  for (const auto& [k, _] : j.items())
    if (k != "subjects" && k != "conditions" && k != "views") throw ArgumentError("unknown selector key '" + k + "'");
  return {string_set(j, "subjects"), string_set(j, "conditions"), string_set(j, "views")};
}

nlohmann::json selector_json(const Selector& s) {
  nlohmann::json j = nlohmann::json::object();
  if (s.subjects) j["subjects"] = *s.subjects;
  if (s.conditions) j["conditions"] = *s.conditions;
  if (s.views) j["views"] = *s.views;
  return j;
}

}  // namespace

void EmbeddingSet::validate() const {
  if (parts == 0 || dim == 0) throw DataError("embedding set has zero parts or dimension");
  for (const auto& r : items)
    if (r.values.size() != parts * dim)
      throw DataError("embedding for " + r.subject + "/" + r.condition + "/" + r.view + " has " +
                      std::to_string(r.values.size()) + " values, expected " + std::to_string(parts * dim));
}

void write_embeddings(const fs::path& dir, const EmbeddingSet& set) {
  set.validate();
  fs::create_directories(dir);
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const auto& r = set.items[i];
    char name[32];
    std::snprintf(name, sizeof name, "emb-%05zu.gt01", i);
    nd::save_gt01(dir / name, nd::TensorD({set.parts, set.dim}, r.values));
    items.push_back({{"subject", r.subject}, {"condition", r.condition}, {"view", r.view}, {"file", name}});
  }
  std::ofstream out(dir / "embeddings.json", std::ios::trunc);
  if (!out) throw IoError("cannot write embeddings in " + dir.string());
  out << nlohmann::json{{"schema_version", 1}, {"parts", set.parts}, {"dim", set.dim}, {"items", items}}.dump(1)
      << '\n';
}

EmbeddingSet read_embeddings(const fs::path& dir) {
  std::ifstream in(dir / "embeddings.json");
  if (!in) throw IoError("no embeddings.json in " + dir.string());
  EmbeddingSet set;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("schema_version").get<int>() != 1) throw IoError("unsupported embeddings schema in " + dir.string());
    set.parts = j.at("parts").get<std::size_t>();
    set.dim = j.at("dim").get<std::size_t>();
    for (const auto& it : j.at("items")) {
      const auto t = nd::load_gt01<double>(dir / it.at("file").get<std::string>());
      set.items.push_back({it.at("subject").get<std::string>(), it.at("condition").get<std::string>(),
                           it.at("view").get<std::string>(), t.storage()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed embeddings.json in " + dir.string() + ": " + e.what());
  }
  set.validate();
  return set;
}

bool Selector::accepts(const EmbeddingRecord& r) const {
  return (!subjects || subjects->contains(r.subject)) && (!conditions || conditions->contains(r.condition)) &&
         (!views || views->contains(r.view));
}

EvalProtocol protocol_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"schema_version", "probe",        "gallery", "exclude_identical",
                                           "exclude_same_view", "view_matrix", "ks"};
  if (!j.is_object()) throw ArgumentError("protocol must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ArgumentError("unknown protocol key '" + k + "'");
  EvalProtocol p;
  try {
    if (j.value("schema_version", 1) != 1) throw ArgumentError("unsupported protocol schema_version");
    if (j.contains("probe")) p.probe = selector_from(j["probe"]);
    if (j.contains("gallery")) p.gallery = selector_from(j["gallery"]);
    p.exclude_identical = j.value("exclude_identical", p.exclude_identical);
    p.exclude_same_view = j.value("exclude_same_view", p.exclude_same_view);
    p.view_matrix = j.value("view_matrix", p.view_matrix);
    if (j.contains("ks")) p.ks = j["ks"].get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed protocol: ") + e.what());
  }
  for (auto k : p.ks)
    if (k == 0) throw ArgumentError("protocol ks must be positive");
  return p;
}

nlohmann::json to_json(const EvalProtocol& p) {
  return {{"schema_version", 1},
          {"probe", selector_json(p.probe)},
          {"gallery", selector_json(p.gallery)},
          {"exclude_identical", p.exclude_identical},
          {"exclude_same_view", p.exclude_same_view},
          {"view_matrix", p.view_matrix},
          {"ks", p.ks}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  for (const auto& [k, v] : r.rank) j["rank" + std::to_string(k)] = number(v);
  j["map"] = number(r.map);
  j["minp"] = number(r.minp);
  j["probes"] = r.probes;
  j["gallery"] = r.gallery;
  j["no_match_probes"] = r.no_match_probes;
  if (r.view_matrix) {
    nlohmann::json cells = nlohmann::json::array();
    const std::size_t V = r.view_matrix->views.size();
    for (std::size_t a = 0; a < V; ++a) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t b = 0; b < V; ++b) row.push_back(number(r.view_matrix->cells[a * V + b]));
      cells.push_back(row);
    }
    j["view_matrix"] = {{"views", r.view_matrix->views}, {"rank1", cells}};
  } else {
    j["view_matrix"] = nullptr;
  }
  nlohmann::json conds = nlohmann::json::object();
  for (const auto& [c, row] : r.conditions)
    conds[c] = {{"rank1", number(row.rank1)}, {"map", number(row.map)}, {"minp", number(row.minp)},
                {"probes", row.probes}};
  j["conditions"] = conds;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    for (const auto& [k, v] : j.items())
      if (k.starts_with("rank")) r.rank[std::stoul(k.substr(4))] = number_from(v);
    r.map = number_from(j.at("map"));
    r.minp = number_from(j.at("minp"));
    r.probes = j.at("probes").get<std::size_t>();
    r.gallery = j.at("gallery").get<std::size_t>();
    r.no_match_probes = j.at("no_match_probes").get<std::size_t>();
    if (!j.at("view_matrix").is_null()) {
      ViewMatrix vm;
      vm.views = j["view_matrix"].at("views").get<std::vector<std::string>>();
      for (const auto& row : j["view_matrix"].at("rank1"))
        for (const auto& c : row) vm.cells.push_back(number_from(c));
      r.view_matrix = std::move(vm);
    }
    for (const auto& [c, row] : j.at("conditions").items())
      r.conditions[c] = {number_from(row.at("rank1")), number_from(row.at("map")), number_from(row.at("minp")),
                         row.at("probes").get<std::size_t>()};
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

DistanceMatrix distances(const EmbeddingSet& probe, const EmbeddingSet& gallery) {
  if (probe.parts != gallery.parts || probe.dim != gallery.dim)
    throw ShapeError("probe and gallery embeddings have different shapes");
  DistanceMatrix D{probe.items.size(), gallery.items.size(), {}};
  D.d.resize(D.probes * D.gallery);
  for (std::size_t i = 0; i < D.probes; ++i)
    for (std::size_t j = 0; j < D.gallery; ++j)
      D.d[i * D.gallery + j] = pairwise_distance(probe.items[i].values, gallery.items[j].values, probe.parts);
  return D;
}

ViewMatrix cross_view_matrix(const EmbeddingSet& probe, const EmbeddingSet& gallery) {
  std::set<std::string> vs;
  for (const auto& r : probe.items) vs.insert(r.view);
  for (const auto& r : gallery.items) vs.insert(r.view);
  ViewMatrix vm{{vs.begin(), vs.end()}, {}};
  for (const auto& pv : vm.views)
    for (const auto& gv : vm.views) {
      const auto p = filter(probe, {std::nullopt, std::nullopt, std::set<std::string>{pv}});
      const auto g = filter(gallery, {std::nullopt, std::nullopt, std::set<std::string>{gv}});
      if (p.items.empty() || g.items.empty()) {
        vm.cells.push_back(kNaN);
        continue;
      }
      std::vector<int> pl, gl;
      labels_of(p, g, pl, gl);
      const auto D = distances(p, g);
      const auto ex = exclusion_for(p, g, true, false);
      const bool empty = !ex.mask.empty() && std::all_of(ex.mask.begin(), ex.mask.end(), [](auto m) { return m != 0; });
      vm.cells.push_back(empty ? kNaN : rank_k({D, pl, gl, ex}, 1));
    }
  return vm;
}

EvalReport evaluate(const EvalProtocol& protocol, const EmbeddingSet& probe_all, const EmbeddingSet& gallery_all) {
  probe_all.validate();
  gallery_all.validate();
  const auto probe = filter(probe_all, protocol.probe);
  const auto gallery = filter(gallery_all, protocol.gallery);
  if (probe.items.empty()) throw DataError("probe set is empty after filtering");
  if (gallery.items.empty()) throw DataError("gallery set is empty after filtering");
  std::vector<int> pl, gl;
  labels_of(probe, gallery, pl, gl);
  const auto D = distances(probe, gallery);
  const auto ex = exclusion_for(probe, gallery, protocol.exclude_identical, protocol.exclude_same_view);
  const Ranking R{D, pl, gl, ex};
  EvalReport rep;
  for (auto k : protocol.ks) rep.rank[k] = rank_k(R, k);
  const auto ap = mean_ap(R);
  rep.map = ap.value;
  rep.minp = m_inp(R).value;
  rep.probes = probe.items.size();
  rep.gallery = gallery.items.size();
  rep.no_match_probes = ap.no_match;
  if (protocol.view_matrix) rep.view_matrix = cross_view_matrix(probe, gallery);
  std::set<std::string> conds;
  for (const auto& r : probe.items) conds.insert(r.condition);
  for (const auto& c : conds) {
    Selector sel;
    sel.conditions = std::set<std::string>{c};
    const auto sub = filter(probe, sel);
    std::vector<int> spl, sgl;
    labels_of(sub, gallery, spl, sgl);
    const auto SD = distances(sub, gallery);
    const auto sex = exclusion_for(sub, gallery, protocol.exclude_identical, protocol.exclude_same_view);
    const Ranking SR{SD, spl, sgl, sex};
    rep.conditions[c] = {rank_k(SR, 1), mean_ap(SR).value, m_inp(SR).value, sub.items.size()};
  }
  return rep;
}

}  // namespace gk::eval
