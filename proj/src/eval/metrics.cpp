// SPDX-License-Identifier: Apache-2.0
#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "common/error.hpp"

namespace gk::eval {

double pairwise_distance(std::span<const double> a, std::span<const double> b, std::size_t parts) {
  if (a.size() != b.size() || parts == 0 || a.size() % parts != 0)
    throw ShapeError("pairwise_distance: embeddings of " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " values do not split into " + std::to_string(parts) + " parts");
  const std::size_t dim = a.size() / parts;
  double total = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    double s = 0;
    for (std::size_t k = p * dim; k < (p + 1) * dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    total += std::sqrt(s);
  }
  return total / static_cast<double>(parts);
}

namespace {

void check(const Ranking& r) {
  if (r.dist.d.size() != r.dist.probes * r.dist.gallery || r.probe_labels.size() != r.dist.probes ||
      r.gallery_labels.size() != r.dist.gallery)
    throw ShapeError("ranking inputs disagree on probe/gallery sizes");
  if (!r.exclusion.mask.empty() && r.exclusion.mask.size() != r.dist.d.size())
    throw ShapeError("exclusion mask does not match the distance matrix");
  if (r.dist.probes == 0) throw ArgumentError("no probes to evaluate");
}

// 1-based ranks of the matches of one probe.
std::vector<std::size_t> match_ranks(const Ranking& r, std::size_t i) {
  std::vector<std::size_t> ranks;
  const auto order = ranked_gallery(r, i);
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (r.gallery_labels[order[pos]] == r.probe_labels[i]) ranks.push_back(pos + 1);
  return ranks;
}

template <typename F>
MeanMetric mean_over_matched(const Ranking& r, F per_probe) {
  check(r);
  MeanMetric m;
  double sum = 0;
  for (std::size_t i = 0; i < r.dist.probes; ++i) {
    const auto ranks = match_ranks(r, i);
    if (ranks.empty()) {
      ++m.no_match;
      continue;
    }
    sum += per_probe(ranks);
    ++m.counted;
  }
  m.value = m.counted ? sum / static_cast<double>(m.counted) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

}  // namespace

std::vector<std::size_t> ranked_gallery(const Ranking& r, std::size_t probe) {
  const std::size_t G = r.dist.gallery;
  std::vector<std::size_t> idx;
  idx.reserve(G);
  for (std::size_t j = 0; j < G; ++j)
    if (!r.exclusion.excluded(probe, j, G)) idx.push_back(j);
  const double* row = r.dist.d.data() + probe * G;
  std::stable_sort(idx.begin(), idx.end(), [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
  return idx;
}

double rank_k(const Ranking& r, std::size_t k) {
  check(r);
  if (k == 0) throw ArgumentError("rank-k needs k >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < r.dist.probes; ++i) {
    const auto order = ranked_gallery(r, i);
    const std::size_t n = std::min(k, order.size());
    for (std::size_t pos = 0; pos < n; ++pos)
      if (r.gallery_labels[order[pos]] == r.probe_labels[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(r.dist.probes);
}

MeanMetric mean_ap(const Ranking& r) {
  return mean_over_matched(r, [](const std::vector<std::size_t>& ranks) {
    double s = 0;
    for (std::size_t j = 0; j < ranks.size(); ++j) s += static_cast<double>(j + 1) / static_cast<double>(ranks[j]);
    return s / static_cast<double>(ranks.size());
  });
}

MeanMetric m_inp(const Ranking& r) {
  return mean_over_matched(r, [](const std::vector<std::size_t>& ranks) {
    return static_cast<double>(ranks.size()) / static_cast<double>(ranks.back());
  });
}

}  // namespace gk::eval
