// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gk::eval {

// Mean over parts of the per-part Euclidean distance between two [parts, dim] embeddings.
double pairwise_distance(std::span<const double> a, std::span<const double> b, std::size_t parts);

// Row-major probes x gallery.
struct DistanceMatrix {
  std::size_t probes = 0, gallery = 0;
  std::vector<double> d;
  double at(std::size_t i, std::size_t j) const { return d[i * gallery + j]; }
};

// Excluded (probe, gallery) pairs; an empty mask excludes nothing.
struct Exclusion {
  std::vector<std::uint8_t> mask;
  bool excluded(std::size_t i, std::size_t j, std::size_t gallery) const {
    return !mask.empty() && mask[i * gallery + j];
  }
};

struct Ranking {
  const DistanceMatrix& dist;
  const std::vector<int>& probe_labels;
  const std::vector<int>& gallery_labels;
  const Exclusion& exclusion;
};

// Gallery indices of non-excluded entries, nearest first; ties keep gallery order.
std::vector<std::size_t> ranked_gallery(const Ranking& r, std::size_t probe);

// Fraction of all probes with a match among their first k ranked entries.
// Probes without any gallery match count as misses.
double rank_k(const Ranking& r, std::size_t k);

struct MeanMetric {
  double value = 0.0;         // NaN when no probe has a match
  std::size_t counted = 0;    // probes with at least one match
  std::size_t no_match = 0;   // probes left out of the mean
};

// AP = mean over matches j (1-based) of j / rank_j.
MeanMetric mean_ap(const Ranking& r);
// INP = matches / rank of the last match.
MeanMetric m_inp(const Ranking& r);

}  // namespace gk::eval
