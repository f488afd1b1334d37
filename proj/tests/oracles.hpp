// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations shared by the unit tests and the
// acceptance runner. Each one evaluates its definition directly, without the
// shortcuts the library takes.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "net/layers.hpp"
#include "skel/skelmap.hpp"

namespace gk::oracle {

// ---------------------------------------------------------------- skeleton maps

// Upright random pose with every coordinate a multiple of 1/64, so dyadic
// translations are exact in binary floating point.
inline skel::PoseFrame random_pose(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> ux(40 * 64, 90 * 64), uy(10 * 64, 120 * 64);
  std::uniform_real_distribution<double> uc(0.3, 1.0);
  skel::PoseFrame f;
  for (auto& k : f.keypoints) k = {ux(rng) / 64.0, uy(rng) / 64.0, uc(rng)};
  return f;
}

inline double joint_value(const skel::PoseFrame& p, double i, double j, double sigma) {
  double v = 0;
  for (const auto& k : p.keypoints) {
    const double d2 = (i - k.x) * (i - k.x) + (j - k.y) * (j - k.y);
    v += std::exp(-d2 / (2 * sigma * sigma)) * k.c;
  }
  return v;
}

// Minimum of the two endpoint distances and, when the perpendicular foot falls
// strictly inside the segment, the distance to the supporting line.
inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double da = std::hypot(px - ax, py - ay), db = std::hypot(px - bx, py - by);
  double best = std::min(da, db);
  const double len = std::hypot(bx - ax, by - ay);
  if (len > 0) {
    const double along = ((px - ax) * (bx - ax) + (py - ay) * (by - ay)) / len;
    if (along > 0 && along < len) best = std::min(best, std::abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / len);
  }
  return best;
}

inline double limb_value(const skel::PoseFrame& p, double i, double j, const skel::RenderConfig& cfg) {
  double v = 0;
  for (const auto& l : cfg.limbs) {
    const auto& a = p.keypoints[l.from - 1];
    const auto& b = p.keypoints[l.to - 1];
    const double d = segment_distance(i, j, a.x, a.y, b.x, b.y);
    v += std::exp(-d * d / (2 * cfg.sigma * cfg.sigma)) * std::min(a.c, b.c);
  }
  return v;
}

// Largest deviation of the rendered joint and limb maps from the per-pixel sums.
struct MapError {
  double joint = 0, limb = 0;
};

inline MapError render_error(const skel::PoseFrame& p, const skel::RenderConfig& cfg) {
  const auto J = skel::render_joint_map(p, cfg);
  const auto L = skel::render_limb_map(p, cfg);
  MapError e;
  for (std::size_t r = 0; r < cfg.canvas; ++r)
    for (std::size_t c = 0; c < cfg.canvas; ++c) {
      const double i = double(c + 1), j = double(r + 1);
      e.joint = std::max(e.joint, std::abs(J.at(r, c) - joint_value(p, i, j, cfg.sigma)));
      e.limb = std::max(e.limb, std::abs(L.at(r, c) - limb_value(p, i, j, cfg)));
    }
  return e;
}

// ---------------------------------------------------------------- retrieval metrics

struct MetricInstance {
  std::size_t probes = 0, gallery = 0;
  std::vector<double> d;  // probes x gallery
  std::vector<int> probe_labels, gallery_labels;
  std::vector<std::uint8_t> excluded;  // probes x gallery
};

struct MetricValues {
  std::vector<double> rank;  // rank-k for k = 1..gallery
  double map = 0, minp = 0;
  std::size_t counted = 0;
};

// 1-based position of gallery j among the non-excluded entries of probe i:
// one plus the number of entries strictly closer, or equally close with a
// smaller index.
inline std::size_t position(const MetricInstance& m, std::size_t i, std::size_t j) {
  std::size_t pos = 1;
  for (std::size_t q = 0; q < m.gallery; ++q) {
    if (m.excluded[i * m.gallery + q] || q == j) continue;
    const double a = m.d[i * m.gallery + q], b = m.d[i * m.gallery + j];
    if (a < b || (a == b && q < j)) ++pos;
  }
  return pos;
}

inline MetricValues metric_values(const MetricInstance& m) {
  MetricValues v;
  v.rank.assign(m.gallery, 0.0);
  double ap_sum = 0, inp_sum = 0;
  for (std::size_t i = 0; i < m.probes; ++i) {
    std::vector<std::size_t> match_pos;
    for (std::size_t j = 0; j < m.gallery; ++j)
      if (!m.excluded[i * m.gallery + j] && m.gallery_labels[j] == m.probe_labels[i])
        match_pos.push_back(position(m, i, j));
    std::sort(match_pos.begin(), match_pos.end());
    for (std::size_t k = 1; k <= m.gallery; ++k)
      if (!match_pos.empty() && match_pos.front() <= k) v.rank[k - 1] += 1;
    if (match_pos.empty()) continue;
    double ap = 0;
    for (std::size_t t = 0; t < match_pos.size(); ++t) ap += double(t + 1) / double(match_pos[t]);
    ap_sum += ap / double(match_pos.size());
    inp_sum += double(match_pos.size()) / double(match_pos.back());
    ++v.counted;
  }
  for (auto& r : v.rank) r /= double(m.probes);
  v.map = v.counted ? ap_sum / double(v.counted) : NAN;
  v.minp = v.counted ? inp_sum / double(v.counted) : NAN;
  return v;
}

// Random instance; distances are quantized so ties occur, some pairs excluded,
// and labels drawn so that a few probes have no gallery match.
inline MetricInstance random_metric_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> np(1, 20), ng(1, 50);
  MetricInstance m;
  m.probes = np(rng);
  m.gallery = ng(rng);
  std::uniform_int_distribution<int> lab(0, 6), q(0, 40);
  std::bernoulli_distribution ex(0.1);
  for (std::size_t i = 0; i < m.probes; ++i) m.probe_labels.push_back(lab(rng));
  for (std::size_t j = 0; j < m.gallery; ++j) m.gallery_labels.push_back(lab(rng));
  for (std::size_t k = 0; k < m.probes * m.gallery; ++k) {
    m.d.push_back(q(rng) / 8.0);
    m.excluded.push_back(ex(rng));
  }
  return m;
}

// ---------------------------------------------------------------- parameter counts

inline std::size_t block_params(std::size_t cin, std::size_t cout, std::size_t stride, net::BlockKind k) {
  auto kconv = [&](std::size_t a, std::size_t b) -> std::size_t {
    switch (k) {
      case net::BlockKind::plain2d: return a * b * 9;
      case net::BlockKind::full3d: return a * b * 27;
      case net::BlockKind::pseudo3d: return a * b * 9 + b * b * 3;
    }
    return 0;
  };
  std::size_t n = kconv(cin, cout) + kconv(cout, cout) + 4 * cout;  // two convs, two BNs
  if (cin != cout || stride != 1) n += cin * cout + 2 * cout;        // projection shortcut
  return n;
}

// Conv 0, then Stage 1 (2D) and Stages 2-4 of the chosen kind at widths C, 2C, 4C, 8C.
inline std::size_t backbone_params(std::size_t in, std::size_t C, std::array<int, 4> D, net::BlockKind k) {
  std::size_t n = in * C * 9 + 2 * C;
  const std::size_t w[4] = {C, 2 * C, 4 * C, 8 * C}, s[4] = {1, 2, 2, 1};
  std::size_t cin = C;
  for (int st = 0; st < 4; ++st) {
    const net::BlockKind kind = st == 0 ? net::BlockKind::plain2d : k;
    for (int b = 0; b < D[st]; ++b) n += block_params(b == 0 ? cin : w[st], w[st], b == 0 ? s[st] : 1, kind);
    cin = w[st];
  }
  return n;
}

}  // namespace gk::oracle
