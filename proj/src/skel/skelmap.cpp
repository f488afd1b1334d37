// SPDX-License-Identifier: Apache-2.0
#include "skel/skelmap.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace gk::skel {

std::vector<Limb> coco17_limbs() {
  return {{1, 2},  {1, 3},  {2, 3},   {2, 4},   {3, 5},   {1, 6},   {1, 7},   {6, 7},   {6, 8},  {8, 10},
          {7, 9},  {9, 11}, {6, 12},  {7, 13},  {12, 13}, {12, 14}, {14, 16}, {13, 15}, {15, 17}};
}

void RenderConfig::validate() const {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw ArgumentError("sigma must be positive");
  if (!(height > 0) || !std::isfinite(height)) throw ArgumentError("height must be positive");
  if (static_cast<double>(canvas) < height) throw ArgumentError("canvas size R must be at least H");
  if (!(crop_threshold >= 0)) throw ArgumentError("crop threshold must be non-negative");
  if (resize <= 2 * side_cut) throw ArgumentError("side cut removes the whole map");
  for (const auto& l : limbs)
    if (l.from < 1 || l.from > kNumJoints || l.to < 1 || l.to > kNumJoints)
      throw ArgumentError("limb index outside [1, 17]");
}

PoseFrame normalize_pose(const PoseFrame& frame, const RenderConfig& cfg) {
  const auto& kp = frame.keypoints;
  const auto& lh = kp[kLeftHip];
  const auto& rh = kp[kRightHip];
  if (!(lh.c > 0) || !(rh.c > 0))
    throw DataError("frame " + std::to_string(frame.frame) + ": missing hip keypoint");

  const double half = static_cast<double>(cfg.canvas) / 2.0;
  const double core_x = (lh.x + rh.x) / 2.0;
  const double core_y = (lh.y + rh.y) / 2.0;

  PoseFrame out = frame;
  double y_min = INFINITY, y_max = -INFINITY;
  for (auto& p : out.keypoints) {
    p.x = p.x - core_x + half;
    p.y = p.y - core_y + half;
    if (p.c > 0) {
      y_min = std::min(y_min, p.y);
      y_max = std::max(y_max, p.y);
    }
  }
  if (!(y_max > y_min))
    throw DataError("frame " + std::to_string(frame.frame) + ": degenerate pose (zero vertical extent)");
  const double range = y_max - y_min;
  for (auto& p : out.keypoints) {
    p.x = (p.x - y_min) / range * cfg.height;
    p.y = (p.y - y_min) / range * cfg.height;
  }
  return out;
}

PoseFrame place_on_canvas(const PoseFrame& normalized, const RenderConfig& cfg) {
  if (!cfg.center_on_canvas) return normalized;
  const double off = (static_cast<double>(cfg.canvas) - cfg.height) / 2.0;
  PoseFrame out = normalized;
  for (auto& p : out.keypoints) {
    p.x += off;
    p.y += off;
  }
  return out;
}

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double qx = a.x + t * dx - p.x, qy = a.y + t * dy - p.y;
  return std::sqrt(qx * qx + qy * qy);
}

Grid render_joint_map(const PoseFrame& frame, const RenderConfig& cfg) {
  const std::size_t R = cfg.canvas;
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  Grid g(R);
  std::vector<double> gx(R), gy(R);
  // exp(-(dx^2 + dy^2) k) = exp(-dx^2 k) exp(-dy^2 k): one outer product per joint.
  for (const auto& p : frame.keypoints) {
    if (p.c <= 0) continue;
    for (std::size_t i = 0; i < R; ++i) {
      const double d = static_cast<double>(i + 1) - p.x;
      gx[i] = std::exp(-d * d * inv);
    }
    for (std::size_t j = 0; j < R; ++j) {
      const double d = static_cast<double>(j + 1) - p.y;
      gy[j] = p.c * std::exp(-d * d * inv);
    }
    for (std::size_t r = 0; r < R; ++r) {
      const double wy = gy[r];
      if (wy == 0.0) continue;
      double* row = &g.values[r * R];
      for (std::size_t c = 0; c < R; ++c) row[c] += wy * gx[c];
    }
  }
  return g;
}

Grid render_limb_map(const PoseFrame& frame, const RenderConfig& cfg) {
  const std::size_t R = cfg.canvas;
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  // Terms below 1e-15 of a limb's weight are skipped.
  const double cutoff2 = std::log(1e15) / inv;
  Grid g(R);
  for (const auto& limb : cfg.limbs) {
    const auto& a = frame.keypoints[limb.from - 1];
    const auto& b = frame.keypoints[limb.to - 1];
    const double w = std::min(a.c, b.c);
    if (w <= 0) continue;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    for (std::size_t r = 0; r < R; ++r) {
      const double py = static_cast<double>(r + 1);
      double* row = &g.values[r * R];
      for (std::size_t c = 0; c < R; ++c) {
        const double px = static_cast<double>(c + 1);
        double t = 0.0;
        if (len2 > 0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
        const double qx = a.x + t * dx - px, qy = a.y + t * dy - py;
        const double d2 = qx * qx + qy * qy;
        if (d2 > cutoff2) continue;
        row[c] += w * std::exp(-d2 * inv);
      }
    }
  }
  return g;
}

CropBox crop_box(const Grid& joints, const Grid& limbs, const RenderConfig& cfg) {
  const std::size_t R = cfg.canvas;
  if (joints.size != R || limbs.size != R) throw ShapeError("skeleton maps do not match the canvas size");
  std::size_t first = R, last = 0;
  for (std::size_t r = 0; r < R; ++r) {
    bool any = false;
    for (std::size_t c = 0; c < R && !any; ++c)
      any = joints.at(r, c) > cfg.crop_threshold || limbs.at(r, c) > cfg.crop_threshold;
    if (any) {
      first = std::min(first, r);
      last = r;
    }
  }
  if (first == R) throw DataError("skeleton map is blank; nothing to crop");
  const double lo = (static_cast<double>(R) - cfg.height) / 2.0;
  const auto col_begin = static_cast<std::size_t>(std::floor(lo));
  const auto col_end = static_cast<std::size_t>(std::floor(lo + cfg.height));
  return {first, last, col_begin, std::min(col_end, R)};
}

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t src_h, std::size_t src_w,
                                    std::size_t dst_h, std::size_t dst_w) {
  auto taps = [](std::size_t dst, std::size_t n_src, std::size_t n_dst, std::vector<std::size_t>& i0,
                 std::vector<std::size_t>& i1, std::vector<double>& frac) {
    const double scale = static_cast<double>(n_src) / static_cast<double>(n_dst);
    i0.resize(dst);
    i1.resize(dst);
    frac.resize(dst);
    for (std::size_t d = 0; d < dst; ++d) {
      double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_src - 1));
      const auto f = static_cast<std::size_t>(std::floor(s));
      i0[d] = f;
      i1[d] = std::min(f + 1, n_src - 1);
      frac[d] = s - static_cast<double>(f);
    }
  };
  std::vector<std::size_t> r0, r1, c0, c1;
  std::vector<double> fr, fc;
  taps(dst_h, src_h, dst_h, r0, r1, fr);
  taps(dst_w, src_w, dst_w, c0, c1, fc);
  std::vector<double> out(dst_h * dst_w);
  for (std::size_t r = 0; r < dst_h; ++r)
    for (std::size_t c = 0; c < dst_w; ++c) {
      const double top = src[r0[r] * src_w + c0[c]] * (1 - fc[c]) + src[r0[r] * src_w + c1[c]] * fc[c];
      const double bot = src[r1[r] * src_w + c0[c]] * (1 - fc[c]) + src[r1[r] * src_w + c1[c]] * fc[c];
      out[r * dst_w + c] = top * (1 - fr[r]) + bot * fr[r];
    }
  return out;
}

nd::TensorF finalize_map(const Grid& joints, const Grid& limbs, const RenderConfig& cfg) {
  const CropBox box = crop_box(joints, limbs, cfg);
  const std::size_t h = box.row_last - box.row_first + 1;
  const std::size_t w = box.col_end - box.col_begin;
  const std::size_t S = cfg.resize, W = cfg.out_width();
  nd::TensorF out(nd::Shape{2, S, W});
  const Grid* chans[2] = {&joints, &limbs};
  for (std::size_t ch = 0; ch < 2; ++ch) {
    std::vector<double> crop(h * w);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) crop[r * w + c] = chans[ch]->at(box.row_first + r, box.col_begin + c);
    const auto resized = resize_bilinear(crop, h, w, S, S);
    for (std::size_t r = 0; r < S; ++r)
      for (std::size_t c = 0; c < W; ++c)
        out.at({ch, r, c}) = static_cast<float>(resized[r * S + c + cfg.side_cut]);
  }
  return out;
}

RenderedSequence render_sequence(const PoseSequence& poses, const RenderConfig& cfg) {
  cfg.validate();
  RenderedSequence res;
  std::vector<float> buf;
  for (const auto& f : poses) {
    try {
      const PoseFrame p = place_on_canvas(normalize_pose(f, cfg), cfg);
      const auto map = finalize_map(render_joint_map(p, cfg), render_limb_map(p, cfg), cfg);
      buf.insert(buf.end(), map.data().begin(), map.data().end());
      res.frames.push_back(f.frame);
    } catch (const DataError& e) {
      res.dropped.push_back({f.frame, e.what()});
    }
  }
  if (!res.frames.empty())
    res.maps = nd::TensorF(nd::Shape{res.frames.size(), 2, cfg.out_height(), cfg.out_width()}, std::move(buf));
  return res;
}

}  // namespace gk::skel
