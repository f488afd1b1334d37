// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nd/tensor.hpp"
#include "skel/pose.hpp"

namespace gk::skel {

// Joint pair using 1-based COCO-17 indices (1 = nose ... 17 = right ankle).
struct Limb {
  std::size_t from;
  std::size_t to;
};

// 19 edges: nose-eyes, eye-eye, eyes-ears, nose-shoulders, shoulder-shoulder,
// shoulders-elbows-wrists, shoulders-hips, hip-hip, hips-knees-ankles.
std::vector<Limb> coco17_limbs();

struct RenderConfig {
  double height = 64.0;       // normalized body height H
  std::size_t canvas = 128;   // R; 2H by default
  double sigma = 8.0;
  std::vector<Limb> limbs = coco17_limbs();
  double crop_threshold = 1e-3;  // a pixel counts as non-zero above this
  // Shift normalized coordinates by (R - H) / 2 so the H x H body box sits in
  // the middle of the canvas, where the fixed horizontal crop expects it.
  bool center_on_canvas = true;
  std::size_t resize = 64;     // square resize target before side cutting
  std::size_t side_cut = 10;   // columns removed from each side

  void validate() const;  // throws ArgumentError
  std::size_t out_height() const { return resize; }
  std::size_t out_width() const { return resize - 2 * side_cut; }
};

struct Point {
  double x;
  double y;
};

// R x R map; row r holds pixel j = r + 1 (vertical), column c holds i = c + 1.
struct Grid {
  std::size_t size = 0;
  std::vector<double> values;

  explicit Grid(std::size_t n = 0) : size(n), values(n * n, 0.0) {}
  double& at(std::size_t row, std::size_t col) { return values[row * size + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * size + col]; }
};

// Center- then scale-normalization, applied in the listed order. Uses only
// joints with c > 0 for the vertical extent. Throws DataError on a missing
// hip or a zero vertical extent.
PoseFrame normalize_pose(const PoseFrame& frame, const RenderConfig& cfg);

// Translation applied between normalization and rendering (identity when
// cfg.center_on_canvas is false).
PoseFrame place_on_canvas(const PoseFrame& normalized, const RenderConfig& cfg);

double point_segment_distance(Point p, Point a, Point b);

// Sum of confidence-weighted Gaussians at every integer pixel (i, j) in [1, R]^2.
Grid render_joint_map(const PoseFrame& frame, const RenderConfig& cfg);
// Same with the distance to each limb segment, weighted by min endpoint confidence.
Grid render_limb_map(const PoseFrame& frame, const RenderConfig& cfg);

struct CropBox {
  std::size_t row_first;  // inclusive
  std::size_t row_last;   // inclusive
  std::size_t col_begin;  // inclusive
  std::size_t col_end;    // exclusive
};

// Rows: first/last row holding a value above the threshold in either channel.
// Columns: the fixed span [(R - H) / 2, (R + H) / 2). Throws DataError if the
// maps are blank.
CropBox crop_box(const Grid& joints, const Grid& limbs, const RenderConfig& cfg);

// Crop, bilinear resize to resize x resize, cut side columns.
// Returns [2, resize, resize - 2 * side_cut] with channel 0 = joints, 1 = limbs.
nd::TensorF finalize_map(const Grid& joints, const Grid& limbs, const RenderConfig& cfg);

struct DropRecord {
  long frame;
  std::string reason;
};

struct RenderedSequence {
  nd::TensorF maps;  // [T, 2, 64, 44]; empty when every frame was dropped
  std::vector<long> frames;  // source frame index of each kept map
  std::vector<DropRecord> dropped;
};

RenderedSequence render_sequence(const PoseSequence& poses, const RenderConfig& cfg);

// Half-pixel-centred bilinear resampling of a row-major single-channel image.
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t src_h, std::size_t src_w,
                                    std::size_t dst_h, std::size_t dst_w);

}  // namespace gk::skel
