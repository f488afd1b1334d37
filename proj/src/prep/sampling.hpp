// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "nd/tensor.hpp"

namespace gk::prep {

using Rng = std::mt19937_64;

// Frame indices of a training clip: a random contiguous window when the
// sequence is long enough, otherwise the sequence repeated cyclically.
std::vector<std::size_t> clip_indices(std::size_t frame_count, std::size_t clip_len, Rng& rng);

// Gathers frames (axis 0) of `seq` in the given order.
nd::TensorF gather_frames(const nd::TensorF& seq, const std::vector<std::size_t>& idx);

// seq: [T, ...] -> [clip_len, ...]
nd::TensorF sample_clip(const nd::TensorF& seq, std::size_t clip_len, Rng& rng);

struct BatchPick {
  std::size_t sequence;  // index into the label list
  int label;
};

// P distinct labels, K sequences each (drawn with replacement only when a
// label has fewer than K sequences). Emitted grouped by label.
std::vector<BatchPick> make_batch(const std::vector<int>& sequence_labels, std::size_t P, std::size_t K, Rng& rng);

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;
  double erase_prob = 0.3;
};

// One transform drawn per sequence and applied identically to every frame.
struct AugmentDraw {
  bool flip = false;
  double rotation_deg = 0.0;
  bool erase = false;
  std::size_t erase_top = 0, erase_left = 0, erase_h = 0, erase_w = 0;
};

AugmentDraw draw_augment(const AugmentConfig& cfg, std::size_t height, std::size_t width, Rng& rng);

// Applies to every [H, W] plane of a tensor whose last two axes are H, W.
nd::TensorF apply_augment(const nd::TensorF& x, const AugmentDraw& d);

inline nd::TensorF augment(const nd::TensorF& clip, const AugmentConfig& cfg, Rng& rng) {
  const auto& s = clip.shape();
  return apply_augment(clip, draw_augment(cfg, s[s.size() - 2], s[s.size() - 1], rng));
}

}  // namespace gk::prep
