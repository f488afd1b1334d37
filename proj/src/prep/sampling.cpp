// SPDX-License-Identifier: Apache-2.0
#include "prep/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "common/error.hpp"

namespace gk::prep {

std::vector<std::size_t> clip_indices(std::size_t frame_count, std::size_t clip_len, Rng& rng) {
  if (frame_count == 0) throw DataError("cannot sample a clip from an empty sequence");
  if (clip_len == 0) throw ArgumentError("clip length must be positive");
  std::vector<std::size_t> idx(clip_len);
  if (frame_count >= clip_len) {
    std::uniform_int_distribution<std::size_t> start(0, frame_count - clip_len);
    const std::size_t s = start(rng);
    for (std::size_t i = 0; i < clip_len; ++i) idx[i] = s + i;
  } else {
    for (std::size_t i = 0; i < clip_len; ++i) idx[i] = i % frame_count;
  }
  return idx;
}

nd::TensorF gather_frames(const nd::TensorF& seq, const std::vector<std::size_t>& idx) {
  if (seq.rank() < 1) throw ShapeError("gather_frames: expected a sequence tensor");
  nd::Shape s = seq.shape();
  const std::size_t frame = seq.numel() / s[0];
  s[0] = idx.size();
  nd::TensorF out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= seq.dim(0)) throw ShapeError("gather_frames: index out of range");
    std::copy_n(seq.ptr() + idx[i] * frame, frame, out.ptr() + i * frame);
  }
  return out;
}

nd::TensorF sample_clip(const nd::TensorF& seq, std::size_t clip_len, Rng& rng) {
  return gather_frames(seq, clip_indices(seq.dim(0), clip_len, rng));
}

std::vector<BatchPick> make_batch(const std::vector<int>& sequence_labels, std::size_t P, std::size_t K, Rng& rng) {
  if (P == 0 || K == 0) throw ArgumentError("batch P and K must be positive");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < sequence_labels.size(); ++i) by_label[sequence_labels[i]].push_back(i);
  if (P > by_label.size())
    throw ArgumentError("batch asks for " + std::to_string(P) + " subjects but only " +
                        std::to_string(by_label.size()) + " exist");
  std::vector<int> labels;
  for (const auto& [l, _] : by_label) labels.push_back(l);
  // Partial Fisher-Yates with explicit draws keeps the result independent of
  // the standard library's shuffle implementation.
  for (std::size_t i = 0; i < P; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, labels.size() - 1);
    std::swap(labels[i], labels[pick(rng)]);
  }
  std::vector<BatchPick> out;
  out.reserve(P * K);
  for (std::size_t i = 0; i < P; ++i) {
    auto seqs = by_label[labels[i]];
    if (seqs.size() >= K) {
      for (std::size_t k = 0; k < K; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, seqs.size() - 1);
        std::swap(seqs[k], seqs[pick(rng)]);
        out.push_back({seqs[k], labels[i]});
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, seqs.size() - 1);
      for (std::size_t k = 0; k < K; ++k) out.push_back({seqs[pick(rng)], labels[i]});
    }
  }
  return out;
}

AugmentDraw draw_augment(const AugmentConfig& cfg, std::size_t height, std::size_t width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentDraw d;
  d.flip = u(rng) < cfg.flip_prob;
  d.rotation_deg = cfg.max_rotation_deg > 0 ? (2 * u(rng) - 1) * cfg.max_rotation_deg : 0.0;
  d.erase = u(rng) < cfg.erase_prob;
  if (d.erase) {
    // Rectangle covering 2%..20% of the frame with aspect in [0.5, 2].
    const double area = (0.02 + 0.18 * u(rng)) * static_cast<double>(height * width);
    const double aspect = std::exp(std::log(0.5) + u(rng) * std::log(4.0));
    d.erase_h = std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(area * aspect)), 1, height);
    d.erase_w = std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(area / aspect)), 1, width);
    d.erase_top = static_cast<std::size_t>(u(rng) * static_cast<double>(height - d.erase_h + 1));
    d.erase_left = static_cast<std::size_t>(u(rng) * static_cast<double>(width - d.erase_w + 1));
    d.erase_top = std::min(d.erase_top, height - d.erase_h);
    d.erase_left = std::min(d.erase_left, width - d.erase_w);
  }
  return d;
}

nd::TensorF apply_augment(const nd::TensorF& x, const AugmentDraw& d) {
  if (x.rank() < 2) throw ShapeError("apply_augment: need at least [H, W]");
  const std::size_t H = x.dim(x.rank() - 2), W = x.dim(x.rank() - 1), planes = x.numel() / (H * W);
  nd::TensorF out = x;
  std::vector<float> tmp(H * W);
  const double th = d.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const double cy = (static_cast<double>(H) - 1) / 2, cx = (static_cast<double>(W) - 1) / 2;
  for (std::size_t p = 0; p < planes; ++p) {
    float* img = out.ptr() + p * H * W;
    if (d.flip)
      for (std::size_t r = 0; r < H; ++r) std::reverse(img + r * W, img + (r + 1) * W);
    if (d.rotation_deg != 0.0) {
      std::copy_n(img, H * W, tmp.begin());
      auto px = [&](long r, long c) -> double {
        if (r < 0 || c < 0 || r >= static_cast<long>(H) || c >= static_cast<long>(W)) return 0.0;
        return tmp[static_cast<std::size_t>(r) * W + static_cast<std::size_t>(c)];
      };
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          // inverse map: rotate the output coordinate back into the source
          const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
          const double sy = cs * dy - sn * dx + cy, sx = sn * dy + cs * dx + cx;
          const double fy = std::floor(sy), fx = std::floor(sx);
          const double wy = sy - fy, wx = sx - fx;
          const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
          img[r * W + c] = static_cast<float>((px(y0, x0) * (1 - wx) + px(y0, x0 + 1) * wx) * (1 - wy) +
                                              (px(y0 + 1, x0) * (1 - wx) + px(y0 + 1, x0 + 1) * wx) * wy);
        }
    }
    if (d.erase)
      for (std::size_t r = d.erase_top; r < d.erase_top + d.erase_h; ++r)
        std::fill_n(img + r * W + d.erase_left, d.erase_w, 0.0f);
  }
  return out;
}

}  // namespace gk::prep
