// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "prep/image.hpp"

namespace gk::prep {

struct AlignConfig {
  std::uint8_t threshold = 128;  // foreground iff value >= threshold
  std::size_t out_height = 64;
  std::size_t out_width = 44;
};

// Crops the foreground's vertical span, scales it to out_height keeping the
// aspect ratio, and centres the horizontal centre of mass. Output is binary
// (0 / 255). Integer horizontal shifts of the input give identical output.
// Throws DataError("empty silhouette") when no pixel reaches the threshold.
GrayImage align_silhouette(const GrayImage& raw, const AlignConfig& cfg = {});

}  // namespace gk::prep
