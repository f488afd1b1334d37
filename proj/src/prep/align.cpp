// SPDX-License-Identifier: Apache-2.0
#include "prep/align.hpp"

#include <cmath>
#include <cstdint>

#include "common/error.hpp"

namespace gk::prep {

GrayImage align_silhouette(const GrayImage& raw, const AlignConfig& cfg) {
  if (raw.height == 0 || raw.width == 0) throw DataError("empty silhouette");
  std::size_t top = raw.height, bottom = 0;
  std::int64_t sum_x = 0, count = 0;
  for (std::size_t r = 0; r < raw.height; ++r)
    for (std::size_t c = 0; c < raw.width; ++c)
      if (raw.at(r, c) >= cfg.threshold) {
        top = std::min(top, r);
        bottom = r;
        sum_x += static_cast<std::int64_t>(c);
        ++count;
      }
  if (count == 0) throw DataError("empty silhouette");

  // Integer anchor column: shifting the input by k shifts it by exactly k.
  const std::int64_t anchor = sum_x / count;
  const double scale = static_cast<double>(bottom - top + 1) / static_cast<double>(cfg.out_height);
  const auto center = static_cast<std::int64_t>(cfg.out_width / 2);

  auto mask = [&](std::int64_t r, std::int64_t c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<std::int64_t>(raw.height) || c >= static_cast<std::int64_t>(raw.width))
      return 0.0;
    return raw.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) >= cfg.threshold ? 255.0 : 0.0;
  };

  GrayImage out(cfg.out_height, cfg.out_width);
  for (std::size_t r = 0; r < cfg.out_height; ++r) {
    const double ys = static_cast<double>(top) + (static_cast<double>(r) + 0.5) * scale - 0.5;
    const double yf = std::floor(ys);
    const double wy = ys - yf;
    const auto y0 = static_cast<std::int64_t>(yf);
    for (std::size_t c = 0; c < cfg.out_width; ++c) {
      const double t = static_cast<double>(static_cast<std::int64_t>(c) - center) * scale;
      const double tf = std::floor(t);
      const double wx = t - tf;
      const std::int64_t x0 = anchor + static_cast<std::int64_t>(tf);
      const double v = (mask(y0, x0) * (1 - wx) + mask(y0, x0 + 1) * wx) * (1 - wy) +
                       (mask(y0 + 1, x0) * (1 - wx) + mask(y0 + 1, x0 + 1) * wx) * wy;
      out.at(r, c) = v >= cfg.threshold ? 255 : 0;
    }
  }
  return out;
}

}  // namespace gk::prep
