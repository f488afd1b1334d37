// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gk::prep {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}
  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const GrayImage&) const = default;
};

// Binary 8-bit PGM (P5, maxval <= 255). Throws IoError on anything else.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);

}  // namespace gk::prep
