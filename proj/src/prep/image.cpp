// SPDX-License-Identifier: Apache-2.0
#include "prep/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "common/error.hpp"

namespace gk::prep {
namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
bool next_token(const std::vector<char>& buf, std::size_t& pos, std::string& tok) {
  tok.clear();
  while (pos < buf.size()) {
    const char ch = buf[pos];
    if (ch == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      ++pos;
    } else {
      break;
    }
  }
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) tok.push_back(buf[pos++]);
  return !tok.empty();
}

std::size_t parse_uint(const std::string& tok, const std::filesystem::path& path) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9)
    throw IoError("corrupted PGM header: " + path.string());
  return std::stoul(tok);
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PGM: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::string tok;
  if (!next_token(buf, pos, tok) || tok != "P5") throw IoError("not a binary PGM (P5): " + path.string());
  std::string tw, th, tm;
  if (!next_token(buf, pos, tw) || !next_token(buf, pos, th) || !next_token(buf, pos, tm))
    throw IoError("corrupted PGM header: " + path.string());
  const std::size_t w = parse_uint(tw, path), h = parse_uint(th, path), maxval = parse_uint(tm, path);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) throw IoError("unsupported PGM geometry: " + path.string());
  ++pos;  // single whitespace after maxval
  if (buf.size() < pos + w * h) throw IoError("corrupted PGM (truncated pixel data): " + path.string());
  GrayImage img(h, w);
  for (std::size_t i = 0; i < w * h; ++i) img.pixels[i] = static_cast<std::uint8_t>(buf[pos + i]);
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write PGM: " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gk::prep
