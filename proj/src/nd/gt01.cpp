// SPDX-License-Identifier: Apache-2.0
#include "nd/gt01.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gk::nd {
namespace {

constexpr char kMagic[4] = {'G', 'T', '0', '1'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
Tensor<T> decode_payload(const Shape& shape, const std::uint8_t* p) {
  std::vector<T> data(numel(shape));
  for (auto& v : data) {
    v = std::bit_cast<T>(get_le<Bits<T>>(p));
    p += sizeof(T);
  }
  return Tensor<T>(shape, std::move(data));
}

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_gt01(const Tensor<T>& t) {
  if (t.rank() > 255) throw ShapeError("GT01 supports rank <= 255");
  std::vector<std::uint8_t> out;
  out.reserve(6 + 4 * t.rank() + sizeof(T) * t.numel());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > 0xffffffffu) throw ShapeError("GT01 extent exceeds u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  }
  for (T v : t.data()) put_le<Bits<T>>(out, std::bit_cast<Bits<T>>(v));
  return out;
}

AnyTensor decode_gt01(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("not a GT01 tensor (bad magic)");
  const auto code = bytes[4];
  const std::size_t rank = bytes[5];
  if (code > 1) throw IoError("GT01: unknown dtype code " + std::to_string(code));
  if (bytes.size() < 6 + 4 * rank) throw IoError("GT01: truncated header");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_le<std::uint32_t>(bytes.data() + 6 + 4 * i);
    if (shape[i] == 0) throw IoError("GT01: zero extent");
  }
  const std::size_t elem = code == 0 ? 4 : 8;
  const std::size_t header = 6 + 4 * rank;
  if (bytes.size() != header + elem * numel(shape))
    throw IoError("GT01: payload length does not match shape " + to_string(shape));
  if (code == 0) return decode_payload<float>(shape, bytes.data() + header);
  return decode_payload<double>(shape, bytes.data() + header);
}

template <typename T>
void save_gt01(const std::filesystem::path& path, const Tensor<T>& t) {
  const auto bytes = encode_gt01(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

AnyTensor load_gt01_any(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_gt01(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

template <typename T>
Tensor<T> load_gt01(const std::filesystem::path& path) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, load_gt01_any(path));
}

DType dtype_of(const AnyTensor& t) { return t.index() == 0 ? DType::f32 : DType::f64; }

const Shape& shape_of(const AnyTensor& t) {
  return std::visit([](auto&& x) -> const Shape& { return x.shape(); }, t);
}

template std::vector<std::uint8_t> encode_gt01(const Tensor<float>&);
template std::vector<std::uint8_t> encode_gt01(const Tensor<double>&);
template void save_gt01(const std::filesystem::path&, const Tensor<float>&);
template void save_gt01(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_gt01(const std::filesystem::path&);
template Tensor<double> load_gt01(const std::filesystem::path&);

}  // namespace gk::nd
