// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "nd/tensor.hpp"

namespace gk::nd {

// GT01 binary tensor container:
//   "GT01" | dtype u8 (0=f32, 1=f64) | rank u8 | rank x u32 LE extents | LE row-major payload
using AnyTensor = std::variant<TensorF, TensorD>;

template <typename T>
std::vector<std::uint8_t> encode_gt01(const Tensor<T>& t);
AnyTensor decode_gt01(std::span<const std::uint8_t> bytes);

template <typename T>
void save_gt01(const std::filesystem::path& path, const Tensor<T>& t);
AnyTensor load_gt01_any(const std::filesystem::path& path);

// Loads and converts to T when the stored dtype differs.
template <typename T>
Tensor<T> load_gt01(const std::filesystem::path& path);

DType dtype_of(const AnyTensor& t);
const Shape& shape_of(const AnyTensor& t);

}  // namespace gk::nd
