// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "nd/autograd.hpp"

namespace gk::nd {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);

// x: [N, C, ...], b: [C]. The only broadcast the engine supports.
template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b);

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};
struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> pad{0, 0};
};

// Cross-correlation with zero padding.
// x: [N, Cin, T, H, W], w: [Cout, Cin, kt, kh, kw] -> [N, Cout, T', H', W']
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias, const Conv3dOptions& opt);
// x: [N, Cin, H, W], w: [Cout, Cin, kh, kw] -> [N, Cout, H', W']
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias, const Conv2dOptions& opt);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  static BatchNormState fresh(std::size_t channels) {
    return {Tensor<T>(Shape{channels}, T(0)), Tensor<T>(Shape{channels}, T(1))};
  }
};

enum class NormMode { train, eval };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;  // weight of the new batch statistic in the running average
};

// Normalizes x: [N, C, ...] per channel. In train mode uses biased batch
// statistics and updates `state` in place (unbiased variance, as usual).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const std::optional<Var<T>>& beta,
                  BatchNormState<T>& state, NormMode mode, const BatchNormOptions& opt = {});

template <typename T>
Var<T> relu(const Var<T>& x);

// x: [n, din], w: [dout, din] -> [n, dout]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias);

// a: [B, n, k], b: [B, k, m] -> [B, n, m]
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

// Reductions drop the reduced axis. reduce_max routes gradient to the first maximum.
template <typename T>
Var<T> reduce_max(const Var<T>& x, std::size_t axis);
template <typename T>
Var<T> reduce_mean(const Var<T>& x, std::size_t axis);
template <typename T>
Var<T> reduce_sum(const Var<T>& x, std::size_t axis);
template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end);

// Non-differentiable helpers shared by ops and callers.
template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <typename T>
Tensor<T> softmax_tensor(const Tensor<T>& x, std::size_t axis);

}  // namespace gk::nd
