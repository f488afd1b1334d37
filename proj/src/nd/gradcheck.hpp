// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <random>
#include <vector>

#include "nd/autograd.hpp"

namespace gk::nd {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t elements = 0;
};

using GradFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

// Compares reverse-mode gradients of <R, fn(inputs)> (R a fixed random
// projection) with central finite differences. The numeric side only ever
// evaluates forward values, so it is independent of every backward rule.
// Relative error per element is |a - n| / max(|a|, |n|, 1e-3).
GradCheckResult check_gradients(const GradFn& fn, const std::vector<TensorD>& inputs, std::mt19937_64& rng,
                                double step = 1e-5);

}  // namespace gk::nd
