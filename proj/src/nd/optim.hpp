// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "nd/autograd.hpp"

namespace gk::nd {

// Named trainable parameters plus their momentum buffers.
template <typename T>
struct ParamSet {
  std::map<std::string, Var<T>> params;
  std::map<std::string, Tensor<T>> momentum;

  Var<T>& add(const std::string& name, Tensor<T> init);
  const Var<T>& at(const std::string& name) const;
  std::size_t count() const;  // total scalar parameters
};

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum * v + (g + wd * p);  p <- p - lr * v.
// Missing gradients count as zero; weight decay still applies.
template <typename T>
void sgd_step(ParamSet<T>& ps, const GradMap<T>& grads, const SgdOptions& opt);

// Learning rate after `step` completed steps: base * 0.1^(milestones passed).
double multistep_lr(double base_lr, const std::vector<long>& milestones, long step, double gamma = 0.1);

}  // namespace gk::nd
