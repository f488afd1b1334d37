// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nd/tensor.hpp"

namespace gk::nd {

enum class OpId : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  scale,
  bias_add,
  conv3d,
  batch_norm,
  relu,
  linear,
  bmm,
  softmax,
  reduce_max,
  reduce_mean,
  reduce_sum,
  sum_all,
  reshape,
  permute,
  concat,
  slice,
  triplet_loss,
  smoothed_ce,
};

std::string_view op_name(OpId op);
std::optional<OpId> op_from_name(std::string_view name);

template <typename T>
struct Node {
  OpId op = OpId::leaf;
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::string name;  // set on named parameters only
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `self.grad` and accumulates into `self.inputs[i]->grad`.
  std::function<void(Node& self)> backward;
};

// Handle onto a tape node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var parameter(std::string name, Tensor<T> value);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  // In-place access for optimizers and loaders; never use on interior nodes.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  OpId op() const { return node_->op; }
  // Gradient accumulated by the last backward pass (empty if none reached it).
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Records a new node. When gradients are disabled or no input requires them,
// the backward rule and input references are dropped.
template <typename T>
Var<T> make_result(OpId op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward);

// Adds `g` into the node's gradient buffer if the node requires a gradient.
template <typename T>
void accumulate(Node<T>& n, const Tensor<T>& g);
template <typename T>
void accumulate(Node<T>& n, Tensor<T>&& g);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Reverse pass from a scalar, finite loss. Returns the gradients of every
// named parameter reached; those buffers are moved out so the next pass starts
// clean. Unnamed leaves keep their gradient on the node.
template <typename T>
GradMap<T> backward(const Var<T>& loss);

// Same as above, but reports every parameter in `params` and fills zero
// gradients for the ones the loss does not depend on.
template <typename T>
GradMap<T> backward(const Var<T>& loss, const std::map<std::string, Var<T>>& params);

namespace debug {
// Test-harness hook: scales the upstream gradient of every node of `op` by
// `factor` before its backward rule runs. Pass nullopt to disable.
void set_backward_perturbation(std::optional<OpId> op, double factor = 1.0);
}  // namespace debug

}  // namespace gk::nd
