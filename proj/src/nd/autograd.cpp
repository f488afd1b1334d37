// SPDX-License-Identifier: Apache-2.0
#include "nd/autograd.hpp"

#include <array>
#include <unordered_set>
#include <utility>

namespace gk::nd {
namespace {

constexpr std::array<std::pair<OpId, std::string_view>, 22> kOpNames{{
    {OpId::leaf, "leaf"},
    {OpId::add, "add"},
    {OpId::sub, "sub"},
    {OpId::mul, "mul"},
    {OpId::scale, "scale"},
    {OpId::bias_add, "bias_add"},
    {OpId::conv3d, "conv3d"},
    {OpId::batch_norm, "batch_norm"},
    {OpId::relu, "relu"},
    {OpId::linear, "linear"},
    {OpId::bmm, "bmm"},
    {OpId::softmax, "softmax"},
    {OpId::reduce_max, "reduce_max"},
    {OpId::reduce_mean, "reduce_mean"},
    {OpId::reduce_sum, "reduce_sum"},
    {OpId::sum_all, "sum"},
    {OpId::reshape, "reshape"},
    {OpId::permute, "permute"},
    {OpId::concat, "concat"},
    {OpId::slice, "slice"},
    {OpId::triplet_loss, "triplet_loss"},
    {OpId::smoothed_ce, "smoothed_ce"},
}};

thread_local bool g_grad_enabled = true;

struct Perturbation {
  std::optional<OpId> op;
  double factor = 1.0;
};
Perturbation g_perturb;

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  // Iterative post-order DFS; deep residual stacks would overflow recursion.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

template <typename T>
void run_backward(const Var<T>& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined loss");
  const auto& v = loss.value();
  if (v.numel() != 1) throw ContractError("backward: loss must be scalar, got shape " + to_string(v.shape()));
  if (!v.all_finite()) throw ContractError("backward: loss is not finite");
  Node<T>* root = loss.node().get();
  if (!root->requires_grad) return;

  auto order = topo_order(root);
  root->grad = Tensor<T>(v.shape(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    if (g_perturb.op && *g_perturb.op == n->op) n->grad *= static_cast<T>(g_perturb.factor);
    n->backward(*n);
    n->grad = Tensor<T>();  // interior gradients are no longer needed
  }
}

}  // namespace

std::string_view op_name(OpId op) {
  for (auto& [id, name] : kOpNames)
    if (id == op) return name;
  return "unknown";
}

std::optional<OpId> op_from_name(std::string_view name) {
  for (auto& [id, n] : kOpNames)
    if (n == name) return id;
  return std::nullopt;
}

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <typename T>
Var<T> Var<T>::parameter(std::string name, Tensor<T> value) {
  Var v(std::move(value), true);
  v.node_->name = std::move(name);
  return v;
}

template <typename T>
Var<T> make_result(OpId op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->value = std::move(value);
  bool any = false;
  for (auto& in : inputs) any = any || in.requires_grad();
  if (g_grad_enabled && any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void accumulate(Node<T>& n, const Tensor<T>& g) {
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

template <typename T>
void accumulate(Node<T>& n, Tensor<T>&& g) {
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = std::move(g);
  } else {
    n.grad += g;
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

template <typename T>
GradMap<T> backward(const Var<T>& loss) {
  run_backward(loss);
  GradMap<T> grads;
  if (!loss.requires_grad()) return grads;
  for (Node<T>* n : topo_order(loss.node().get())) {
    if (n->op == OpId::leaf && !n->name.empty() && !n->grad.empty()) grads[n->name] = std::move(n->grad);
    if (n->op == OpId::leaf && !n->name.empty()) n->grad = Tensor<T>();
  }
  return grads;
}

template <typename T>
GradMap<T> backward(const Var<T>& loss, const std::map<std::string, Var<T>>& params) {
  GradMap<T> grads = backward(loss);
  for (const auto& [name, p] : params)
    if (!grads.count(name)) grads[name] = Tensor<T>(p.shape());
  return grads;
}

namespace debug {
void set_backward_perturbation(std::optional<OpId> op, double factor) { g_perturb = {op, factor}; }
}  // namespace debug

#define GK_INSTANTIATE(T)                                                                               \
  template class Var<T>;                                                                                \
  template Var<T> make_result(OpId, Tensor<T>, std::vector<Var<T>>, std::function<void(Node<T>&)>); \
  template void accumulate(Node<T>&, const Tensor<T>&);                                                \
  template void accumulate(Node<T>&, Tensor<T>&&);                                                     \
  template GradMap<T> backward(const Var<T>&);                                                          \
  template GradMap<T> backward(const Var<T>&, const std::map<std::string, Var<T>>&);

GK_INSTANTIATE(float)
GK_INSTANTIATE(double)
#undef GK_INSTANTIATE

}  // namespace gk::nd
