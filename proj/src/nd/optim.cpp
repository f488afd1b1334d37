// SPDX-License-Identifier: Apache-2.0
#include "nd/optim.hpp"

namespace gk::nd {

template <typename T>
Var<T>& ParamSet<T>::add(const std::string& name, Tensor<T> init) {
  if (params.count(name)) throw ArgumentError("duplicate parameter name: " + name);
  momentum[name] = Tensor<T>(init.shape());
  return params[name] = Var<T>::parameter(name, std::move(init));
}

template <typename T>
const Var<T>& ParamSet<T>::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ArgumentError("unknown parameter: " + name);
  return it->second;
}

template <typename T>
std::size_t ParamSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params) n += p.value().numel();
  return n;
}

template <typename T>
void sgd_step(ParamSet<T>& ps, const GradMap<T>& grads, const SgdOptions& opt) {
  const T lr = static_cast<T>(opt.lr), mom = static_cast<T>(opt.momentum), wd = static_cast<T>(opt.weight_decay);
  for (auto& [name, p] : ps.params) {
    auto& v = ps.momentum.at(name);
    auto& pv = p.mutable_value();
    if (v.shape() != pv.shape()) throw ShapeError("momentum buffer shape differs for " + name);
    auto git = grads.find(name);
    const Tensor<T>* g = git == grads.end() ? nullptr : &git->second;
    if (g && g->shape() != pv.shape()) throw ShapeError("gradient shape differs for " + name);
    for (std::size_t i = 0; i < pv.numel(); ++i) {
      const T gi = (g ? (*g)[i] : T(0)) + wd * pv[i];
      v[i] = mom * v[i] + gi;
      pv[i] -= lr * v[i];
    }
  }
}

double multistep_lr(double base_lr, const std::vector<long>& milestones, long step, double gamma) {
  double lr = base_lr;
  for (long m : milestones)
    if (step >= m) lr *= gamma;
  return lr;
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template void sgd_step(ParamSet<float>&, const GradMap<float>&, const SgdOptions&);
template void sgd_step(ParamSet<double>&, const GradMap<double>&, const SgdOptions&);

}  // namespace gk::nd
