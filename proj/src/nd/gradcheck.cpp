// SPDX-License-Identifier: Apache-2.0
#include "nd/gradcheck.hpp"

#include <cmath>

#include "nd/ops.hpp"

namespace gk::nd {

GradCheckResult check_gradients(const GradFn& fn, const std::vector<TensorD>& inputs, std::mt19937_64& rng,
                                double step) {
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.emplace_back(t, true);
  Var<double> out = fn(leaves);

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TensorD proj(out.shape());
  for (auto& v : proj.data()) v = u(rng);

  backward(sum(mul(out, Var<double>(proj))));

  auto objective = [&](const std::vector<TensorD>& xs) {
    NoGradGuard ng;
    std::vector<Var<double>> vs;
    for (const auto& t : xs) vs.emplace_back(t, false);
    const auto y = fn(vs).value();
    double acc = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += proj[i] * y[i];
    return acc;
  };

  GradCheckResult res;
  std::vector<TensorD> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const TensorD analytic = leaves[k].grad().empty() ? TensorD(inputs[k].shape()) : leaves[k].grad();
    for (std::size_t i = 0; i < xs[k].numel(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + step;
      const double fp = objective(xs);
      xs[k][i] = orig - step;
      const double fm = objective(xs);
      xs[k][i] = orig;
      const double numeric = (fp - fm) / (2 * step);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
      ++res.elements;
    }
  }
  return res;
}

}  // namespace gk::nd
