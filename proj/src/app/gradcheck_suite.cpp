// SPDX-License-Identifier: Apache-2.0
#include "app/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "common/error.hpp"
#include "loss/objectives.hpp"
#include "nd/gradcheck.hpp"
#include "nd/ops.hpp"

namespace gk::app {
namespace {

using nd::Shape;
using nd::TensorD;
using V = nd::Var<double>;
using Rng = std::mt19937_64;

struct Case {
  std::vector<TensorD> inputs;
  nd::GradFn fn;
};
using CaseGen = std::function<Case(Rng&)>;

std::size_t dim(Rng& r, std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(r); }
double uni(Rng& r, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(r); }

TensorD rand_tensor(const Shape& s, Rng& r, double lo = -1.0, double hi = 1.0) {
  TensorD t(s);
  for (auto& v : t.data()) v = uni(r, lo, hi);
  return t;
}

Shape rand_shape(Rng& r, std::size_t min_rank, std::size_t max_rank, std::size_t max_dim = 4) {
  Shape s(dim(r, min_rank, max_rank));
  for (auto& e : s) e = dim(r, 1, max_dim);
  return s;
}

Case binary(Rng& r, V (*op)(const V&, const V&)) {
  const Shape s = rand_shape(r, 1, 3);
  return {{rand_tensor(s, r), rand_tensor(s, r)}, [op](const std::vector<V>& x) { return op(x[0], x[1]); }};
}

Case conv_case(Rng& r, bool two_d) {
  const std::size_t N = dim(r, 1, 2), Ci = dim(r, 1, 2), Co = dim(r, 1, 2);
  const std::size_t T = two_d ? 1 : dim(r, 1, 3), H = dim(r, 2, 4), W = dim(r, 2, 4);
  const std::size_t kt = two_d ? 1 : dim(r, 1, 3), kh = dim(r, 1, 3), kw = dim(r, 1, 3);
  nd::Conv3dOptions o;
  o.stride = {two_d ? 1 : dim(r, 1, 2), dim(r, 1, 2), dim(r, 1, 2)};
  o.pad = {two_d ? 0 : dim(r, 0, 1), dim(r, 0, 1), dim(r, 0, 1)};
  // keep every output extent positive
  if (T + 2 * o.pad[0] < kt) o.pad[0] = (kt - T + 1) / 2;
  if (H + 2 * o.pad[1] < kh) o.pad[1] = (kh - H + 1) / 2;
  if (W + 2 * o.pad[2] < kw) o.pad[2] = (kw - W + 1) / 2;
  const bool bias = r() & 1;
  std::vector<TensorD> in;
  if (two_d) {
    in = {rand_tensor({N, Ci, H, W}, r), rand_tensor({Co, Ci, kh, kw}, r)};
  } else {
    in = {rand_tensor({N, Ci, T, H, W}, r), rand_tensor({Co, Ci, kt, kh, kw}, r)};
  }
  if (bias) in.push_back(rand_tensor({Co}, r));
  return {in, [two_d, o](const std::vector<V>& x) {
            std::optional<V> b;
            if (x.size() == 3) b = x[2];
            if (two_d) return nd::conv2d(x[0], x[1], b, nd::Conv2dOptions{{o.stride[1], o.stride[2]}, {o.pad[1], o.pad[2]}});
            return nd::conv3d(x[0], x[1], b, o);
          }};
}

Case batch_norm_case(Rng& r, nd::NormMode mode) {
  const std::size_t N = dim(r, 2, 4), C = dim(r, 1, 3), L = dim(r, 1, 4);
  const bool beta = r() & 1;
  std::vector<TensorD> in{rand_tensor({N, C, L}, r), rand_tensor({C}, r, 0.5, 1.5)};
  if (beta) in.push_back(rand_tensor({C}, r));
  auto state = nd::BatchNormState<double>{rand_tensor({C}, r), rand_tensor({C}, r, 0.5, 2.0)};
  return {in, [mode, state](const std::vector<V>& x) {
            auto s = state;  // train mode updates a throwaway copy
            std::optional<V> b;
            if (x.size() == 3) b = x[2];
            return nd::batch_norm(x[0], x[1], b, s, mode);
          }};
}

// Values at least `gap` apart along `axis` and away from zero.
TensorD spaced_tensor(const Shape& s, Rng& r, std::size_t axis, double gap) {
  for (;;) {
    TensorD t = rand_tensor(s, r);
    const auto st = nd::strides_of(s);
    bool ok = true;
    for (std::size_t i = 0; i < t.numel() && ok; ++i)
      for (std::size_t k = 1; k < s[axis] && ok; ++k) {
        const std::size_t pos = (i / st[axis]) % s[axis];
        if (pos + k >= s[axis]) break;
        ok = std::abs(t[i] - t[i + k * st[axis]]) > gap;
      }
    if (ok) return t;
  }
}

std::vector<int> rand_labels(Rng& r, std::size_t n) {
  for (;;) {
    const int ids = static_cast<int>(dim(r, 2, 3));
    std::vector<int> l(n);
    for (auto& v : l) v = static_cast<int>(dim(r, 0, static_cast<std::size_t>(ids - 1)));
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) (l[i] == l[j] ? pos : neg) = true;
    if (pos && neg) return l;
  }
}

// Every hinge argument is at least 1e-3 away from zero and every pair distance above 0.05.
bool away_from_kinks(const TensorD& e, const std::vector<int>& l, const loss::TripletOptions& o) {
  const std::size_t N = e.dim(0), P = e.dim(1), D = e.dim(2);
  for (std::size_t p = 0; p < P; ++p) {
    std::vector<double> d(N * N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < D; ++k) {
          const double v = e[(i * P + p) * D + k] - e[(j * P + p) * D + k];
          s += v * v;
        }
        d[i * N + j] = std::sqrt(s);
        if (i != j && d[i * N + j] < 0.05) return false;
      }
    for (std::size_t a = 0; a < N; ++a)
      for (std::size_t b = 0; b < N; ++b)
        for (std::size_t c = 0; c < N; ++c)
          for (std::size_t q = 0; q < N; ++q) {
            if (a == b || c == q || l[a] != l[b] || l[c] == l[q]) continue;
            if (o.mining == loss::TripletMining::anchored && a != c) continue;
            if (std::abs(d[a * N + b] - d[c * N + q] + o.margin) < 1e-3) return false;
          }
  }
  return true;
}

Case triplet_case(Rng& r, loss::TripletMining mining) {
  loss::TripletOptions o;
  o.mining = mining;
  o.margin = uni(r, 0.1, 0.5);
  for (;;) {
    const std::size_t N = dim(r, 4, 6), P = dim(r, 1, 2), D = dim(r, 2, 3);
    const auto labels = rand_labels(r, N);
    TensorD e = rand_tensor({N, P, D}, r);
    if (!away_from_kinks(e, labels, o)) continue;
    return {{e}, [labels, o](const std::vector<V>& x) { return loss::triplet_loss(x[0], labels, o).loss; }};
  }
}

Case ce_case(Rng& r, loss::CeKind kind) {
  const std::size_t N = dim(r, 1, 4), P = dim(r, 1, 2), Y = dim(r, 2, 5);
  std::vector<int> labels(N);
  for (auto& v : labels) v = static_cast<int>(dim(r, 0, Y - 1));
  loss::CeOptions o;
  o.kind = kind;
  o.epsilon = uni(r, 0.0, 0.3);
  return {{rand_tensor({N, P, Y}, r, -2, 2)},
          [labels, o](const std::vector<V>& x) { return loss::smoothed_ce(x[0], labels, o); }};
}

std::vector<std::pair<std::string, CaseGen>> registry() {
  std::vector<std::pair<std::string, CaseGen>> g;
  g.emplace_back("add", [](Rng& r) { return binary(r, &nd::add<double>); });
  g.emplace_back("sub", [](Rng& r) { return binary(r, &nd::sub<double>); });
  g.emplace_back("mul", [](Rng& r) { return binary(r, &nd::mul<double>); });
  g.emplace_back("scale", [](Rng& r) {
    const double s = uni(r, -2, 2);
    return Case{{rand_tensor(rand_shape(r, 1, 3), r)}, [s](const std::vector<V>& x) { return nd::scale(x[0], s); }};
  });
  g.emplace_back("bias_add", [](Rng& r) {
    Shape s = rand_shape(r, 2, 4);
    return Case{{rand_tensor(s, r), rand_tensor({s[1]}, r)},
                [](const std::vector<V>& x) { return nd::bias_add(x[0], x[1]); }};
  });
  g.emplace_back("conv3d", [](Rng& r) { return conv_case(r, false); });
  g.emplace_back("conv3d[2d]", [](Rng& r) { return conv_case(r, true); });
  g.emplace_back("batch_norm[train]", [](Rng& r) { return batch_norm_case(r, nd::NormMode::train); });
  g.emplace_back("batch_norm[eval]", [](Rng& r) { return batch_norm_case(r, nd::NormMode::eval); });
  g.emplace_back("relu", [](Rng& r) {
    TensorD t = rand_tensor(rand_shape(r, 1, 3), r);
    for (auto& v : t.data()) v = (v < 0 ? -0.05 : 0.05) + v;  // |v| >= 0.05, away from the kink
    return Case{{t}, [](const std::vector<V>& x) { return nd::relu(x[0]); }};
  });
  g.emplace_back("linear", [](Rng& r) {
    const std::size_t n = dim(r, 1, 4), di = dim(r, 1, 4), dout = dim(r, 1, 4);
    std::vector<TensorD> in{rand_tensor({n, di}, r), rand_tensor({dout, di}, r)};
    if (r() & 1) in.push_back(rand_tensor({dout}, r));
    return Case{in, [](const std::vector<V>& x) {
                  std::optional<V> b;
                  if (x.size() == 3) b = x[2];
                  return nd::linear(x[0], x[1], b);
                }};
  });
  g.emplace_back("bmm", [](Rng& r) {
    const std::size_t B = dim(r, 1, 3), n = dim(r, 1, 3), k = dim(r, 1, 3), m = dim(r, 1, 3);
    return Case{{rand_tensor({B, n, k}, r), rand_tensor({B, k, m}, r)},
                [](const std::vector<V>& x) { return nd::bmm(x[0], x[1]); }};
  });
  g.emplace_back("softmax", [](Rng& r) {
    const Shape s = rand_shape(r, 1, 3);
    const std::size_t axis = dim(r, 0, s.size() - 1);
    return Case{{rand_tensor(s, r, -2, 2)}, [axis](const std::vector<V>& x) { return nd::softmax(x[0], axis); }};
  });
  g.emplace_back("reduce_max", [](Rng& r) {
    const Shape s = rand_shape(r, 1, 3);
    const std::size_t axis = dim(r, 0, s.size() - 1);
    return Case{{spaced_tensor(s, r, axis, 1e-3)},
                [axis](const std::vector<V>& x) { return nd::reduce_max(x[0], axis); }};
  });
  g.emplace_back("reduce_mean", [](Rng& r) {
    const Shape s = rand_shape(r, 1, 3);
    const std::size_t axis = dim(r, 0, s.size() - 1);
    return Case{{rand_tensor(s, r)}, [axis](const std::vector<V>& x) { return nd::reduce_mean(x[0], axis); }};
  });
  g.emplace_back("reduce_sum", [](Rng& r) {
    const Shape s = rand_shape(r, 1, 3);
    const std::size_t axis = dim(r, 0, s.size() - 1);
    return Case{{rand_tensor(s, r)}, [axis](const std::vector<V>& x) { return nd::reduce_sum(x[0], axis); }};
  });
  g.emplace_back("sum", [](Rng& r) {
    return Case{{rand_tensor(rand_shape(r, 0, 3), r)}, [](const std::vector<V>& x) { return nd::sum(x[0]); }};
  });
  g.emplace_back("reshape", [](Rng& r) {
    const Shape s = rand_shape(r, 1, 3);
    const Shape flat{nd::numel(s)};
    return Case{{rand_tensor(s, r)}, [flat](const std::vector<V>& x) { return nd::reshape(x[0], flat); }};
  });
  g.emplace_back("permute", [](Rng& r) {
    const Shape s = rand_shape(r, 1, 4);
    std::vector<std::size_t> perm(s.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i-- > 1;) std::swap(perm[i], perm[dim(r, 0, i)]);
    return Case{{rand_tensor(s, r)}, [perm](const std::vector<V>& x) { return nd::permute(x[0], perm); }};
  });
  g.emplace_back("concat", [](Rng& r) {
    Shape a = rand_shape(r, 1, 3);
    const std::size_t axis = dim(r, 0, a.size() - 1);
    Shape b = a;
    b[axis] = dim(r, 1, 3);
    return Case{{rand_tensor(a, r), rand_tensor(b, r)},
                [axis](const std::vector<V>& x) { return nd::concat<double>({x[0], x[1]}, axis); }};
  });
  g.emplace_back("slice", [](Rng& r) {
    Shape s = rand_shape(r, 1, 3);
    const std::size_t axis = dim(r, 0, s.size() - 1);
    s[axis] = dim(r, 2, 5);
    const std::size_t b = dim(r, 0, s[axis] - 1), e = dim(r, b + 1, s[axis]);
    return Case{{rand_tensor(s, r)}, [axis, b, e](const std::vector<V>& x) { return nd::slice(x[0], axis, b, e); }};
  });
  g.emplace_back("triplet_loss[unanchored]", [](Rng& r) { return triplet_case(r, loss::TripletMining::unanchored); });
  g.emplace_back("triplet_loss[anchored]", [](Rng& r) { return triplet_case(r, loss::TripletMining::anchored); });
  g.emplace_back("smoothed_ce[per_class]", [](Rng& r) { return ce_case(r, loss::CeKind::per_class); });
  g.emplace_back("smoothed_ce[conventional]", [](Rng& r) { return ce_case(r, loss::CeKind::conventional); });
  return g;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> n;
  for (const auto& [name, _] : registry()) n.push_back(name);
  return n;
}

std::vector<OpCheck> run_gradcheck_suite(const GradSuiteOptions& opt) {
  std::vector<OpCheck> out;
  const auto reg = registry();
  if (opt.only && std::none_of(reg.begin(), reg.end(), [&](const auto& e) { return e.first == *opt.only; }))
    throw ArgumentError("unknown gradient check '" + *opt.only + "'");
  for (std::size_t k = 0; k < reg.size(); ++k) {
    const auto& [name, gen] = reg[k];
    if (opt.only && *opt.only != name) continue;
    Rng rng(opt.seed * 1000003u + k);
    OpCheck c{name, 0, 0, 0.0, false};
    for (std::size_t i = 0; i < opt.cases; ++i) {
      const Case cs = gen(rng);
      const auto res = nd::check_gradients(cs.fn, cs.inputs, rng);
      const double e = std::isnan(res.max_rel_error) ? HUGE_VAL : res.max_rel_error;
      c.max_rel_error = std::max(c.max_rel_error, e);
      c.elements += res.elements;
      ++c.cases;
    }
    c.passed = c.max_rel_error <= opt.tolerance;
    out.push_back(c);
  }
  return out;
}

}  // namespace gk::app
