// SPDX-License-Identifier: Apache-2.0
#include "nd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace gk::nd {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out = s;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// ---------------------------------------------------------------- convolution

struct ConvGeom {
  std::size_t n, ci, ti, hi, wi;
  std::size_t co, kt, kh, kw;
  std::size_t st, sh, sw, pt, ph, pw;
  std::size_t to, ho, wo;
  std::size_t k() const { return ci * kt * kh * kw; }
  std::size_t p() const { return to * ho * wo; }
  bool pointwise() const {
    return kt == 1 && kh == 1 && kw == 1 && st == 1 && sh == 1 && sw == 1 && pt == 0 && ph == 0 && pw == 0;
  }
};

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* axis) {
  if (s == 0) throw ArgumentError(std::string("conv: zero stride on ") + axis);
  if (k > in + 2 * p) throw ShapeError(std::string("conv: kernel larger than padded input on ") + axis);
  return (in + 2 * p - k) / s + 1;
}

ConvGeom conv_geom(const Shape& x, const Shape& w, const Conv3dOptions& o) {
  if (x.size() != 5) throw ShapeError("conv3d: input must be [N,C,T,H,W], got " + to_string(x));
  if (w.size() != 5) throw ShapeError("conv3d: weight must be [Cout,Cin,kt,kh,kw], got " + to_string(w));
  if (x[1] != w[1])
    throw ShapeError("conv3d: input has " + std::to_string(x[1]) + " channels, weight expects " +
                     std::to_string(w[1]));
  ConvGeom g{x[0], x[1], x[2], x[3], x[4], w[0], w[2], w[3], w[4],
             o.stride[0], o.stride[1], o.stride[2], o.pad[0], o.pad[1], o.pad[2], 0, 0, 0};
  g.to = out_extent(g.ti, g.kt, g.st, g.pt, "T");
  g.ho = out_extent(g.hi, g.kh, g.sh, g.ph, "H");
  g.wo = out_extent(g.wi, g.kw, g.sw, g.pw, "W");
  return g;
}

// Valid output range [lo, hi) along one axis for kernel offset d.
inline void valid_range(std::size_t out, std::size_t in, std::size_t s, std::size_t d, std::size_t p,
                        std::size_t& lo, std::size_t& hi) {
  // need 0 <= o*s + d - p < in
  lo = d >= p ? 0 : (p - d + s - 1) / s;
  const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in) - 1 - static_cast<std::ptrdiff_t>(d) +
                             static_cast<std::ptrdiff_t>(p);
  hi = top < 0 ? 0 : std::min(out, static_cast<std::size_t>(top) / s + 1);
  if (lo > hi) lo = hi;
}

// Scatter = false: col <- patches(x), zero where the kernel hits padding.
// Scatter = true: x += scatter(col).
template <bool Scatter, typename T>
void im2col_impl(std::conditional_t<Scatter, T*, const T*> x, const ConvGeom& g,
                 std::conditional_t<Scatter, const T*, T*> col) {
  const std::size_t P = g.p(), HWo = g.ho * g.wo;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.ci; ++c)
    for (std::size_t dt = 0; dt < g.kt; ++dt) {
      std::size_t tlo, thi;
      valid_range(g.to, g.ti, g.st, dt, g.pt, tlo, thi);
      for (std::size_t dh = 0; dh < g.kh; ++dh) {
        std::size_t hlo, hhi;
        valid_range(g.ho, g.hi, g.sh, dh, g.ph, hlo, hhi);
        for (std::size_t dw = 0; dw < g.kw; ++dw, ++row) {
          std::size_t wlo, whi;
          valid_range(g.wo, g.wi, g.sw, dw, g.pw, wlo, whi);
          auto r = col + row * P;
          for (std::size_t t = 0; t < g.to; ++t) {
            const bool t_ok = t >= tlo && t < thi;
            const std::size_t it = t * g.st + dt - g.pt;
            for (std::size_t h = 0; h < g.ho; ++h) {
              auto dst = r + t * HWo + h * g.wo;
              if (!t_ok || h < hlo || h >= hhi) {
                if constexpr (!Scatter) std::fill(dst, dst + g.wo, T(0));
                continue;
              }
              const std::size_t ih = h * g.sh + dh - g.ph;
              auto src = x + ((c * g.ti + it) * g.hi + ih) * g.wi;
              if constexpr (!Scatter) {
                std::fill(dst, dst + wlo, T(0));
                std::fill(dst + whi, dst + g.wo, T(0));
              }
              if (g.sw == 1) {
                const std::size_t off = wlo + dw - g.pw;
                for (std::size_t w = wlo; w < whi; ++w) {
                  if constexpr (Scatter) {
                    src[w - wlo + off] += dst[w];
                  } else {
                    dst[w] = src[w - wlo + off];
                  }
                }
              } else {
                for (std::size_t w = wlo; w < whi; ++w) {
                  const std::size_t iw = w * g.sw + dw - g.pw;
                  if constexpr (Scatter) {
                    src[iw] += dst[w];
                  } else {
                    dst[w] = src[iw];
                  }
                }
              }
            }
          }
        }
      }
    }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(OpId::add, std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  return make_result<T>(OpId::sub, std::move(out), {a, b}, [](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad);
    Tensor<T> g = self.grad;
    g *= T(-1);
    accumulate(*self.inputs[1], std::move(g));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  return make_result<T>(OpId::mul, std::move(out), {a, b}, [](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    if (A.requires_grad) {
      Tensor<T> g = self.grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= B.value[i];
      accumulate(A, std::move(g));
    }
    if (B.requires_grad) {
      Tensor<T> g = self.grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= A.value[i];
      accumulate(B, std::move(g));
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  out *= s;
  return make_result<T>(OpId::scale, std::move(out), {a}, [s](Node<T>& self) {
    Tensor<T> g = self.grad;
    g *= s;
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> bias_add(const Var<T>& x, const Var<T>& b) {
  if (x.shape().size() < 2 || b.shape().size() != 1 || b.shape()[0] != x.shape()[1])
    throw ShapeError("bias_add: bias " + to_string(b.shape()) + " does not match channels of " +
                     to_string(x.shape()));
  const auto sp = split_at(x.shape(), 1);
  Tensor<T> out = x.value();
  const auto bv = b.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < sp.n; ++c) {
      T* p = out.ptr() + (o * sp.n + c) * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) p[i] += bv[c];
    }
  return make_result<T>(OpId::bias_add, std::move(out), {x, b}, [sp](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor<T> gb(Shape{sp.n});
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t c = 0; c < sp.n; ++c) {
          const T* p = self.grad.ptr() + (o * sp.n + c) * sp.inner;
          T acc = 0;
          for (std::size_t i = 0; i < sp.inner; ++i) acc += p[i];
          gb[c] += acc;
        }
      accumulate(*self.inputs[1], std::move(gb));
    }
  });
}

// ---------------------------------------------------------------- conv

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias, const Conv3dOptions& opt) {
  const ConvGeom g = conv_geom(x.shape(), w.shape(), opt);
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != g.co))
    throw ShapeError("conv3d: bias must have length Cout");
  const std::size_t K = g.k(), P = g.p();
  const std::size_t in_sz = g.ci * g.ti * g.hi * g.wi;
  Tensor<T> out(Shape{g.n, g.co, g.to, g.ho, g.wo});
  CMapR<T> W(w.value().ptr(), static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(K));
  std::unique_ptr<T[]> col(g.pointwise() ? nullptr : new T[K * P]);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.value().ptr() + n * in_sz;
    const T* cp = xn;
    if (!g.pointwise()) {
      im2col_impl<false, T>(xn, g, col.get());
      cp = col.get();
    }
    MapR<T> Y(out.ptr() + n * g.co * P, static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(P));
    Y.noalias() = W * CMapR<T>(cp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    if (bias) {
      const auto bv = bias->value().data();
      for (std::size_t c = 0; c < g.co; ++c) Y.row(static_cast<Eigen::Index>(c)).array() += bv[c];
    }
  }
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(OpId::conv3d, std::move(out), std::move(inputs), [g, in_sz](Node<T>& self) {
    auto& X = *self.inputs[0];
    auto& Wn = *self.inputs[1];
    const std::size_t K = g.k(), P = g.p();
    const auto Ke = static_cast<Eigen::Index>(K), Pe = static_cast<Eigen::Index>(P),
               Coe = static_cast<Eigen::Index>(g.co);
    CMapR<T> W(Wn.value.ptr(), Coe, Ke);
    Tensor<T> dx = X.requires_grad ? Tensor<T>(X.value.shape()) : Tensor<T>();
    Tensor<T> dw = Wn.requires_grad ? Tensor<T>(Wn.value.shape()) : Tensor<T>();
    std::unique_ptr<T[]> col(g.pointwise() ? nullptr : new T[K * P]);
    std::unique_ptr<T[]> dcol(g.pointwise() || !X.requires_grad ? nullptr : new T[K * P]);
    for (std::size_t n = 0; n < g.n; ++n) {
      CMapR<T> dY(self.grad.ptr() + n * g.co * P, Coe, Pe);
      const T* xn = X.value.ptr() + n * in_sz;
      if (Wn.requires_grad) {
        const T* cp = xn;
        if (!g.pointwise()) {
          im2col_impl<false, T>(xn, g, col.get());
          cp = col.get();
        }
        MapR<T>(dw.ptr(), Coe, Ke).noalias() += dY * CMapR<T>(cp, Ke, Pe).transpose();
      }
      if (X.requires_grad) {
        if (g.pointwise()) {
          MapR<T>(dx.ptr() + n * in_sz, Ke, Pe).noalias() = W.transpose() * dY;
        } else {
          MapR<T>(dcol.get(), Ke, Pe).noalias() = W.transpose() * dY;
          im2col_impl<true, T>(dx.ptr() + n * in_sz, g, dcol.get());
        }
      }
    }
    if (X.requires_grad) accumulate(X, std::move(dx));
    if (Wn.requires_grad) accumulate(Wn, std::move(dw));
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor<T> db(Shape{g.co});
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t c = 0; c < g.co; ++c) {
          const T* p = self.grad.ptr() + (n * g.co + c) * P;
          T acc = 0;
          for (std::size_t i = 0; i < P; ++i) acc += p[i];
          db[c] += acc;
        }
      accumulate(*self.inputs[2], std::move(db));
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias, const Conv2dOptions& opt) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + to_string(xs));
  if (ws.size() != 4) throw ShapeError("conv2d: weight must be [Cout,Cin,kh,kw], got " + to_string(ws));
  auto x5 = reshape(x, Shape{xs[0], xs[1], 1, xs[2], xs[3]});
  auto w5 = reshape(w, Shape{ws[0], ws[1], 1, ws[2], ws[3]});
  Conv3dOptions o;
  o.stride = {1, opt.stride[0], opt.stride[1]};
  o.pad = {0, opt.pad[0], opt.pad[1]};
  auto y = conv3d(x5, w5, bias, o);
  const auto& ys = y.shape();
  return reshape(y, Shape{ys[0], ys[1], ys[3], ys[4]});
}

// ---------------------------------------------------------------- batch norm

namespace {

// Fixed-lane double accumulation so the reductions vectorize without reassociation.
constexpr std::size_t kLanes = 8;

template <typename T>
double lane_sum(const T* p, std::size_t n) {
  double a[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) a[l] += static_cast<double>(p[i + l]);
  double s = 0;
  for (; i < n; ++i) s += static_cast<double>(p[i]);
  for (double v : a) s += v;
  return s;
}

template <typename T>
double lane_sq_dev(const T* p, std::size_t n, double mu) {
  double a[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double d = static_cast<double>(p[i + l]) - mu;
      a[l] += d * d;
    }
  double s = 0;
  for (; i < n; ++i) s += (static_cast<double>(p[i]) - mu) * (static_cast<double>(p[i]) - mu);
  for (double v : a) s += v;
  return s;
}

template <typename T>
double lane_dot(const T* p, const T* q, std::size_t n) {
  double a[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) a[l] += static_cast<double>(p[i + l]) * static_cast<double>(q[i + l]);
  double s = 0;
  for (; i < n; ++i) s += static_cast<double>(p[i]) * static_cast<double>(q[i]);
  for (double v : a) s += v;
  return s;
}

}  // namespace

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const std::optional<Var<T>>& beta,
                  BatchNormState<T>& state, NormMode mode, const BatchNormOptions& opt) {
  if (!(opt.eps > 0)) throw ArgumentError("batch_norm: eps must be positive");
  if (x.shape().size() < 2) throw ShapeError("batch_norm: input must be [N, C, ...]");
  const auto sp = split_at(x.shape(), 1);
  const std::size_t C = sp.n, M = sp.outer * sp.inner;
  if (gamma.shape() != Shape{C} || (beta && beta->shape() != Shape{C}))
    throw ShapeError("batch_norm: gamma/beta must have length " + std::to_string(C));
  if (state.running_mean.shape() != Shape{C} || state.running_var.shape() != Shape{C})
    throw ShapeError("batch_norm: running statistics have the wrong length");
  if (mode == NormMode::train && M < 2) throw ContractError("batch_norm: train mode needs more than one value per channel");

  const auto& xv = x.value();
  std::vector<double> mean(C), invstd(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (mode == NormMode::train) {
      double s = 0;
      for (std::size_t o = 0; o < sp.outer; ++o) s += lane_sum(xv.ptr() + (o * C + c) * sp.inner, sp.inner);
      const double mu = s / static_cast<double>(M);
      double v = 0;
      for (std::size_t o = 0; o < sp.outer; ++o) v += lane_sq_dev(xv.ptr() + (o * C + c) * sp.inner, sp.inner, mu);
      const double var = v / static_cast<double>(M);
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + opt.eps);
      const double unbiased = v / static_cast<double>(M - 1);
      state.running_mean[c] = static_cast<T>((1 - opt.momentum) * state.running_mean[c] + opt.momentum * mu);
      state.running_var[c] = static_cast<T>((1 - opt.momentum) * state.running_var[c] + opt.momentum * unbiased);
    } else {
      mean[c] = state.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + opt.eps);
    }
  }

  Tensor<T> xhat(xv.shape());
  Tensor<T> out(xv.shape());
  const auto gv = gamma.value().data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t off = (o * C + c) * sp.inner;
      const T b = beta ? beta->value()[c] : T(0);
      const T mu = static_cast<T>(mean[c]), is = static_cast<T>(invstd[c]), gc = gv[c];
      const T* xp = xv.ptr() + off;
      T* hp = xhat.ptr() + off;
      T* op = out.ptr() + off;
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const T h = (xp[i] - mu) * is;
        hp[i] = h;
        op[i] = gc * h + b;
      }
    }

  std::vector<Var<T>> inputs{x, gamma};
  if (beta) inputs.push_back(*beta);
  const bool train = mode == NormMode::train;
  return make_result<T>(
      OpId::batch_norm, std::move(out), std::move(inputs),
      [sp, C, M, train, invstd = std::move(invstd), xhat = std::move(xhat)](Node<T>& self) {
        const auto& dy = self.grad;
        const auto gv = self.inputs[1]->value.data();
        std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (o * C + c) * sp.inner;
            sum_dy[c] += lane_sum(dy.ptr() + off, sp.inner);
            sum_dy_xhat[c] += lane_dot(dy.ptr() + off, xhat.ptr() + off, sp.inner);
          }
        if (self.inputs[0]->requires_grad) {
          Tensor<T> dx(dy.shape());
          const double m = static_cast<double>(M);
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t off = (o * C + c) * sp.inner;
              const T k = static_cast<T>(gv[c] * invstd[c]);
              const T a = train ? static_cast<T>(sum_dy[c] / m) : T(0);
              const T b = train ? static_cast<T>(sum_dy_xhat[c] / m) : T(0);
              const T* dp = dy.ptr() + off;
              const T* hp = xhat.ptr() + off;
              T* out = dx.ptr() + off;
              for (std::size_t i = 0; i < sp.inner; ++i) out[i] = k * (dp[i] - a - hp[i] * b);
            }
          accumulate(*self.inputs[0], std::move(dx));
        }
        if (self.inputs[1]->requires_grad) {
          Tensor<T> dg(Shape{C});
          for (std::size_t c = 0; c < C; ++c) dg[c] = static_cast<T>(sum_dy_xhat[c]);
          accumulate(*self.inputs[1], std::move(dg));
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          Tensor<T> db(Shape{C});
          for (std::size_t c = 0; c < C; ++c) db[c] = static_cast<T>(sum_dy[c]);
          accumulate(*self.inputs[2], std::move(db));
        }
      });
}

// ---------------------------------------------------------------- relu / linear / bmm

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return make_result<T>(OpId::relu, std::move(out), {x}, [](Node<T>& self) {
    Tensor<T> g = self.grad;
    const auto& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (!(xv[i] > T(0))) g[i] = T(0);
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
    throw ShapeError("linear: x " + to_string(xs) + " incompatible with W " + to_string(ws));
  if (bias && bias->shape() != Shape{ws[0]}) throw ShapeError("linear: bias must have length dout");
  const auto n = static_cast<Eigen::Index>(xs[0]), din = static_cast<Eigen::Index>(xs[1]),
             dout = static_cast<Eigen::Index>(ws[0]);
  Tensor<T> out(Shape{xs[0], ws[0]});
  MapR<T> Y(out.ptr(), n, dout);
  Y.noalias() = CMapR<T>(x.value().ptr(), n, din) * CMapR<T>(w.value().ptr(), dout, din).transpose();
  if (bias) Y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias->value().ptr(), dout);
  std::vector<Var<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(OpId::linear, std::move(out), std::move(inputs), [n, din, dout](Node<T>& self) {
    CMapR<T> dY(self.grad.ptr(), n, dout);
    auto& X = *self.inputs[0];
    auto& W = *self.inputs[1];
    if (X.requires_grad) {
      Tensor<T> dx(X.value.shape());
      MapR<T>(dx.ptr(), n, din).noalias() = dY * CMapR<T>(W.value.ptr(), dout, din);
      accumulate(X, std::move(dx));
    }
    if (W.requires_grad) {
      Tensor<T> dw(W.value.shape());
      MapR<T>(dw.ptr(), dout, din).noalias() = dY.transpose() * CMapR<T>(X.value.ptr(), n, din);
      accumulate(W, std::move(dw));
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor<T> db(Shape{static_cast<std::size_t>(dout)});
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.ptr(), dout) = dY.colwise().sum();
      accumulate(*self.inputs[2], std::move(db));
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
    throw ShapeError("bmm: " + to_string(as) + " x " + to_string(bs));
  const std::size_t B = as[0];
  const auto n = static_cast<Eigen::Index>(as[1]), k = static_cast<Eigen::Index>(as[2]),
             m = static_cast<Eigen::Index>(bs[2]);
  Tensor<T> out(Shape{B, as[1], bs[2]});
  for (std::size_t i = 0; i < B; ++i)
    MapR<T>(out.ptr() + i * n * m, n, m).noalias() =
        CMapR<T>(a.value().ptr() + i * n * k, n, k) * CMapR<T>(b.value().ptr() + i * k * m, k, m);
  return make_result<T>(OpId::bmm, std::move(out), {a, b}, [B, n, k, m](Node<T>& self) {
    auto& A = *self.inputs[0];
    auto& Bn = *self.inputs[1];
    Tensor<T> da = A.requires_grad ? Tensor<T>(A.value.shape()) : Tensor<T>();
    Tensor<T> db = Bn.requires_grad ? Tensor<T>(Bn.value.shape()) : Tensor<T>();
    for (std::size_t i = 0; i < B; ++i) {
      CMapR<T> dY(self.grad.ptr() + i * n * m, n, m);
      if (A.requires_grad)
        MapR<T>(da.ptr() + i * n * k, n, k).noalias() = dY * CMapR<T>(Bn.value.ptr() + i * k * m, k, m).transpose();
      if (Bn.requires_grad)
        MapR<T>(db.ptr() + i * k * m, k, m).noalias() = CMapR<T>(A.value.ptr() + i * n * k, n, k).transpose() * dY;
    }
    if (A.requires_grad) accumulate(A, std::move(da));
    if (Bn.requires_grad) accumulate(Bn, std::move(db));
  });
}

// ---------------------------------------------------------------- softmax / reductions

template <typename T>
Tensor<T> softmax_tensor(const Tensor<T>& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      T mx = x[base];
      for (std::size_t j = 1; j < sp.n; ++j) mx = std::max(mx, x[base + j * sp.inner]);
      double s = 0;
      for (std::size_t j = 0; j < sp.n; ++j) s += std::exp(static_cast<double>(x[base + j * sp.inner] - mx));
      for (std::size_t j = 0; j < sp.n; ++j)
        out[base + j * sp.inner] = static_cast<T>(std::exp(static_cast<double>(x[base + j * sp.inner] - mx)) / s);
    }
  return out;
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  Tensor<T> out = softmax_tensor(x.value(), axis);
  Tensor<T> y = out;
  return make_result<T>(OpId::softmax, std::move(out), {x}, [sp, y = std::move(y)](Node<T>& self) {
    Tensor<T> g(y.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.n * sp.inner + i;
        double dot = 0;
        for (std::size_t j = 0; j < sp.n; ++j) dot += self.grad[base + j * sp.inner] * y[base + j * sp.inner];
        for (std::size_t j = 0; j < sp.n; ++j) {
          const std::size_t k = base + j * sp.inner;
          g[k] = static_cast<T>(y[k] * (self.grad[k] - dot));
        }
      }
    accumulate(*self.inputs[0], std::move(g));
  });
}

template <typename T>
Var<T> reduce_max(const Var<T>& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  const auto& xv = x.value();
  Tensor<T> out(drop_axis(x.shape(), axis).empty() ? Shape{} : drop_axis(x.shape(), axis));
  std::vector<std::size_t> arg(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      std::size_t best = 0;
      for (std::size_t j = 1; j < sp.n; ++j)
        if (xv[base + j * sp.inner] > xv[base + best * sp.inner]) best = j;
      arg[o * sp.inner + i] = best;
      out[o * sp.inner + i] = xv[base + best * sp.inner];
    }
  return make_result<T>(OpId::reduce_max, std::move(out), {x}, [sp, arg = std::move(arg)](Node<T>& self) {
    Tensor<T> g(self.inputs[0]->value.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i)
        g[o * sp.n * sp.inner + arg[o * sp.inner + i] * sp.inner + i] = self.grad[o * sp.inner + i];
    accumulate(*self.inputs[0], std::move(g));
  });
}

namespace {
template <typename T>
Var<T> reduce_linear(const Var<T>& x, std::size_t axis, bool mean) {
  const auto sp = split_at(x.shape(), axis);
  const auto& xv = x.value();
  Tensor<T> out(drop_axis(x.shape(), axis));
  const T k = mean ? T(1) / static_cast<T>(sp.n) : T(1);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < sp.n; ++j) {
      const T* p = xv.ptr() + (o * sp.n + j) * sp.inner;
      T* q = out.ptr() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) q[i] += p[i];
    }
  if (mean) out *= k;
  return make_result<T>(mean ? OpId::reduce_mean : OpId::reduce_sum, std::move(out), {x}, [sp, k](Node<T>& self) {
    Tensor<T> g(self.inputs[0]->value.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t j = 0; j < sp.n; ++j) {
        T* p = g.ptr() + (o * sp.n + j) * sp.inner;
        const T* q = self.grad.ptr() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) p[i] = q[i] * k;
      }
    accumulate(*self.inputs[0], std::move(g));
  });
}
}  // namespace

template <typename T>
Var<T> reduce_mean(const Var<T>& x, std::size_t axis) {
  return reduce_linear(x, axis, true);
}

template <typename T>
Var<T> reduce_sum(const Var<T>& x, std::size_t axis) {
  return reduce_linear(x, axis, false);
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double s = 0;
  for (T v : x.value().data()) s += v;
  return make_result<T>(OpId::sum_all, Tensor<T>::scalar(static_cast<T>(s)), {x}, [](Node<T>& self) {
    accumulate(*self.inputs[0], Tensor<T>(self.inputs[0]->value.shape(), self.grad.item()));
  });
}

// ---------------------------------------------------------------- shape ops

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return make_result<T>(OpId::reshape, std::move(out), {x}, [](Node<T>& self) {
    accumulate(*self.inputs[0], self.grad.reshaped(self.inputs[0]->value.shape()));
  });
}

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const auto& s = x.shape();
  if (perm.size() != s.size()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> used(s.size(), false);
  Shape os(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= s.size() || used[perm[i]]) throw ShapeError("permute: invalid permutation");
    used[perm[i]] = true;
    os[i] = s[perm[i]];
  }
  const auto in_st = strides_of(s);
  std::vector<std::size_t> src_st(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_st[i] = in_st[perm[i]];
  Tensor<T> out(os);
  std::vector<std::size_t> idx(os.size(), 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < out.numel(); ++k) {
    out[k] = x[src];
    for (std::size_t d = os.size(); d-- > 0;) {
      if (++idx[d] < os[d]) {
        src += src_st[d];
        break;
      }
      src -= src_st[d] * (os[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  Tensor<T> out = permute_tensor(x.value(), perm);
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return make_result<T>(OpId::permute, std::move(out), {x}, [inv](Node<T>& self) {
    accumulate(*self.inputs[0], permute_tensor(self.grad, inv));
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ArgumentError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  std::vector<std::size_t> widths;
  Shape os = s0;
  os.at(axis) = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d]) throw ShapeError("concat: " + to_string(s) + " vs " + to_string(s0));
    widths.push_back(s[axis]);
    os[axis] += s[axis];
  }
  const auto sp = split_at(os, axis);
  Tensor<T> out(os);
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& v = xs[k].value();
    const std::size_t run = widths[k] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(v.ptr() + o * run, run, out.ptr() + o * sp.n * sp.inner + off * sp.inner);
    off += widths[k];
  }
  return make_result<T>(OpId::concat, std::move(out), xs, [sp, widths](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto& in = *self.inputs[k];
      const std::size_t run = widths[k] * sp.inner;
      if (in.requires_grad) {
        Tensor<T> g(in.value.shape());
        for (std::size_t o = 0; o < sp.outer; ++o)
          std::copy_n(self.grad.ptr() + o * sp.n * sp.inner + off * sp.inner, run, g.ptr() + o * run);
        accumulate(in, std::move(g));
      }
      off += widths[k];
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_at(x.shape(), axis);
  if (begin >= end || end > sp.n) throw ShapeError("slice: bad range on axis " + std::to_string(axis));
  Shape os = x.shape();
  os[axis] = end - begin;
  Tensor<T> out(os);
  const std::size_t run = (end - begin) * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(x.value().ptr() + (o * sp.n + begin) * sp.inner, run, out.ptr() + o * run);
  return make_result<T>(OpId::slice, std::move(out), {x}, [sp, begin, run](Node<T>& self) {
    Tensor<T> g(self.inputs[0]->value.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(self.grad.ptr() + o * run, run, g.ptr() + (o * sp.n + begin) * sp.inner);
    accumulate(*self.inputs[0], std::move(g));
  });
}

#define GK_INSTANTIATE(T)                                                                                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> scale(const Var<T>&, T);                                                                   \
  template Var<T> bias_add(const Var<T>&, const Var<T>&);                                                    \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, const Conv3dOptions&);  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, const Conv2dOptions&);  \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, BatchNormState<T>&, \
                             NormMode, const BatchNormOptions&);                                             \
  template Var<T> relu(const Var<T>&);                                                                       \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                        \
  template Var<T> bmm(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> softmax(const Var<T>&, std::size_t);                                                       \
  template Var<T> reduce_max(const Var<T>&, std::size_t);                                                    \
  template Var<T> reduce_mean(const Var<T>&, std::size_t);                                                   \
  template Var<T> reduce_sum(const Var<T>&, std::size_t);                                                    \
  template Var<T> sum(const Var<T>&);                                                                        \
  template Var<T> reshape(const Var<T>&, Shape);                                                             \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                                   \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                           \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                               \
  template Tensor<T> permute_tensor(const Tensor<T>&, const std::vector<std::size_t>&);                      \
  template Tensor<T> softmax_tensor(const Tensor<T>&, std::size_t);

GK_INSTANTIATE(float)
GK_INSTANTIATE(double)
#undef GK_INSTANTIATE

}  // namespace gk::nd
