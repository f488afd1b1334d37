// SPDX-License-Identifier: Apache-2.0
#include "loss/objectives.hpp"

#include <cmath>

#include "common/error.hpp"
#include "nd/ops.hpp"

namespace gk::loss {
namespace {

struct Layout {
  std::size_t n, parts, dim;
};

Layout layout_of(const nd::Shape& s, std::size_t labels, const char* what) {
  Layout l{};
  if (s.size() == 2) {
    l = {s[0], 1, s[1]};
  } else if (s.size() == 3) {
    l = {s[0], s[1], s[2]};
  } else {
    throw ShapeError(std::string(what) + " expects [N, P, D] or [N, D], got " + nd::to_string(s));
  }
  if (l.n != labels)
    throw ShapeError(std::string(what) + ": " + std::to_string(labels) + " labels for " + std::to_string(l.n) +
                     " samples");
  return l;
}

}  // namespace

template <typename T>
TripletResult<T> triplet_loss(const nd::Var<T>& embeddings, const std::vector<int>& labels, const TripletOptions& opt) {
  const Layout L = layout_of(embeddings.shape(), labels.size(), "triplet_loss");
  const std::size_t N = L.n, P = L.parts, D = L.dim;
  bool any_pos = false, any_neg = false;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) (labels[i] == labels[j] ? any_pos : any_neg) = true;
  if (!any_neg) throw ArgumentError("no negative pairs: the batch holds a single identity");
  if (!any_pos) throw ArgumentError("no positive pairs: every identity appears once");

  const T* e = embeddings.value().ptr();
  auto at = [&](std::size_t n, std::size_t p) { return e + (n * P + p) * D; };
  // dist[p][i*N + j] for i < j
  std::vector<double> dist(P * N * N, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i + 1; j < N; ++j) {
        const T *a = at(i, p), *b = at(j, p);
        double s = 0;
        for (std::size_t k = 0; k < D; ++k) {
          const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
          s += d * d;
        }
        dist[(p * N + i) * N + j] = std::sqrt(s);
      }
  auto pair = [N](std::size_t i, std::size_t j) { return i < j ? i * N + j : j * N + i; };

  std::vector<std::pair<std::size_t, std::size_t>> pos, neg;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) (labels[i] == labels[j] ? pos : neg).emplace_back(i, j);

  // coef[p][pair]: signed count of active terms using that distance
  std::vector<double> coef(P * N * N, 0.0);
  std::vector<std::size_t> active(P, 0);
  double total = 0;
  std::size_t terms = 0;
  const double m = opt.margin;
  for (std::size_t p = 0; p < P; ++p) {
    const double* dp = dist.data() + p * N * N;
    double* cp = coef.data() + p * N * N;
    double sum = 0;
    auto term = [&](std::size_t ip, std::size_t in) {
      const double t = dp[ip] - dp[in] + m;
      ++terms;
      if (t > 0) {
        sum += t;
        ++active[p];
        cp[ip] += 1;
        cp[in] -= 1;
      }
    };
    if (opt.mining == TripletMining::unanchored) {
      for (const auto& [a, b] : pos)
        for (const auto& [c, d] : neg) term(a * N + b, c * N + d);
    } else {
      for (std::size_t a = 0; a < N; ++a)
        for (std::size_t q = 0; q < N; ++q) {
          if (q == a || labels[q] != labels[a]) continue;
          for (std::size_t n = 0; n < N; ++n)
            if (labels[n] != labels[a]) term(pair(a, q), pair(a, n));
        }
    }
    if (active[p]) total += sum / static_cast<double>(active[p]);
  }
  TripletResult<T> r;
  for (auto c : active) r.nonzero_count += c;
  r.total_terms = terms;
  r.loss = nd::make_result<T>(
      nd::OpId::triplet_loss, nd::Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(P))), {embeddings},
      [N, P, D, dist = std::move(dist), coef = std::move(coef), active = std::move(active)](nd::Node<T>& self) {
        const double up = static_cast<double>(self.grad.item());
        const auto& x = self.inputs[0]->value;
        nd::Tensor<T> g(x.shape());
        for (std::size_t p = 0; p < P; ++p) {
          if (!active[p]) continue;
          const double c = up / (static_cast<double>(P) * static_cast<double>(active[p]));
          for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = i + 1; j < N; ++j) {
              const std::size_t k = (p * N + i) * N + j;
              const double d = dist[k];
              if (coef[k] == 0 || d == 0) continue;
              const double w = c * coef[k] / d;
              const T *a = x.ptr() + (i * P + p) * D, *b = x.ptr() + (j * P + p) * D;
              T *ga = g.ptr() + (i * P + p) * D, *gb = g.ptr() + (j * P + p) * D;
              for (std::size_t t = 0; t < D; ++t) {
                const double v = w * (static_cast<double>(a[t]) - static_cast<double>(b[t]));
                ga[t] += static_cast<T>(v);
                gb[t] -= static_cast<T>(v);
              }
            }
        }
        nd::accumulate(*self.inputs[0], std::move(g));
      });
  return r;
}

template <typename T>
nd::Var<T> smoothed_ce(const nd::Var<T>& logits, const std::vector<int>& labels, const CeOptions& opt) {
  const Layout L = layout_of(logits.shape(), labels.size(), "smoothed_ce");
  const std::size_t rows = L.n * L.parts, Y = L.dim;
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= Y)
      throw ArgumentError("label " + std::to_string(y) + " outside [0, " + std::to_string(Y) + ")");
  if (opt.epsilon < 0 || opt.epsilon > 1) throw ArgumentError("label smoothing epsilon must lie in [0, 1]");
  const double floor = opt.log_floor, eps = opt.epsilon, invY = 1.0 / static_cast<double>(Y);
  const T* z = logits.value().ptr();
  std::vector<double> prob(rows * Y), dldp(rows * Y);
  std::vector<double> ex(Y);
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t label = static_cast<std::size_t>(labels[r / L.parts]);
    const T* zr = z + r * Y;
    double mx = zr[0];
    for (std::size_t k = 1; k < Y; ++k) mx = std::max(mx, static_cast<double>(zr[k]));
    double S = 0;
    for (std::size_t k = 0; k < Y; ++k) S += ex[k] = std::exp(static_cast<double>(zr[k]) - mx);
    double row = 0;
    for (std::size_t k = 0; k < Y; ++k) {
      const double pk = ex[k] / S, qk = (1 - eps) * (k == label ? 1.0 : 0.0) + eps * invY;
      const double rest = (S - ex[k]) / S;  // 1 - p_k
      prob[r * Y + k] = pk;
      double g = 0;
      if (opt.kind == CeKind::per_class) {
        if (qk > 0) {
          row -= invY * qk * std::log(std::max(pk, floor));
          if (pk > floor) g -= invY * qk / pk;
        }
        if (qk < 1) {
          row -= invY * (1 - qk) * std::log(std::max(rest, floor));
          if (rest > floor) g += invY * (1 - qk) / rest;
        }
      } else if (qk > 0) {
        row -= qk * std::log(std::max(pk, floor));
        if (pk > floor) g -= qk / pk;
      }
      dldp[r * Y + k] = g;
    }
    total += row;
  }
  return nd::make_result<T>(nd::OpId::smoothed_ce, nd::Tensor<T>::scalar(static_cast<T>(total / rows)), {logits},
                            [rows, Y, prob = std::move(prob), dldp = std::move(dldp)](nd::Node<T>& self) {
                              const double up = static_cast<double>(self.grad.item()) / static_cast<double>(rows);
                              nd::Tensor<T> g(self.inputs[0]->value.shape());
                              for (std::size_t r = 0; r < rows; ++r) {
                                const double* p = prob.data() + r * Y;
                                const double* h = dldp.data() + r * Y;
                                double dot = 0;
                                for (std::size_t k = 0; k < Y; ++k) dot += h[k] * p[k];
                                for (std::size_t k = 0; k < Y; ++k)
                                  g[r * Y + k] = static_cast<T>(up * p[k] * (h[k] - dot));
                              }
                              nd::accumulate(*self.inputs[0], std::move(g));
                            });
}

template <typename T>
CombinedResult<T> combined_loss(const nd::Var<T>& embeddings, const nd::Var<T>& logits, const std::vector<int>& labels,
                                const LossWeights& w, const TripletOptions& topt, const CeOptions& copt) {
  CombinedResult<T> r;
  if (w.triplet != 0) {
    auto t = triplet_loss(embeddings, labels, topt);
    r.triplet = t.loss;
    r.nonzero_count = t.nonzero_count;
    r.total = nd::scale(t.loss, static_cast<T>(w.triplet));
  }
  if (w.ce != 0) {
    r.ce = smoothed_ce(logits, labels, copt);
    const auto c = nd::scale(r.ce, static_cast<T>(w.ce));
    r.total = r.total.defined() ? nd::add(r.total, c) : c;
  }
  if (!r.total.defined()) r.total = nd::Var<T>(nd::Tensor<T>::scalar(T(0)));
  return r;
}

#define GK_INSTANTIATE(T)                                                                                   \
  template TripletResult<T> triplet_loss(const nd::Var<T>&, const std::vector<int>&, const TripletOptions&); \
  template nd::Var<T> smoothed_ce(const nd::Var<T>&, const std::vector<int>&, const CeOptions&);             \
  template CombinedResult<T> combined_loss(const nd::Var<T>&, const nd::Var<T>&, const std::vector<int>&,    \
                                           const LossWeights&, const TripletOptions&, const CeOptions&);

GK_INSTANTIATE(float)
GK_INSTANTIATE(double)
#undef GK_INSTANTIATE

}  // namespace gk::loss
