// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "loss/objectives.hpp"

using namespace gk;
using namespace gk::loss;
using nd::Shape;
using nd::TensorD;
using VarD = nd::Var<double>;

namespace {

double dist(const TensorD& e, std::size_t i, std::size_t j, std::size_t p) {
  const std::size_t P = e.dim(1), D = e.dim(2);
  double s = 0;
  for (std::size_t k = 0; k < D; ++k) {
    const double d = e[(i * P + p) * D + k] - e[(j * P + p) * D + k];
    s += d * d;
  }
  return std::sqrt(s);
}

struct OracleTriplet {
  double loss = 0;
  std::size_t nonzero = 0, terms = 0;
};

OracleTriplet oracle_triplet(const TensorD& e, const std::vector<int>& y, double m, TripletMining mining) {
  const std::size_t N = e.dim(0), P = e.dim(1);
  OracleTriplet r;
  for (std::size_t p = 0; p < P; ++p) {
    double sum = 0;
    std::size_t active = 0;
    auto add = [&](double t) {
      ++r.terms;
      if (t > 0) {
        sum += t;
        ++active;
      }
    };
    if (mining == TripletMining::unanchored) {
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j) {
          if (y[i] != y[j]) continue;
          for (std::size_t k = 0; k < N; ++k)
            for (std::size_t l = k + 1; l < N; ++l)
              if (y[k] != y[l]) add(dist(e, i, j, p) - dist(e, k, l, p) + m);
        }
    } else {
      for (std::size_t a = 0; a < N; ++a)
        for (std::size_t q = 0; q < N; ++q)
          for (std::size_t n = 0; n < N; ++n)
            if (q != a && y[q] == y[a] && y[n] != y[a]) add(dist(e, a, q, p) - dist(e, a, n, p) + m);
    }
    r.nonzero += active;
    if (active) r.loss += sum / double(active);
  }
  r.loss /= double(P);
  return r;
}

double oracle_ce(const TensorD& z, const std::vector<int>& y, double eps, CeKind kind) {
  const std::size_t N = z.dim(0), P = z.dim(1), Y = z.dim(2);
  double total = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      const double* r = z.ptr() + (n * P + p) * Y;
      long double s = 0;
      for (std::size_t k = 0; k < Y; ++k) s += std::exp(static_cast<long double>(r[k]));
      double row = 0;
      for (std::size_t k = 0; k < Y; ++k) {
        const double pk = static_cast<double>(std::exp(static_cast<long double>(r[k])) / s);
        const double q = (k == std::size_t(y[n]) ? 1 - eps : 0) + eps / double(Y);
        if (kind == CeKind::conventional)
          row -= q * std::log(pk);
        else
          row -= (q * std::log(pk) + (1 - q) * std::log(1 - pk)) / double(Y);
      }
      total += row;
    }
  return total / double(N * P);
}

// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
std::vector<double> random_rotation(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> q(d * d);
  for (auto& v : q) v = g(rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += q[i * d + k] * q[j * d + k];
      for (std::size_t k = 0; k < d; ++k) q[i * d + k] -= dot * q[j * d + k];
    }
    double n = 0;
    for (std::size_t k = 0; k < d; ++k) n += q[i * d + k] * q[i * d + k];
    for (std::size_t k = 0; k < d; ++k) q[i * d + k] /= std::sqrt(n);
  }
  return q;
}

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("triplet hand example") {
    // 1-D points: a0=0, a1=1 (id 0), b0=3 (id 1)
    TensorD e(Shape{3, 1}, std::vector<double>{0, 1, 3});
    const std::vector<int> y{0, 0, 1};
    TripletOptions o;
    o.margin = 2.5;
    // positive pair distance 1; negative pairs 3 and 2 -> terms 0.5 and 1.5
    auto r = triplet_loss(VarD(e), y, o);
    CHECK(r.loss.value().item() == doctest::Approx(1.0));
    CHECK(r.nonzero_count == 2);
    CHECK(r.total_terms == 2);
    o.margin = 1.5;
    r = triplet_loss(VarD(e), y, o);
    CHECK(r.loss.value().item() == doctest::Approx(0.5));
    CHECK(r.nonzero_count == 1);
    o.margin = 0.5;
    CHECK(triplet_loss(VarD(e), y, o).loss.value().item() == 0.0);
  }

  TEST_CASE("triplet requires both pair kinds") {
    TensorD e(Shape{2, 1}, std::vector<double>{0, 1});
    CHECK_THROWS_AS(triplet_loss(VarD(e), {0, 0}), ArgumentError);
    CHECK_THROWS_AS(triplet_loss(VarD(e), {0, 1}), ArgumentError);
    CHECK_THROWS_AS(triplet_loss(VarD(e), {0, 1, 1}), ShapeError);
  }

  TEST_CASE("triplet matches the brute-force enumeration") {
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<int> lab(0, 2);
    for (int trial = 0; trial < 40; ++trial) {
      const auto e = test::random_tensor<double>({7, 3, 4}, rng);
      std::vector<int> y(7);
      for (auto& v : y) v = lab(rng);
      y[0] = 0, y[1] = 0, y[2] = 1;
      for (auto mining : {TripletMining::unanchored, TripletMining::anchored}) {
        TripletOptions o;
        o.mining = mining;
        o.margin = 0.3;
        const auto r = triplet_loss(VarD(e), y, o);
        const auto ref = oracle_triplet(e, y, 0.3, mining);
        CHECK(r.loss.value().item() == doctest::Approx(ref.loss).epsilon(1e-12));
        CHECK(r.nonzero_count == ref.nonzero);
        CHECK(r.total_terms == ref.terms);
      }
    }
  }

  TEST_CASE("triplet loss is invariant to rotations and translations") {
    std::mt19937_64 rng(62);
    const std::vector<int> y{0, 0, 1, 1, 2, 2};
    for (int trial = 0; trial < 10; ++trial) {
      const auto e = test::random_tensor<double>({6, 2, 5}, rng);
      const auto R = random_rotation(5, rng);
      TensorD moved(e.shape());
      for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t i = 0; i < 5; ++i) {
          double v = 0.7;
          for (std::size_t k = 0; k < 5; ++k) v += R[i * 5 + k] * e[r * 5 + k];
          moved[r * 5 + i] = v;
        }
      for (auto mining : {TripletMining::unanchored, TripletMining::anchored}) {
        TripletOptions o;
        o.mining = mining;
        const double a = triplet_loss(VarD(e), y, o).loss.value().item();
        const double b = triplet_loss(VarD(moved), y, o).loss.value().item();
        CHECK(std::abs(a - b) <= 1e-9);
      }
    }
  }

  TEST_CASE("coincident embeddings give a finite zero subgradient") {
    TensorD e(Shape{3, 2}, 0.0);
    VarD v(e, true);
    auto r = triplet_loss(v, {0, 0, 1});
    CHECK(r.loss.value().item() == doctest::Approx(0.2));
    nd::backward(r.loss);
    for (double g : v.grad().data()) CHECK(g == 0.0);
  }

  TEST_CASE("smoothed CE hand values") {
    TensorD z(Shape{1, 2}, std::vector<double>{0, 0});
    for (auto kind : {CeKind::per_class, CeKind::conventional}) {
      CeOptions o;
      o.kind = kind;
      CHECK(smoothed_ce(VarD(z), {0}, o).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    // no smoothing, conventional form: -log softmax
    TensorD w(Shape{1, 3}, std::vector<double>{1, 2, 3});
    CeOptions o;
    o.kind = CeKind::conventional;
    o.epsilon = 0;
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(smoothed_ce(VarD(w), {2}, o).value().item() == doctest::Approx(lse - 3.0).epsilon(1e-14));
  }

  TEST_CASE("smoothed CE matches a long-double oracle") {
    std::mt19937_64 rng(63);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int trial = 0; trial < 30; ++trial) {
      const auto z = test::random_tensor<double>({4, 3, 5}, rng, -4, 4);
      std::vector<int> y(4);
      for (auto& v : y) v = lab(rng);
      for (auto kind : {CeKind::per_class, CeKind::conventional}) {
        CeOptions o;
        o.kind = kind;
        o.epsilon = 0.1;
        CHECK(smoothed_ce(VarD(z), y, o).value().item() ==
              doctest::Approx(oracle_ce(z, y, 0.1, kind)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("smoothed CE rejects labels outside [0, Y)") {
    TensorD z(Shape{2, 3}, 0.0);
    CHECK_THROWS_AS(smoothed_ce(VarD(z), {0, 3}), ArgumentError);
    CHECK_THROWS_AS(smoothed_ce(VarD(z), {-1, 0}), ArgumentError);
  }

  TEST_CASE("combined loss is the weighted sum") {
    std::mt19937_64 rng(64);
    const auto e = test::random_tensor<double>({4, 2, 3}, rng);
    const auto z = test::random_tensor<double>({4, 2, 2}, rng);
    const std::vector<int> y{0, 0, 1, 1};
    const double t = triplet_loss(VarD(e), y).loss.value().item();
    const double c = smoothed_ce(VarD(z), y).value().item();
    const auto r = combined_loss(VarD(e), VarD(z), y, {0.5, 2.0});
    CHECK(r.total.value().item() == doctest::Approx(0.5 * t + 2.0 * c).epsilon(1e-14));
    CHECK(r.nonzero_count == triplet_loss(VarD(e), y).nonzero_count);
    const auto none = combined_loss(VarD(e), VarD(z), y, {0.0, 0.0});
    CHECK(none.total.value().item() == 0.0);
    CHECK_FALSE(none.triplet.defined());
  }
}
