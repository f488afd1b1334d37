// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "app/gradcheck_suite.hpp"
#include "helpers.hpp"
#include "nd/gradcheck.hpp"
#include "nd/gt01.hpp"
#include "nd/ops.hpp"
#include "nd/optim.hpp"

using namespace gk;
using nd::Shape;
using nd::TensorD;
using nd::TensorF;
using VarD = nd::Var<double>;

namespace {

// Direct six-loop cross-correlation with zero padding.
TensorD conv_oracle(const TensorD& x, const TensorD& w, const nd::Conv3dOptions& o) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t to = (xs[2] + 2 * o.pad[0] - ws[2]) / o.stride[0] + 1;
  const std::size_t ho = (xs[3] + 2 * o.pad[1] - ws[3]) / o.stride[1] + 1;
  const std::size_t wo = (xs[4] + 2 * o.pad[2] - ws[4]) / o.stride[2] + 1;
  TensorD y(Shape{xs[0], ws[0], to, ho, wo});
  for (std::size_t n = 0; n < xs[0]; ++n)
    for (std::size_t co = 0; co < ws[0]; ++co)
      for (std::size_t t = 0; t < to; ++t)
        for (std::size_t h = 0; h < ho; ++h)
          for (std::size_t q = 0; q < wo; ++q) {
            double acc = 0;
            for (std::size_t ci = 0; ci < xs[1]; ++ci)
              for (std::size_t a = 0; a < ws[2]; ++a)
                for (std::size_t b = 0; b < ws[3]; ++b)
                  for (std::size_t c = 0; c < ws[4]; ++c) {
                    const long it = long(t * o.stride[0] + a) - long(o.pad[0]);
                    const long ih = long(h * o.stride[1] + b) - long(o.pad[1]);
                    const long iw = long(q * o.stride[2] + c) - long(o.pad[2]);
                    if (it < 0 || ih < 0 || iw < 0 || it >= long(xs[2]) || ih >= long(xs[3]) || iw >= long(xs[4]))
                      continue;
                    acc += x.at({n, ci, std::size_t(it), std::size_t(ih), std::size_t(iw)}) * w.at({co, ci, a, b, c});
                  }
            y.at({n, co, t, h, q}) = acc;
          }
  return y;
}

}  // namespace

TEST_SUITE("nd") {
  TEST_CASE("tensor rejects zero extents and mismatched data") {
    CHECK_THROWS_AS(TensorF(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(TensorF(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    CHECK(TensorF::scalar(3.f).item() == 3.f);
    CHECK_THROWS_AS(TensorF(Shape{2, 3}).reshaped({4}), ShapeError);
  }

  TEST_CASE("gt01 encodes the documented header") {
    TensorF t(Shape{2, 1}, std::vector<float>{1.f, -2.f});
    const auto bytes = nd::encode_gt01(t);
    REQUIRE(bytes.size() == 4 + 1 + 1 + 2 * 4 + 2 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GT01");
    CHECK(bytes[4] == 0);
    CHECK(bytes[5] == 2);
    CHECK(bytes[6] == 2);
    CHECK(bytes[7] == 0);
    CHECK(bytes[10] == 1);
    // 1.0f little-endian
    CHECK(bytes[14] == 0x00);
    CHECK(bytes[17] == 0x3f);
  }

  TEST_CASE("gt01 round trip is exact for both dtypes") {
    std::mt19937_64 rng(1);
    test::TempDir dir("gt01");
    const auto f = test::random_tensor<float>({3, 4, 5}, rng);
    const auto d = test::random_tensor<double>({7}, rng);
    nd::save_gt01(dir / "f.gt01", f);
    nd::save_gt01(dir / "d.gt01", d);
    CHECK(nd::load_gt01<float>(dir / "f.gt01") == f);
    CHECK(nd::load_gt01<double>(dir / "d.gt01") == d);
    CHECK(nd::dtype_of(nd::load_gt01_any(dir / "d.gt01")) == nd::DType::f64);
    const auto scalar = TensorD::scalar(2.5);
    nd::save_gt01(dir / "s.gt01", scalar);
    CHECK(nd::load_gt01<double>(dir / "s.gt01") == scalar);
  }

  TEST_CASE("gt01 rejects malformed input") {
    TensorF t(Shape{4}, 1.f);
    auto bytes = nd::encode_gt01(t);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(nd::decode_gt01(bad_magic), IoError);
    auto bad_dtype = bytes;
    bad_dtype[4] = 7;
    CHECK_THROWS_AS(nd::decode_gt01(bad_dtype), IoError);
    bytes.pop_back();
    CHECK_THROWS_AS(nd::decode_gt01(bytes), IoError);
    CHECK_THROWS_AS(nd::load_gt01_any("/nonexistent/x.gt01"), IoError);
  }

  TEST_CASE("conv3d matches a direct loop oracle") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> kd(1, 3), sd(1, 2), pd(0, 1);
    for (int trial = 0; trial < 30; ++trial) {
      nd::Conv3dOptions o;
      std::array<std::size_t, 3> k{};
      for (int a = 0; a < 3; ++a) {
        k[a] = std::size_t(kd(rng));
        o.stride[a] = std::size_t(sd(rng));
        o.pad[a] = std::size_t(pd(rng));
      }
      const auto x = test::random_tensor<double>({2, 3, 4 + k[0], 5 + k[1], 4 + k[2]}, rng);
      const auto w = test::random_tensor<double>({2, 3, k[0], k[1], k[2]}, rng);
      const auto y = nd::conv3d<double>(VarD(x), VarD(w), std::nullopt, o).value();
      const auto ref = conv_oracle(x, w, o);
      REQUIRE(y.shape() == ref.shape());
      CHECK(test::max_abs_diff(y, ref) < 1e-12);
    }
  }

  TEST_CASE("conv3d rejects channel mismatch") {
    CHECK_THROWS_AS(nd::conv3d<double>(VarD(TensorD({1, 2, 1, 3, 3})), VarD(TensorD({1, 3, 1, 1, 1})), std::nullopt, {}),
                    ShapeError);
  }

  TEST_CASE("batch_norm train mode standardizes each channel and updates running stats") {
    std::mt19937_64 rng(3);
    const auto x = test::random_tensor<double>({4, 3, 5}, rng, 2.0, 6.0);
    auto st = nd::BatchNormState<double>::fresh(3);
    const auto y = nd::batch_norm<double>(VarD(x), VarD(TensorD({3}, 1.0)), VarD(TensorD({3}, 0.0)), st,
                                  nd::NormMode::train)
                       .value();
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0, s2 = 0, xs = 0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 5; ++i) {
          s += y.at({n, c, i});
          s2 += y.at({n, c, i}) * y.at({n, c, i});
          xs += x.at({n, c, i});
        }
      CHECK(std::abs(s / 20) < 1e-12);
      CHECK(s2 / 20 == doctest::Approx(1.0).epsilon(1e-4));
      CHECK(st.running_mean[c] == doctest::Approx(0.1 * xs / 20).epsilon(1e-12));
    }
  }

  TEST_CASE("batch_norm eval mode uses running statistics") {
    TensorD x(Shape{1, 1, 2}, std::vector<double>{1.0, 3.0});
    nd::BatchNormState<double> st{TensorD({1}, 1.0), TensorD({1}, 4.0)};
    nd::BatchNormOptions o;
    o.eps = 1e-12;
    const auto y = nd::batch_norm<double>(VarD(x), VarD(TensorD({1}, 2.0)), std::nullopt, st, nd::NormMode::eval, o).value();
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(2.0));
    CHECK(st.running_var[0] == 4.0);
  }

  TEST_CASE("softmax rows sum to one and reductions agree with loops") {
    std::mt19937_64 rng(4);
    const auto x = test::random_tensor<double>({2, 3, 4}, rng, -5, 5);
    const auto s = nd::softmax(VarD(x), 1).value();
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t c = 0; c < 4; ++c) {
        double t = 0;
        for (std::size_t b = 0; b < 3; ++b) t += s.at({a, b, c});
        CHECK(t == doctest::Approx(1.0).epsilon(1e-14));
      }
    const auto mx = nd::reduce_max(VarD(x), 2).value();
    const auto mean = nd::reduce_mean(VarD(x), 2).value();
    const auto sm = nd::reduce_sum(VarD(x), 0).value();
    CHECK(mx.shape() == Shape{2, 3});
    CHECK(sm.shape() == Shape{3, 4});
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        double m = -1e300, t = 0;
        for (std::size_t c = 0; c < 4; ++c) {
          m = std::max(m, x.at({a, b, c}));
          t += x.at({a, b, c});
        }
        CHECK(mx.at({a, b}) == m);
        CHECK(mean.at({a, b}) == doctest::Approx(t / 4));
      }
    CHECK(nd::sum(VarD(x)).value().rank() == 0);
  }

  TEST_CASE("permute, concat and slice invert each other") {
    std::mt19937_64 rng(5);
    const auto x = test::random_tensor<double>({2, 3, 4}, rng);
    const VarD v(x);
    const auto p = nd::permute(nd::permute(v, {2, 0, 1}), {1, 2, 0});
    CHECK(p.value() == x);
    const auto c = nd::concat<double>({v, v}, 1);
    CHECK(c.shape() == Shape{2, 6, 4});
    CHECK(nd::slice(c, 1, 3, 6).value() == x);
    CHECK_THROWS_AS(nd::slice(v, 1, 2, 2), ShapeError);
  }

  TEST_CASE("gradients accumulate over shared inputs") {
    VarD x(TensorD({3}, 2.0), true);
    auto y = nd::sum(nd::add(nd::mul(x, x), x));
    nd::backward(y);
    for (double g : x.grad().data()) CHECK(g == 5.0);
  }

  TEST_CASE("no-grad guard records no tape") {
    VarD x(TensorD({2}, 1.0), true);
    nd::NoGradGuard guard;
    const auto y = nd::relu(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->inputs.empty());
  }

  TEST_CASE("backward rejects non-scalar and non-finite losses") {
    VarD x(TensorD({2}, 1.0), true);
    CHECK_THROWS_AS(nd::backward(nd::relu(x)), ContractError);
    VarD inf(TensorD::scalar(INFINITY), true);
    CHECK_THROWS_AS(nd::backward(nd::scale(inf, 1.0)), ContractError);
  }

  TEST_CASE("gradient checker flags a corrupted backward rule") {
    std::mt19937_64 rng(6);
    const auto fn = [](const std::vector<VarD>& in) { return nd::relu(in[0]); };
    auto x = test::random_tensor<double>({10}, rng, 0.2, 1.0);
    CHECK(nd::check_gradients(fn, {x}, rng).max_rel_error < 1e-6);
    nd::debug::set_backward_perturbation(nd::OpId::relu, 1.5);
    const double err = nd::check_gradients(fn, {x}, rng).max_rel_error;
    nd::debug::set_backward_perturbation(std::nullopt);
    CHECK(err > 0.3);
  }

  TEST_CASE("every primitive passes a short gradient sweep") {
    app::GradSuiteOptions o;
    o.cases = 5;
    o.seed = 11;
    for (const auto& c : app::run_gradcheck_suite(o)) {
      INFO(c.name << " err=" << c.max_rel_error);
      CHECK(c.passed);
      CHECK(c.cases == 5);
    }
  }

  TEST_CASE("sgd step follows the momentum and weight decay update") {
    nd::ParamSet<double> ps;
    ps.add("w", TensorD({1}, 1.0));
    nd::GradMap<double> g{{"w", TensorD({1}, 0.5)}};
    nd::SgdOptions o{0.1, 0.9, 0.01};
    nd::sgd_step(ps, g, o);
    // v = 0.5 + 0.01 * 1 = 0.51; p = 1 - 0.051
    CHECK(ps.at("w").value()[0] == doctest::Approx(0.949).epsilon(1e-14));
    nd::sgd_step(ps, g, o);
    // v = 0.9 * 0.51 + 0.5 + 0.01 * 0.949
    const double v2 = 0.9 * 0.51 + 0.5 + 0.01 * 0.949;
    CHECK(ps.at("w").value()[0] == doctest::Approx(0.949 - 0.1 * v2).epsilon(1e-14));
    CHECK_THROWS_AS(ps.add("w", TensorD({1})), ArgumentError);
  }

  TEST_CASE("multistep schedule divides by ten at each milestone") {
    CHECK(nd::multistep_lr(0.1, {10, 20}, 0) == 0.1);
    CHECK(nd::multistep_lr(0.1, {10, 20}, 9) == 0.1);
    CHECK(nd::multistep_lr(0.1, {10, 20}, 10) == doctest::Approx(0.01));
    CHECK(nd::multistep_lr(0.1, {10, 20}, 25) == doctest::Approx(0.001));
  }
}
