// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "loss/objectives.hpp"
#include "net/checkpoint.hpp"
#include "net/model.hpp"

using namespace gk;
using namespace gk::net;
using nd::Shape;

namespace {

using oracle::block_params;
using oracle::backbone_params;

ModelConfig toy(Mode m) {
  ModelConfig c;
  c.mode = m;
  c.channels = 4;
  c.parts = 4;
  c.embed_dim = 6;
  c.num_classes = 3;
  return c;
}

Inputs toy_inputs(const ModelConfig& c, std::size_t n, std::size_t t, std::mt19937_64& rng) {
  Inputs in;
  if (c.mode != Mode::skeletongait) in.silhouette = test::random_tensor<float>({n, 1, t, 64, 44}, rng, 0, 1);
  if (c.mode != Mode::deepgaitv2) in.skeleton = test::random_tensor<float>({n, 2, t, 64, 44}, rng, 0, 1);
  return in;
}

void set_param(ModelState& st, const std::string& name, const Tensor& v) {
  auto& p = st.params.params.at(name);
  REQUIRE(p.shape() == v.shape());
  p.mutable_value() = v;
}

}  // namespace

TEST_SUITE("gaitnet") {
  TEST_CASE("config validation and JSON") {
    ModelConfig c;
    c.parts = 5;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    CHECK_THROWS_AS(model_config_from_json({{"mode", "deepgaitv2"}, {"width", 3}}), ArgumentError);
    CHECK_THROWS_AS(model_config_from_json({{"depths", {1, 1, 1}}}), ArgumentError);
    CHECK_THROWS_AS(model_config_from_json({{"block_kind", "plain2d"}}), ArgumentError);
    const auto back = model_config_from_json(to_json(toy(Mode::skeletongait_pp)));
    CHECK(back.mode == Mode::skeletongait_pp);
    CHECK(back.channels == 4);
  }

  TEST_CASE("constructed depth matches the formula") {
    for (auto D : {std::array{1, 1, 1, 1}, std::array{1, 2, 2, 1}, std::array{1, 4, 4, 1}, std::array{2, 4, 6, 2}}) {
      ModelConfig c = toy(Mode::deepgaitv2);
      c.depths = D;
      CHECK(Model(c, 0).constructed_depth() == c.formula_depth());
    }
    ModelConfig c = toy(Mode::deepgaitv2);
    CHECK(c.formula_depth() == 10);
  }

  TEST_CASE("parameter counts agree with the closed form") {
    for (auto kind : {BlockKind::full3d, BlockKind::pseudo3d})
      for (auto mode : {Mode::deepgaitv2, Mode::skeletongait}) {
        ModelConfig c = toy(mode);
        c.block = kind;
        c.depths = {1, 2, 3, 1};
        c.channels = 8;
        const std::size_t bb = backbone_params(c.in_channels(), 8, c.depths, kind);
        Model m(c, 0);
        CHECK(m.backbone_parameter_count() == bb);
        CHECK(m.parameter_count() == bb + 4 * 64 * 6 + 4 * 6 + 4 * 6 * 3);
        CHECK(backbone_parameter_count(c) == bb);
      }
  }

  TEST_CASE("pseudo-3D blocks are smaller than full 3D") {
    for (std::size_t cin : {8, 16})
      CHECK(block_params(cin, 16, 2, BlockKind::pseudo3d) < block_params(cin, 16, 2, BlockKind::full3d));
  }

  TEST_CASE("stage output shapes for every mode and block kind") {
    std::mt19937_64 rng(41);
    nd::NoGradGuard ng;
    for (auto kind : {BlockKind::full3d, BlockKind::pseudo3d})
      for (auto mode : {Mode::deepgaitv2, Mode::skeletongait}) {
        ModelConfig c = toy(mode);
        c.block = kind;
        Model m(c, 1);
        const auto x = test::random_tensor<float>({2, c.in_channels(), 3, 64, 44}, rng);
        const auto outs = m.stage_outputs(x, NormMode::eval);
        REQUIRE(outs.size() == 5);
        CHECK(outs[1].shape() == Shape{2, 4, 3, 64, 44});
        CHECK(outs[2].shape() == Shape{2, 8, 3, 32, 22});
        CHECK(outs[3].shape() == Shape{2, 16, 3, 16, 11});
        CHECK(outs[4].shape() == Shape{2, 32, 3, 16, 11});
      }
  }

  TEST_CASE("forward returns per-part features, embeddings and logits") {
    std::mt19937_64 rng(42);
    for (auto mode : {Mode::deepgaitv2, Mode::skeletongait, Mode::skeletongait_pp}) {
      ModelConfig c = toy(mode);
      Model m(c, 2);
      const auto o = m.forward(toy_inputs(c, 3, 2, rng), NormMode::train);
      CHECK(o.features.shape() == Shape{3, 4, 6});
      CHECK(o.embeddings.shape() == Shape{3, 4, 6});
      CHECK(o.logits.shape() == Shape{3, 4, 3});
      CHECK(o.embeddings.value().all_finite());
    }
  }

  TEST_CASE("missing or misaligned inputs are rejected") {
    std::mt19937_64 rng(43);
    ModelConfig c = toy(Mode::skeletongait_pp);
    Model m(c, 3);
    auto in = toy_inputs(c, 2, 3, rng);
    in.skeleton = test::random_tensor<float>({2, 2, 4, 64, 44}, rng);
    CHECK_THROWS_AS(m.forward(in, NormMode::eval), ContractError);
    in.skeleton.reset();
    CHECK_THROWS_AS(m.forward(in, NormMode::eval), ArgumentError);
    Model single(toy(Mode::deepgaitv2), 3);
    Inputs wrong;
    wrong.silhouette = test::random_tensor<float>({2, 2, 3, 64, 44}, rng);
    CHECK_THROWS_AS(single.forward(wrong, NormMode::eval), ShapeError);
  }

  TEST_CASE("fusion placement follows the fusion location") {
    ModelConfig c = toy(Mode::skeletongait_pp);
    const Model low(c, 0);
    CHECK(low.state().count_with_prefix("sil.stage1.") > 0);
    CHECK(low.state().count_with_prefix("sil.stage2.") == 0);
    CHECK(low.state().count_with_prefix("trunk.stage2.") > 0);
    c.fusion_at = FusionLocation::high;
    const Model high(c, 0);
    CHECK(high.state().count_with_prefix("ske.stage3.") > 0);
    CHECK(high.state().count_with_prefix("trunk.stage3.") == 0);
    CHECK(high.state().count_with_prefix("trunk.stage4.") > 0);
    CHECK(high.constructed_depth() == c.formula_depth());
  }

  TEST_CASE("pseudo-3D block with an identity temporal kernel is the 2D block") {
    std::mt19937_64 rng(44);
    Rng r1(5), r2(5);
    ModelState sp, s2;
    const ResBlock p3d(sp, "b", BlockKind::pseudo3d, 3, 5, 2, r1);
    const ResBlock b2d(s2, "b", BlockKind::plain2d, 3, 5, 2, r2);
    for (const char* conv : {"conv1", "conv2"}) {
      const std::string base = std::string("b.") + conv;
      set_param(s2, base + ".weight", sp.param(base + ".spatial.weight").value());
      Tensor id(Shape{5, 5, 3, 1, 1});
      for (std::size_t o = 0; o < 5; ++o) id.at({o, o, 1, 0, 0}) = 1.f;
      set_param(sp, base + ".temporal.weight", id);
    }
    set_param(s2, "b.proj.weight", sp.param("b.proj.weight").value());
    const auto x = test::random_tensor<float>({2, 3, 4, 10, 8}, rng);
    for (auto mode : {NormMode::train, NormMode::eval}) {
      const auto a = p3d(sp, Var(x), mode).value();
      const auto b = b2d(s2, Var(x), mode).value();
      CHECK(test::max_abs_diff(a, b) <= 1e-6);
    }
  }

  TEST_CASE("cat fusion with [I | 0] weights returns the silhouette branch") {
    std::mt19937_64 rng(45);
    Rng r(6);
    ModelState st;
    Fusion f(st, "fusion", FusionKind::cat, 4, r);
    Tensor w(Shape{4, 8, 1, 1, 1});
    for (std::size_t o = 0; o < 4; ++o) w.at({o, o, 0, 0, 0}) = 1.f;
    set_param(st, f.cat_weight_name(), w);
    const auto x = test::random_tensor<float>({2, 4, 3, 5, 4}, rng);
    const auto y = test::random_tensor<float>({2, 4, 3, 5, 4}, rng);
    CHECK(f(st, Var(x), Var(y), NormMode::eval).value() == x);
  }

  TEST_CASE("add fusion with a zero branch is the identity") {
    std::mt19937_64 rng(46);
    Rng r(7);
    ModelState st;
    Fusion f(st, "fusion", FusionKind::add, 4, r);
    const auto x = test::random_tensor<float>({2, 4, 3, 5, 4}, rng);
    CHECK(f(st, Var(x), Var(Tensor(x.shape())), NormMode::eval).value() == x);
  }

  TEST_CASE("attention fusion is a per-element convex combination") {
    std::mt19937_64 rng(47);
    Rng r(8);
    ModelState st;
    Fusion f(st, "fusion", FusionKind::attention, 6, r);
    for (int trial = 0; trial < 20; ++trial) {
      const auto x = test::random_tensor<float>({2, 6, 2, 5, 4}, rng, -3, 3);
      const auto y = test::random_tensor<float>({2, 6, 2, 5, 4}, rng, -3, 3);
      const auto mode = trial % 2 ? NormMode::eval : NormMode::train;
      const auto w = f.attention_weights(st, Var(x), Var(y), mode).value();
      const auto out = f(st, Var(x), Var(y), mode).value();
      const std::size_t n = x.numel() / 2;
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < n; ++i) {
          CHECK(std::abs(w[b * 2 * n + i] + w[b * 2 * n + n + i] - 1.0) <= 1e-6);
          const float lo = std::min(x[b * n + i], y[b * n + i]), hi = std::max(x[b * n + i], y[b * n + i]);
          const float tol = 1e-6f * (1 + std::abs(lo) + std::abs(hi));
          CHECK(out[b * n + i] >= lo - tol);
          CHECK(out[b * n + i] <= hi + tol);
        }
    }
    const auto x = test::random_tensor<float>({1, 6, 2, 5, 4}, rng);
    const auto y = test::random_tensor<float>({1, 6, 3, 5, 4}, rng);
    CHECK_THROWS_AS(f(st, Var(x), Var(y), NormMode::eval), ContractError);
  }

  TEST_CASE("temporal pooling is frame-permutation invariant") {
    std::mt19937_64 rng(48);
    const auto x = test::random_tensor<float>({2, 3, 5, 4, 2}, rng);
    Tensor shuffled = nd::permute_tensor(x, {2, 0, 1, 3, 4});
    std::vector<std::size_t> order{3, 0, 4, 1, 2};
    Tensor moved(shuffled.shape());
    const std::size_t frame = shuffled.numel() / 5;
    for (std::size_t t = 0; t < 5; ++t)
      std::copy_n(shuffled.ptr() + order[t] * frame, frame, moved.ptr() + t * frame);
    const auto y = nd::permute_tensor(moved, {1, 2, 0, 3, 4});
    CHECK(temporal_pool(Var(x)).value() == temporal_pool(Var(y)).value());
    const auto one = test::random_tensor<float>({2, 3, 1, 4, 2}, rng);
    CHECK(temporal_pool(Var(one)).value().storage() == one.storage());
  }

  TEST_CASE("horizontal pooling of a constant map gives twice the constant") {
    const Tensor c(Shape{2, 3, 16, 11}, 0.75f);
    const auto hp = horizontal_pool(Var(c), 16).value();
    CHECK(hp.shape() == Shape{2, 3, 16});
    for (float v : hp.data()) CHECK(v == doctest::Approx(1.5f));
    CHECK_THROWS_AS(horizontal_pool(Var(c), 5), ArgumentError);
  }

  TEST_CASE("horizontal pooling ignores the order of cells inside a strip") {
    std::mt19937_64 rng(49);
    auto x = test::random_tensor<float>({1, 2, 4, 3}, rng);
    const auto a = horizontal_pool(Var(x), 4).value();
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t h = 0; h < 4; ++h) std::swap(x.at({0, c, h, 0}), x.at({0, c, h, 2}));
    CHECK(test::max_abs_diff(a, horizontal_pool(Var(x), 4).value()) < 1e-6);
  }

  TEST_CASE("identical clips give identical embeddings") {
    std::mt19937_64 rng(50);
    ModelConfig c = toy(Mode::deepgaitv2);
    Model m(c, 9);
    const auto one = test::random_tensor<float>({1, 1, 3, 64, 44}, rng);
    Tensor two(Shape{2, 1, 3, 64, 44});
    std::copy_n(one.ptr(), one.numel(), two.ptr());
    std::copy_n(one.ptr(), one.numel(), two.ptr() + one.numel());
    Inputs in;
    in.silhouette = two;
    const auto e = m.forward(in, NormMode::eval).embeddings.value();
    const std::size_t n = e.numel() / 2;
    CHECK(std::equal(e.ptr(), e.ptr() + n, e.ptr() + n));
  }

  TEST_CASE("every parameter receives a gradient") {
    std::mt19937_64 rng(51);
    for (auto mode : {Mode::deepgaitv2, Mode::skeletongait, Mode::skeletongait_pp}) {
      ModelConfig c = toy(mode);
      Model m(c, 10);
      const auto o = m.forward(toy_inputs(c, 6, 2, rng), NormMode::train);
      const std::vector<int> labels{0, 0, 1, 1, 2, 2};
      const auto loss = loss::combined_loss<float>(o.features, o.logits, labels);
      REQUIRE(loss.total.value().item() > 0);
      const auto grads = nd::backward(loss.total, m.state().params.params);
      for (const auto& [name, g] : grads) {
        double mx = 0;
        for (float v : g.data()) mx = std::max(mx, double(std::abs(v)));
        INFO(to_string(mode) << " " << name);
        CHECK(mx > 0);
      }
    }
  }

  TEST_CASE("checkpoint round trip preserves outputs bit-exactly") {
    std::mt19937_64 rng(52);
    test::TempDir dir("ckpt");
    for (auto mode : {Mode::deepgaitv2, Mode::skeletongait_pp}) {
      ModelConfig c = toy(mode);
      Model m(c, 11);
      const auto in = toy_inputs(c, 4, 2, rng);
      m.forward(in, NormMode::train);  // moves the running statistics
      TrainState ts;
      ts.step = 17;
      ts.rng = "abc";
      save_checkpoint(dir.path(), m, ts);
      auto loaded = load_checkpoint(dir.path());
      CHECK(loaded.train.step == 17);
      CHECK(loaded.train.rng == "abc");
      CHECK(loaded.model->parameter_count() == m.parameter_count());
      for (auto norm : {NormMode::eval}) {
        const auto a = m.forward(in, norm);
        const auto b = loaded.model->forward(in, norm);
        CHECK(a.embeddings.value() == b.embeddings.value());
        CHECK(a.logits.value() == b.logits.value());
      }
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "nothing"), IoError);
  }
}
