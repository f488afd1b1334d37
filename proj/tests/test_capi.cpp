// SPDX-License-Identifier: Apache-2.0
// Links against the shared library only; exercises the C surface.
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "gaitkit/gaitkit.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("gaitkit-capi-" + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator/(const char* s) const { return (dir / s).string(); }
};

nlohmann::json take_json(char* s) {
  REQUIRE(s != nullptr);
  auto j = nlohmann::json::parse(s);
  gk_string_free(s);
  return j;
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and version") {
    CHECK(std::strlen(gk_version()) > 0);
    CHECK(std::string(gk_status_name(GK_OK)) == "ok");
    CHECK(std::string(gk_status_name(GK_ERR_ARGUMENT)) == "argument");
    CHECK(std::string(gk_status_name(GK_ERR_IO)) == "io");
  }

  TEST_CASE("tensor round trip through a file") {
    Scratch s;
    const size_t shape[3] = {2, 3, 4};
    std::vector<float> v(24);
    for (size_t i = 0; i < v.size(); ++i) v[i] = 0.25f * static_cast<float>(i) - 3.0f;
    gk_tensor* t = nullptr;
    REQUIRE(gk_tensor_from_f32(shape, 3, v.data(), &t) == GK_OK);
    CHECK(gk_tensor_dtype(t) == GK_DTYPE_F32);
    CHECK(gk_tensor_rank(t) == 3);
    CHECK(gk_tensor_numel(t) == 24);
    REQUIRE(gk_tensor_save(t, (s / "t.gt01").c_str()) == GK_OK);
    gk_tensor* u = nullptr;
    REQUIRE(gk_tensor_load((s / "t.gt01").c_str(), &u) == GK_OK);
    size_t dims[2] = {0, 0};
    REQUIRE(gk_tensor_shape(u, dims, 2) == GK_OK);
    CHECK(dims[0] == 2);
    CHECK(dims[1] == 3);
    std::vector<double> back(24);
    REQUIRE(gk_tensor_copy_f64(u, back.data(), back.size()) == GK_OK);
    for (size_t i = 0; i < v.size(); ++i) CHECK(back[i] == static_cast<double>(v[i]));
    CHECK(gk_tensor_copy_f64(u, back.data(), 23) == GK_ERR_SHAPE);
    CHECK(std::strlen(gk_last_error()) > 0);
    gk_tensor_free(t);
    gk_tensor_free(u);
  }

  TEST_CASE("errors map to status codes") {
    Scratch s;
    gk_tensor* t = nullptr;
    CHECK(gk_tensor_load((s / "missing.gt01").c_str(), &t) == GK_ERR_IO);
    CHECK(t == nullptr);
    CHECK(gk_tensor_load(nullptr, &t) == GK_ERR_ARGUMENT);
    std::ofstream(s / "bad.gt01") << "GT01 but not really";
    CHECK(gk_tensor_load((s / "bad.gt01").c_str(), &t) == GK_ERR_IO);

    gk_render_options o;
    gk_render_options_default(&o);
    CHECK(o.sigma == 8.0);
    CHECK(o.height == 64.0);
    CHECK(o.center_on_canvas == 1);
    o.sigma = 0;
    fs::create_directories(s.dir / "poses");
    CHECK(gk_render_skeleton_dir((s / "poses").c_str(), (s / "out").c_str(), &o, nullptr) == GK_ERR_ARGUMENT);
    CHECK(std::string(gk_last_error()).find("sigma") != std::string::npos);
    gk_render_options_default(&o);
    o.height = 63;
    CHECK(gk_render_skeleton_dir((s / "poses").c_str(), (s / "out").c_str(), &o, nullptr) == GK_ERR_ARGUMENT);
    CHECK(gk_eval((s / "g").c_str(), (s / "p").c_str(), nullptr, nullptr) == GK_ERR_ARGUMENT);
    CHECK(gk_train((s / "nope.json").c_str(), nullptr, nullptr) == GK_ERR_ARGUMENT);
    gk_model* m = nullptr;
    CHECK(gk_model_load((s / "none").c_str(), &m) == GK_ERR_IO);
    CHECK(gk_debug_perturb_backward("no_such_op", 2.0) == GK_ERR_ARGUMENT);
    CHECK(gk_gradcheck(0, 0, nullptr, nullptr, nullptr) == GK_ERR_ARGUMENT);
  }

  TEST_CASE("gradcheck through the C surface, with and without perturbation") {
    int passed = 0;
    char* rep = nullptr;
    REQUIRE(gk_gradcheck(3, 1, "relu", &rep, &passed) == GK_OK);
    auto j = take_json(rep);
    CHECK(passed == 1);
    CHECK(j.at("checks").size() == 1);

    REQUIRE(gk_debug_perturb_backward("relu", 1.5) == GK_OK);
    REQUIRE(gk_gradcheck(3, 1, "relu", &rep, &passed) == GK_OK);
    j = take_json(rep);
    CHECK(passed == 0);
    REQUIRE(gk_debug_perturb_backward(nullptr, 1.0) == GK_OK);
    REQUIRE(gk_gradcheck(3, 1, "relu", nullptr, &passed) == GK_OK);
    CHECK(passed == 1);
  }

  TEST_CASE("end to end: synth, render, preprocess, train, embed, eval, model") {
    Scratch s;
    std::ofstream(s / "spec.json") << R"({"identities": 3, "sequences": 3, "frames": 10, "noise": 0.01, "seed": 2})";
    char* out = nullptr;
    REQUIRE(gk_gen_synth((s / "spec.json").c_str(), (s / "raw").c_str(), &out) == GK_OK);
    take_json(out);
    gk_render_options o;
    gk_render_options_default(&o);
    REQUIRE(gk_render_skeleton_dir((s / "raw/poses").c_str(), (s / "ske").c_str(), &o, &out) == GK_OK);
    CHECK(take_json(out).at("sequences").get<int>() == 9);
    REQUIRE(gk_preprocess_dir((s / "raw/sils").c_str(), (s / "sil").c_str(), &out) == GK_OK);
    CHECK(take_json(out).at("sequences").get<int>() == 9);

    std::ofstream(s / "run.json") << R"({"schema_version": 1, "seed": 4,
      "data": {"silhouettes": "sil", "skeletons": "ske", "train_conditions": ["seq-00", "seq-01"]},
      "model": {"mode": "skeletongait_pp", "channels": 4, "embed_dim": 8, "parts": 2, "fusion": "cat"},
      "optim": {"total_steps": 2, "batch_p": 2, "batch_k": 2, "clip_len": 4, "log_every": 1},
      "output": "run"})";
    REQUIRE(gk_train((s / "run.json").c_str(), nullptr, &out) == GK_OK);
    const auto summary = take_json(out);
    const std::string ck = s / "run/ckpt-final";
    CHECK(fs::exists(fs::path(ck) / "manifest.json"));

    const char* gal[] = {"seq-00", "seq-01"};
    const char* prb[] = {"seq-02"};
    REQUIRE(gk_embed(ck.c_str(), (s / "sil").c_str(), (s / "ske").c_str(), gal, 2, (s / "gal").c_str(), nullptr) ==
            GK_OK);
    REQUIRE(gk_embed(ck.c_str(), (s / "sil").c_str(), (s / "ske").c_str(), prb, 1, (s / "prb").c_str(), nullptr) ==
            GK_OK);
    CHECK(gk_embed(ck.c_str(), nullptr, (s / "ske").c_str(), prb, 1, (s / "x").c_str(), nullptr) == GK_ERR_ARGUMENT);
    REQUIRE(gk_eval((s / "gal").c_str(), (s / "prb").c_str(), nullptr, &out) == GK_OK);
    const auto rep = take_json(out);
    CHECK(rep.at("probes").get<int>() == 3);
    CHECK(rep.at("gallery").get<int>() == 6);

    gk_model* m = nullptr;
    REQUIRE(gk_model_load(ck.c_str(), &m) == GK_OK);
    CHECK(gk_model_parameter_count(m) > 0);
    std::vector<float> sil(10 * 64 * 44, 0.0f), ske(10 * 2 * 64 * 44, 0.0f);
    for (size_t i = 0; i < sil.size(); i += 3) sil[i] = 1.0f;
    const size_t s1[4] = {10, 1, 64, 44}, s2[4] = {10, 2, 64, 44};
    gk_tensor *a = nullptr, *b = nullptr, *e = nullptr;
    REQUIRE(gk_tensor_from_f32(s1, 4, sil.data(), &a) == GK_OK);
    REQUIRE(gk_tensor_from_f32(s2, 4, ske.data(), &b) == GK_OK);
    REQUIRE(gk_model_embed(m, a, b, &e) == GK_OK);
    size_t d[2];
    REQUIRE(gk_tensor_shape(e, d, 2) == GK_OK);
    CHECK(d[0] == 2);
    CHECK(d[1] == 8);
    CHECK(gk_model_embed(m, a, nullptr, &e) == GK_ERR_ARGUMENT);
    gk_tensor_free(a);
    gk_tensor_free(b);
    gk_tensor_free(e);
    gk_model_free(m);
    (void)summary;
  }
}
