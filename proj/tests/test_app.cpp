// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "app/commands.hpp"
#include "app/config.hpp"
#include "app/synth.hpp"
#include "app/train.hpp"
#include "common/error.hpp"
#include "helpers.hpp"
#include "nd/gt01.hpp"
#include "prep/image.hpp"

namespace fs = std::filesystem;
using namespace gk;
using nlohmann::json;

namespace {

app::SyntheticSpec small_spec() {
  app::SyntheticSpec s;
  s.identities = 4;
  s.sequences = 3;
  s.frames = 12;
  s.noise = 0.01;
  s.seed = 5;
  return s;
}

// One generated, rendered and aligned corpus shared by the tests below.
const test::TempDir& corpus_dir() {
  static const test::TempDir dir("app-corpus");
  static const bool ready = [] {
    app::generate_synth(small_spec(), dir / "raw");
    app::render_skeleton_dir(dir / "raw/poses", dir / "ske", skel::RenderConfig{});
    app::preprocess_dir(dir / "raw/sils", dir / "sil");
    return true;
  }();
  (void)ready;
  return dir;
}

json tiny_config(const std::string& mode, const fs::path& out) {
  return {{"schema_version", 1},
          {"seed", 3},
          {"data", {{"silhouettes", (corpus_dir() / "sil").string()}, {"skeletons", (corpus_dir() / "ske").string()}}},
          {"model", {{"mode", mode}, {"channels", 4}, {"embed_dim", 8}, {"parts", 4}}},
          {"optim",
           {{"lr", 0.05}, {"total_steps", 4}, {"batch_p", 2}, {"batch_k", 2}, {"clip_len", 4}, {"log_every", 1}}},
          {"output", out.string()}};
}

app::Trainer make_trainer(const app::RunConfig& cfg) {
  const auto mode = net::model_config_from_json(cfg.model).mode;
  return app::Trainer(cfg, app::load_corpus(cfg.data, mode));
}

void require_same_params(net::Model& a, net::Model& b) {
  const auto& pa = a.state().params.params;
  const auto& pb = b.state().params.params;
  REQUIRE(pa.size() == pb.size());
  for (const auto& [name, v] : pa) {
    INFO(name);
    CHECK(std::ranges::equal(v.value().data(), pb.at(name).value().data()));
  }
}

}  // namespace

TEST_SUITE("app") {
  TEST_CASE("run config rejects unknown keys at every level") {
    test::TempDir tmp("cfg");
    const json base = tiny_config("deepgaitv2", tmp / "out");
    CHECK_NOTHROW(app::run_config_from_json(base, tmp.path()));
    for (const char* section : {"", "data", "optim"}) {
      json j = base;
      if (*section)
        j[section]["bogus"] = 1;
      else
        j["bogus"] = 1;
      CAPTURE(section);
      CHECK_THROWS_AS(app::run_config_from_json(j, tmp.path()), ArgumentError);
    }
    json j = base;
    j["eval"] = {{"probe_conditions", {"seq-02"}}, {"protocol", {{"probes", 1}}}};
    CHECK_THROWS_AS(app::run_config_from_json(j, tmp.path()), ArgumentError);
  }

  TEST_CASE("run config validation") {
    test::TempDir tmp("cfg");
    const json base = tiny_config("deepgaitv2", tmp / "out");
    auto bad = [&](const std::string& key, const json& v) {
      json j = base;
      j["optim"][key] = v;
      CAPTURE(key);
      CHECK_THROWS_AS(app::run_config_from_json(j, tmp.path()), ArgumentError);
    };
    bad("batch_p", 1);
    bad("batch_k", 1);
    bad("clip_len", 0);
    bad("lr", -0.1);
    bad("milestones", json::array({3, 2}));
    bad("milestones", json::array({4}));
    bad("mining", "hardest");
    bad("ce_kind", "focal");
    json j = base;
    j["schema_version"] = 2;
    CHECK_THROWS_AS(app::run_config_from_json(j, tmp.path()), ArgumentError);
    CHECK_THROWS_AS(app::load_run_config(tmp / "missing.json"), ArgumentError);
  }

  TEST_CASE("relative config paths resolve against the config directory") {
    test::TempDir tmp("cfg");
    json j = tiny_config("deepgaitv2", "run");
    j["data"] = {{"silhouettes", "sil"}};
    std::ofstream(tmp / "c.json") << j.dump();
    const auto c = app::load_run_config(tmp / "c.json");
    CHECK(c.data.silhouettes == tmp / "sil");
    CHECK(c.output == tmp / "run");
    CHECK(c.data.skeletons.empty());
    const auto again = app::run_config_from_json(app::to_json(c), "/elsewhere");
    CHECK(again.data.silhouettes == c.data.silhouettes);
    CHECK(again.optim.total_steps == c.optim.total_steps);
  }

  TEST_CASE("synthetic spec parsing") {
    CHECK_THROWS_AS(app::synth_spec_from_json({{"identities", 2}, {"colour", 1}}), ArgumentError);
    CHECK_THROWS_AS(app::synth_spec_from_json({{"noise", 0.5}}), ArgumentError);
    CHECK_THROWS_AS(app::synth_spec_from_json({{"modality", "depth"}}), ArgumentError);
    CHECK_THROWS_AS(app::synth_spec_from_json({{"identities", 0}}), ArgumentError);
    const auto s = small_spec();
    const auto r = app::synth_spec_from_json(app::to_json(s));
    CHECK(r.identities == s.identities);
    CHECK(r.frames == s.frames);
    CHECK(r.noise == s.noise);
    CHECK(r.seed == s.seed);
  }

  TEST_CASE("identities differ pairwise along every axis") {
    app::SyntheticSpec s;
    s.identities = 10;
    const auto ids = app::identity_params(s);
    REQUIRE(ids.size() == 10);
    auto axes = [](const app::WalkerParams& w) {
      return std::vector<double>{w.leg,       w.thigh_share, w.torso,     w.head,   w.shoulder, w.stride_deg,
                                 w.knee_deg,  w.arm_deg,     w.elbow_deg, w.period, w.bob};
    };
    for (std::size_t a = 0; a < ids.size(); ++a)
      for (std::size_t b = a + 1; b < ids.size(); ++b) {
        const auto x = axes(ids[a]), y = axes(ids[b]);
        for (std::size_t k = 0; k < x.size(); ++k) CHECK(x[k] != y[k]);
      }
  }

  TEST_CASE("noiseless sequences of one identity differ only by phase") {
    auto s = small_spec();
    s.noise = 0;
    const auto ids = app::identity_params(s);
    for (std::size_t id = 0; id < s.identities; ++id)
      for (std::size_t seq = 0; seq < s.sequences; ++seq) {
        const auto d = app::sequence_draw(s, id, seq, 0);
        const auto d0 = app::sequence_draw(s, id, 0, 0);
        CHECK(d.camera.scale == d0.camera.scale);
        CHECK(d.camera.dx == d0.camera.dx);
        CHECK(d.camera.dy == d0.camera.dy);
        CHECK(d.camera.yaw_deg == d0.camera.yaw_deg);
        const auto poses = app::synth_pose_sequence(s, ids, id, seq, 0);
        REQUIRE(poses.size() == s.frames);
        for (std::size_t t = 0; t < s.frames; ++t) {
          const auto ref = app::walker_pose(ids[id], d.camera, static_cast<double>(t) + d.phase, s);
          for (std::size_t j = 0; j < ref.keypoints.size(); ++j) {
            CHECK(poses[t].keypoints[j].x == ref.keypoints[j].x);
            CHECK(poses[t].keypoints[j].y == ref.keypoints[j].y);
            CHECK(poses[t].keypoints[j].c == ref.keypoints[j].c);
          }
        }
      }
  }

  TEST_CASE("synthetic generation is deterministic") {
    test::TempDir a("synth-a"), b("synth-b");
    auto s = small_spec();
    s.identities = 2;
    s.sequences = 2;
    s.frames = 5;
    app::generate_synth(s, a.path());
    app::generate_synth(s, b.path());
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), a.path());
      std::ifstream fa(e.path(), std::ios::binary), fb(b.path() / rel, std::ios::binary);
      const std::string sa{std::istreambuf_iterator<char>(fa), {}};
      const std::string sb{std::istreambuf_iterator<char>(fb), {}};
      CHECK_MESSAGE(sa == sb, rel.string());
      ++files;
    }
    CHECK(files == 1 + 2 * 2 + 2 * 2 * 5);
  }

  TEST_CASE("dataset directories agree on keys and frame counts") {
    const auto sil = prep::read_index(corpus_dir() / "sil");
    const auto ske = prep::read_index(corpus_dir() / "ske");
    CHECK(sil.entries.size() == 12);
    CHECK(ske.entries.size() == 12);
    for (std::size_t i = 0; i < sil.entries.size(); ++i) {
      CHECK(sil.entries[i].key == ske.entries[i].key);
      const auto t = nd::load_gt01<float>(corpus_dir() / "sil" / sil.entries[i].path);
      CHECK(t.shape() == nd::Shape{12, 64, 44});
      const auto m = nd::load_gt01<float>(corpus_dir() / "ske" / ske.entries[i].path);
      CHECK(m.shape() == nd::Shape{12, 2, 64, 44});
    }
  }

  TEST_CASE("command argument errors") {
    test::TempDir tmp("cmd");
    CHECK_THROWS_AS(app::render_skeleton_dir(tmp / "nope", tmp / "out", {}), ArgumentError);
    CHECK_THROWS_AS(app::preprocess_dir(tmp / "nope", tmp / "out"), ArgumentError);
    skel::RenderConfig bad;
    bad.sigma = 0;
    CHECK_THROWS_AS(app::render_skeleton_dir(corpus_dir() / "raw/poses", tmp / "out", bad), ArgumentError);
    CHECK_THROWS_AS(app::eval_cmd(tmp / "g", tmp / "p", tmp / "missing.json"), ArgumentError);
  }

  TEST_CASE("a corrupted silhouette is reported with its file name") {
    test::TempDir tmp("corrupt");
    fs::create_directories(tmp / "s/subject-000/seq-00/view-000");
    prep::GrayImage img(8, 8, 255);
    prep::write_pgm(tmp / "s/subject-000/seq-00/view-000/frame-0000.pgm", img);
    std::ofstream(tmp / "s/subject-000/seq-00/view-000/frame-0001.pgm") << "P5\n8 8\n255\nshort";
    try {
      app::preprocess_dir(tmp / "s", tmp / "out");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("frame-0001.pgm") != std::string::npos);
    }
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    test::TempDir tmp("lr0");
    json j = tiny_config("skeletongait", tmp / "out");
    j["optim"]["lr"] = 0.0;
    const auto cfg = app::run_config_from_json(j, tmp.path());
    auto tr = make_trainer(cfg);
    const net::ModelState before = tr.model().state();
    for (int i = 0; i < 2; ++i) tr.step();
    for (const auto& [name, v] : before.params.params) {
      INFO(name);
      CHECK(std::ranges::equal(tr.model().state().param(name).value().data(), v.value().data()));
    }
  }

  TEST_CASE("training is bit-identical across runs") {
    test::TempDir tmp("det");
    const auto cfg = app::run_config_from_json(tiny_config("skeletongait_pp", tmp / "out"), tmp.path());
    auto a = make_trainer(cfg);
    auto b = make_trainer(cfg);
    for (int i = 0; i < 3; ++i) {
      const auto la = a.step(), lb = b.step();
      CHECK(la.loss == lb.loss);
      CHECK(la.nonzero == lb.nonzero);
    }
    require_same_params(a.model(), b.model());
  }

  TEST_CASE("resuming reproduces the uninterrupted run") {
    test::TempDir tmp("resume");
    json j = tiny_config("deepgaitv2", tmp / "out");
    j["optim"]["milestones"] = {2};
    const auto cfg = app::run_config_from_json(j, tmp.path());
    auto full = make_trainer(cfg);
    auto part = make_trainer(cfg);
    for (int i = 0; i < 2; ++i) {
      full.step();
      part.step();
    }
    part.save(tmp / "ck");
    app::Trainer resumed(cfg, app::load_corpus(cfg.data, net::Mode::deepgaitv2), tmp / "ck");
    CHECK(resumed.steps_done() == 2);
    for (int i = 0; i < 2; ++i) {
      const auto a = full.step(), b = resumed.step();
      CHECK(a.step == b.step);
      CHECK(a.lr == b.lr);
      CHECK(a.loss == b.loss);
    }
    require_same_params(full.model(), resumed.model());
  }

  TEST_CASE("run_training writes logs, checkpoints and a report") {
    test::TempDir tmp("run");
    json j = tiny_config("skeletongait", tmp / "out");
    j["optim"]["milestones"] = {2};
    j["data"]["train_conditions"] = {"seq-00", "seq-01"};
    j["eval"] = {{"probe_conditions", {"seq-02"}}, {"gallery_conditions", {"seq-00", "seq-01"}}};
    const auto cfg = app::run_config_from_json(j, tmp.path());
    std::vector<long> seen;
    const auto r = app::run_training(cfg, std::nullopt, [&](const app::StepLog& s) { seen.push_back(s.step); });
    CHECK(seen == std::vector<long>{1, 2, 3, 4});
    CHECK(r.log.size() == 4);
    CHECK(r.log[2].lr == doctest::Approx(0.005));
    CHECK(fs::exists(tmp / "out/ckpt-2/manifest.json"));
    CHECK(fs::exists(tmp / "out/ckpt-final/manifest.json"));
    REQUIRE(r.report.has_value());
    CHECK(r.report->probes == 4);
    std::ifstream rep(tmp / "out/report.json");
    const auto parsed = eval::report_from_json(json::parse(rep));
    CHECK(parsed.rank == r.report->rank);

    // embed + eval through the command layer agree with the in-process report
    const auto ck = (tmp / "out/ckpt-final").string();
    app::embed_cmd(ck, "", corpus_dir() / "ske", {"seq-02"}, tmp / "probe");
    app::embed_cmd(ck, "", corpus_dir() / "ske", {"seq-00", "seq-01"}, tmp / "gallery");
    const auto ev = app::eval_cmd(tmp / "gallery", tmp / "probe", "");
    CHECK(ev.at("rank1").get<double>() == doctest::Approx(r.report->rank.at(1)));
    CHECK(ev.at("map").get<double>() == doctest::Approx(r.report->map));
  }

  TEST_CASE("models refuse datasets they cannot use") {
    test::TempDir tmp("need");
    json j = tiny_config("skeletongait_pp", tmp / "out");
    j["data"].erase("skeletons");
    const auto cfg = app::run_config_from_json(j, tmp.path());
    CHECK_THROWS_AS(app::load_corpus(cfg.data, net::Mode::skeletongait_pp), ArgumentError);
  }
}
