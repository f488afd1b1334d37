// SPDX-License-Identifier: Apache-2.0
// Command-line front end; talks to the library only through the C API.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "gaitkit/gaitkit.h"

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

int finish(gk_status s, char*& out) {
  if (s != GK_OK) {
    std::cerr << "gaitkit: " << gk_status_name(s) << " error: " << gk_last_error() << '\n';
    return s == GK_ERR_ARGUMENT ? kExitUsage : kExitData;
  }
  if (out) std::cout << out << '\n';
  gk_string_free(out);
  out = nullptr;
  return 0;
}

const char* or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gait recognition toolkit: skeleton maps, silhouettes, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gk_version());

  std::string poses, out, sils, spec, config, resume, checkpoint, skes, gallery, probe, protocol, only, perturb;
  double sigma = 8.0, height = 64.0, factor = 2.0;
  bool no_center = false;
  std::size_t cases = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> conditions;

  auto* render = app.add_subcommand("render-skeleton", "render pose JSONL files into skeleton-map tensors");
  render->add_option("--poses", poses, "pose directory")->required();
  render->add_option("--out", out, "output directory")->required();
  render->add_option("--sigma", sigma, "Gaussian width")->capture_default_str();
  render->add_option("--height", height, "normalized body height")->capture_default_str();
  render->add_flag("--no-center", no_center, "keep normalized coordinates at the canvas corner");

  auto* pre = app.add_subcommand("preprocess", "align silhouette PGM sequences to 64x44 tensors");
  pre->add_option("--sils", sils, "silhouette directory")->required();
  pre->add_option("--out", out, "output directory")->required();

  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic walker corpus");
  gen->add_option("--spec", spec, "synthetic spec JSON")->required();
  gen->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train-toy", "train a model from a run config");
  train->add_option("--config", config, "run config JSON")->required();
  train->add_option("--resume", resume, "checkpoint directory to continue from");

  auto* embed = app.add_subcommand("embed", "compute whole-sequence embeddings with a checkpoint");
  embed->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  embed->add_option("--silhouettes", sils, "preprocessed silhouette directory");
  embed->add_option("--skeletons", skes, "rendered skeleton directory");
  embed->add_option("--conditions", conditions, "restrict to these conditions")->delimiter(',');
  embed->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "rank probe embeddings against a gallery");
  ev->add_option("--gallery", gallery, "gallery embedding directory")->required();
  ev->add_option("--probe", probe, "probe embedding directory")->required();
  ev->add_option("--protocol", protocol, "protocol JSON")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward rule");
  gc->add_option("--cases", cases, "random cases per check")->capture_default_str();
  gc->add_option("--seed", seed, "case seed")->capture_default_str();
  gc->add_option("--only", only, "run one check");
  gc->add_option("--perturb-backward", perturb, "test hook: scale this primitive's upstream gradient")
      ->group("");
  gc->add_option("--perturb-factor", factor, "scale used with --perturb-backward")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  char* result = nullptr;
  if (*render) {
    gk_render_options o;
    gk_render_options_default(&o);
    o.sigma = sigma;
    o.height = height;
    o.center_on_canvas = no_center ? 0 : 1;
    return finish(gk_render_skeleton_dir(poses.c_str(), out.c_str(), &o, &result), result);
  }
  if (*pre) return finish(gk_preprocess_dir(sils.c_str(), out.c_str(), &result), result);
  if (*gen) return finish(gk_gen_synth(spec.c_str(), out.c_str(), &result), result);
  if (*train) return finish(gk_train(config.c_str(), or_null(resume), &result), result);
  if (*embed) {
    std::vector<const char*> c;
    for (const auto& s : conditions) c.push_back(s.c_str());
    return finish(
        gk_embed(checkpoint.c_str(), or_null(sils), or_null(skes), c.data(), c.size(), out.c_str(), &result),
        result);
  }
  if (*ev) return finish(gk_eval(gallery.c_str(), probe.c_str(), protocol.c_str(), &result), result);
  if (*gc) {
    if (!perturb.empty()) {
      if (const gk_status s = gk_debug_perturb_backward(perturb.c_str(), factor); s != GK_OK) return finish(s, result);
    }
    int passed = 0;
    const gk_status s = gk_gradcheck(cases, seed, or_null(only), &result, &passed);
    if (s != GK_OK) return finish(s, result);
    const auto report = nlohmann::json::parse(result);
    gk_string_free(result);
    for (const auto& c : report.at("checks")) {
      const double err = c.at("max_rel_error").is_null() ? INFINITY : c.at("max_rel_error").get<double>();
      std::printf("%-28s %-4s max_rel_error=%.3e cases=%zu\n", c.at("name").get<std::string>().c_str(),
                  c.at("passed").get<bool>() ? "ok" : "FAIL", err, c.at("cases").get<std::size_t>());
    }
    std::printf("gradcheck %s (tolerance %.0e)\n", passed ? "passed" : "FAILED", report.at("tolerance").get<double>());
    return passed ? 0 : kExitData;
  }
  return kExitUsage;
}
