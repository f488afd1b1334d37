// SPDX-License-Identifier: Apache-2.0
#include "gaitkit/gaitkit.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <json.hpp>
#include <new>
#include <string>

#include "app/commands.hpp"
#include "app/train.hpp"
#include "common/error.hpp"
#include "net/checkpoint.hpp"
#include "nd/gt01.hpp"

struct gk_tensor {
  gk::nd::AnyTensor t;
};

struct gk_model {
  std::unique_ptr<gk::net::Model> model;
};

namespace {

thread_local std::string g_last_error;

gk_status status_of(gk::ErrorKind k) {
  switch (k) {
    case gk::ErrorKind::argument: return GK_ERR_ARGUMENT;
    case gk::ErrorKind::shape: return GK_ERR_SHAPE;
    case gk::ErrorKind::contract: return GK_ERR_CONTRACT;
    case gk::ErrorKind::data: return GK_ERR_DATA;
    case gk::ErrorKind::io: return GK_ERR_IO;
  }
  return GK_ERR_INTERNAL;
}

gk_status fail(gk_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
gk_status guarded(F&& f) {
  try {
    f();
    return GK_OK;
  } catch (const gk::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(GK_ERR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(GK_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(GK_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(GK_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void emit(char** out, const nlohmann::json& j) {
  if (out) *out = dup_string(j.dump(1));
}

std::string need(const char* s, const char* what) {
  if (!s || !*s) throw gk::ArgumentError(std::string(what) + " is required");
  return s;
}

std::filesystem::path opt_path(const char* s) { return s ? std::filesystem::path(s) : std::filesystem::path(); }

}  // namespace

extern "C" {

const char* gk_last_error(void) { return g_last_error.c_str(); }
const char* gk_version(void) { return "0.1.0"; }

const char* gk_status_name(gk_status s) {
  switch (s) {
    case GK_OK: return "ok";
    case GK_ERR_ARGUMENT: return "argument";
    case GK_ERR_SHAPE: return "shape";
    case GK_ERR_CONTRACT: return "contract";
    case GK_ERR_DATA: return "data";
    case GK_ERR_IO: return "io";
    case GK_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void gk_string_free(char* s) { std::free(s); }

gk_status gk_tensor_load(const char* path, gk_tensor** out) {
  return guarded([&] {
    if (!out) throw gk::ArgumentError("out is NULL");
    *out = new gk_tensor{gk::nd::load_gt01_any(need(path, "path"))};
  });
}

gk_status gk_tensor_save(const gk_tensor* t, const char* path) {
  return guarded([&] {
    if (!t) throw gk::ArgumentError("tensor is NULL");
    const std::string p = need(path, "path");
    std::visit([&](const auto& v) { gk::nd::save_gt01(p, v); }, t->t);
  });
}

gk_status gk_tensor_from_f32(const size_t* shape, size_t rank, const float* data, gk_tensor** out) {
  return guarded([&] {
    if (!out || (rank && !shape) || !data) throw gk::ArgumentError("NULL argument");
    gk::nd::Shape s(shape, shape + rank);
    const std::size_t n = gk::nd::numel(s);
    *out = new gk_tensor{gk::nd::TensorF(s, std::vector<float>(data, data + n))};
  });
}

int gk_tensor_dtype(const gk_tensor* t) { return t && t->t.index() == 1 ? GK_DTYPE_F64 : GK_DTYPE_F32; }

size_t gk_tensor_rank(const gk_tensor* t) {
  return t ? std::visit([](const auto& v) { return v.rank(); }, t->t) : 0;
}

size_t gk_tensor_numel(const gk_tensor* t) {
  return t ? std::visit([](const auto& v) { return v.numel(); }, t->t) : 0;
}

gk_status gk_tensor_shape(const gk_tensor* t, size_t* dims, size_t cap) {
  return guarded([&] {
    if (!t || (cap && !dims)) throw gk::ArgumentError("NULL argument");
    const auto& s = gk::nd::shape_of(t->t);
    for (std::size_t i = 0; i < s.size() && i < cap; ++i) dims[i] = s[i];
  });
}

gk_status gk_tensor_copy_f64(const gk_tensor* t, double* out, size_t n) {
  return guarded([&] {
    if (!t || !out) throw gk::ArgumentError("NULL argument");
    std::visit(
        [&](const auto& v) {
          if (v.numel() != n) throw gk::ShapeError("buffer holds " + std::to_string(n) + " values, tensor has " +
                                                   std::to_string(v.numel()));
          for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(v[i]);
        },
        t->t);
  });
}

void gk_tensor_free(gk_tensor* t) { delete t; }

void gk_render_options_default(gk_render_options* o) {
  if (!o) return;
  const gk::skel::RenderConfig c;
  o->sigma = c.sigma;
  o->height = c.height;
  o->center_on_canvas = c.center_on_canvas ? 1 : 0;
}

gk_status gk_render_skeleton_dir(const char* poses_dir, const char* out_dir, const gk_render_options* o,
                                 char** summary) {
  return guarded([&] {
    gk::skel::RenderConfig c;
    if (o) {
      c.sigma = o->sigma;
      c.height = o->height;
      c.center_on_canvas = o->center_on_canvas != 0;
      if (!(c.height >= 8) || c.height != std::floor(c.height) || static_cast<long>(c.height) % 2)
        throw gk::ArgumentError("height must be an even integer of at least 8");
      c.canvas = static_cast<std::size_t>(2 * c.height);
      c.resize = static_cast<std::size_t>(c.height);
      c.side_cut = static_cast<std::size_t>(c.height) * 10 / 64;
    }
    emit(summary, gk::app::render_skeleton_dir(need(poses_dir, "poses directory"), need(out_dir, "output directory"), c));
  });
}

gk_status gk_preprocess_dir(const char* sils_dir, const char* out_dir, char** summary) {
  return guarded([&] {
    emit(summary, gk::app::preprocess_dir(need(sils_dir, "silhouette directory"), need(out_dir, "output directory")));
  });
}

gk_status gk_gen_synth(const char* spec_file, const char* out_dir, char** summary) {
  return guarded(
      [&] { emit(summary, gk::app::gen_synth_cmd(need(spec_file, "spec file"), need(out_dir, "output directory"))); });
}

gk_status gk_train(const char* config_file, const char* resume_checkpoint, char** summary) {
  return guarded([&] {
    std::optional<std::filesystem::path> resume;
    if (resume_checkpoint && *resume_checkpoint) resume = resume_checkpoint;
    emit(summary, gk::app::train_cmd(need(config_file, "config file"), resume));
  });
}

gk_status gk_embed(const char* checkpoint, const char* silhouettes_dir, const char* skeletons_dir,
                   const char* const* conditions, size_t n_conditions, const char* out_dir, char** summary) {
  return guarded([&] {
    std::vector<std::string> conds;
    for (std::size_t i = 0; i < n_conditions; ++i) conds.emplace_back(need(conditions[i], "condition"));
    emit(summary, gk::app::embed_cmd(need(checkpoint, "checkpoint"), opt_path(silhouettes_dir),
                                     opt_path(skeletons_dir), conds, need(out_dir, "output directory")));
  });
}

gk_status gk_eval(const char* gallery_dir, const char* probe_dir, const char* protocol_file, char** report) {
  return guarded([&] {
    emit(report, gk::app::eval_cmd(need(gallery_dir, "gallery directory"), need(probe_dir, "probe directory"),
                                   opt_path(protocol_file)));
  });
}

gk_status gk_gradcheck(size_t cases, uint64_t seed, const char* only, char** report, int* passed) {
  return guarded([&] {
    if (cases == 0) throw gk::ArgumentError("cases must be positive");
    std::optional<std::string> o;
    if (only && *only) o = only;
    const auto j = gk::app::gradcheck_cmd(cases, seed, o);
    if (passed) *passed = j.at("passed").get<bool>() ? 1 : 0;
    emit(report, j);
  });
}

gk_status gk_debug_perturb_backward(const char* op_name, double factor) {
  return guarded([&] {
    if (!op_name) {
      gk::nd::debug::set_backward_perturbation(std::nullopt);
      return;
    }
    const auto op = gk::nd::op_from_name(op_name);
    if (!op) throw gk::ArgumentError(std::string("unknown primitive '") + op_name + "'");
    gk::nd::debug::set_backward_perturbation(*op, factor);
  });
}

gk_status gk_model_load(const char* checkpoint_dir, gk_model** out) {
  return guarded([&] {
    if (!out) throw gk::ArgumentError("out is NULL");
    auto ck = gk::net::load_checkpoint(need(checkpoint_dir, "checkpoint directory"));
    *out = new gk_model{std::move(ck.model)};
  });
}

gk_status gk_model_embed(gk_model* m, const gk_tensor* silhouette, const gk_tensor* skeleton, gk_tensor** embedding) {
  return guarded([&] {
    if (!m || !embedding) throw gk::ArgumentError("NULL argument");
    gk::app::Corpus c;
    gk::app::Corpus::Item item;
    auto as_f32 = [](const gk_tensor* t) {
      return std::visit([](const auto& v) { return v.template cast<float>(); }, t->t);
    };
    if (silhouette) item.silhouette = as_f32(silhouette);
    if (skeleton) item.skeleton = as_f32(skeleton);
    if (!silhouette && !skeleton) throw gk::ArgumentError("no input clip");
    c.items.push_back(std::move(item));
    const auto set = gk::app::embed_corpus(*m->model, c);
    const auto& v = set.items.front().values;
    std::vector<float> f(v.begin(), v.end());
    *embedding = new gk_tensor{gk::nd::TensorF({set.parts, set.dim}, std::move(f))};
  });
}

size_t gk_model_parameter_count(const gk_model* m) { return m ? m->model->parameter_count() : 0; }

void gk_model_free(gk_model* m) { delete m; }

}  // extern "C"
