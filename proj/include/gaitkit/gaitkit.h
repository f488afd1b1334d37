/* SPDX-License-Identifier: Apache-2.0 */
#ifndef GAITKIT_GAITKIT_H
#define GAITKIT_GAITKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(GAITKIT_BUILDING)
#define GAITKIT_API __attribute__((visibility("default")))
#else
#define GAITKIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every fallible call returns a status; on failure gk_last_error() holds a
 * message for the calling thread until its next failing call. */
typedef enum gk_status {
  GK_OK = 0,
  GK_ERR_ARGUMENT = 1, /* bad argument, flag or config value */
  GK_ERR_SHAPE = 2,    /* tensor extents do not line up */
  GK_ERR_CONTRACT = 3, /* operation precondition violated */
  GK_ERR_DATA = 4,     /* input data rejected */
  GK_ERR_IO = 5,       /* file missing, unreadable or malformed */
  GK_ERR_INTERNAL = 6
} gk_status;

GAITKIT_API const char* gk_last_error(void);
GAITKIT_API const char* gk_version(void);
GAITKIT_API const char* gk_status_name(gk_status s);

/* Strings returned through char** out-parameters are owned by the caller. */
GAITKIT_API void gk_string_free(char* s);

/* ---- tensors (GT01 files) ---- */

typedef struct gk_tensor gk_tensor;

enum { GK_DTYPE_F32 = 0, GK_DTYPE_F64 = 1 };

GAITKIT_API gk_status gk_tensor_load(const char* path, gk_tensor** out);
GAITKIT_API gk_status gk_tensor_save(const gk_tensor* t, const char* path);
GAITKIT_API gk_status gk_tensor_from_f32(const size_t* shape, size_t rank, const float* data, gk_tensor** out);
GAITKIT_API int gk_tensor_dtype(const gk_tensor* t);
GAITKIT_API size_t gk_tensor_rank(const gk_tensor* t);
GAITKIT_API size_t gk_tensor_numel(const gk_tensor* t);
/* Copies min(rank, cap) extents. */
GAITKIT_API gk_status gk_tensor_shape(const gk_tensor* t, size_t* dims, size_t cap);
/* Converts to double; `n` must equal numel. */
GAITKIT_API gk_status gk_tensor_copy_f64(const gk_tensor* t, double* out, size_t n);
GAITKIT_API void gk_tensor_free(gk_tensor* t);

/* ---- pipelines; each writes a JSON summary to *summary (may be NULL) ---- */

typedef struct gk_render_options {
  double sigma;         /* Gaussian width, > 0 */
  double height;        /* normalized body height H; canvas is 2H */
  int center_on_canvas; /* nonzero: shift the body box into the canvas middle */
} gk_render_options;

GAITKIT_API void gk_render_options_default(gk_render_options* o);

GAITKIT_API gk_status gk_render_skeleton_dir(const char* poses_dir, const char* out_dir, const gk_render_options* o,
                                             char** summary);
GAITKIT_API gk_status gk_preprocess_dir(const char* sils_dir, const char* out_dir, char** summary);
GAITKIT_API gk_status gk_gen_synth(const char* spec_file, const char* out_dir, char** summary);
/* resume_checkpoint may be NULL. */
GAITKIT_API gk_status gk_train(const char* config_file, const char* resume_checkpoint, char** summary);
/* Either dataset directory may be NULL when the model does not use it. */
GAITKIT_API gk_status gk_embed(const char* checkpoint, const char* silhouettes_dir, const char* skeletons_dir,
                               const char* const* conditions, size_t n_conditions, const char* out_dir,
                               char** summary);
/* protocol_file may be NULL for the default protocol. */
GAITKIT_API gk_status gk_eval(const char* gallery_dir, const char* probe_dir, const char* protocol_file,
                              char** report);
/* only may be NULL to run every check; *passed is set to 1 when all pass. */
GAITKIT_API gk_status gk_gradcheck(size_t cases, uint64_t seed, const char* only, char** report, int* passed);

/* Test hook: scale the upstream gradient of every node of the named primitive
 * before its backward rule runs. NULL restores normal operation. */
GAITKIT_API gk_status gk_debug_perturb_backward(const char* op_name, double factor);

/* ---- trained models ---- */

typedef struct gk_model gk_model;

GAITKIT_API gk_status gk_model_load(const char* checkpoint_dir, gk_model** out);
/* Clips are [T, C, H, W]; pass NULL for a modality the model does not use.
 * Returns the [parts, dim] retrieval embedding of the whole clip. */
GAITKIT_API gk_status gk_model_embed(gk_model* m, const gk_tensor* silhouette, const gk_tensor* skeleton,
                                     gk_tensor** embedding);
GAITKIT_API size_t gk_model_parameter_count(const gk_model* m);
GAITKIT_API void gk_model_free(gk_model* m);

#ifdef __cplusplus
}
#endif

#endif /* GAITKIT_GAITKIT_H */
