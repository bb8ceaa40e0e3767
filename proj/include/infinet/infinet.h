/* Copyright (c) 2026 InfiNet contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C API for the InfiNet segmentation library. All objects are opaque
 * handles; every call returns a status code and leaves a human-readable
 * message in a thread-local buffer readable via inf_last_error().
 */
#ifndef INFINET_INFINET_H
#define INFINET_INFINET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define INF_API __declspec(dllexport)
#else
#define INF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as process exit codes: 0 success, 1 usage error,
 * 2 data error, 3 numeric failure. */
typedef enum inf_status {
  INF_OK = 0,
  INF_ERR_USAGE = 1,
  INF_ERR_DATA = 2,
  INF_ERR_NUMERIC = 3
} inf_status;

INF_API const char* inf_version(void);

/* Message for the most recent failing call on this thread. */
INF_API const char* inf_last_error(void);

typedef struct inf_volume inf_volume;     /* two-modality labeled volume (.ivol) */
typedef struct inf_labelvol inf_labelvol; /* labels-only volume (.ilbl) */
typedef struct inf_probvol inf_probvol;   /* per-class probability volume */
typedef struct inf_model inf_model;       /* loaded checkpoint */

/* ---- phantom generation and volume I/O ---- */

/* spec_text holds "key = value" lines (NULL or empty for the default spec).
 * See the README for the key list. */
INF_API inf_status inf_phantom_generate(const char* spec_text, uint64_t seed, inf_volume** out);
INF_API inf_status inf_volume_read(const char* path, inf_volume** out);
INF_API inf_status inf_volume_write(const inf_volume* vol, const char* path);
INF_API void inf_volume_free(inf_volume* vol);
INF_API inf_status inf_volume_dims(const inf_volume* vol, int64_t dims[3]);
INF_API inf_status inf_volume_num_classes(const inf_volume* vol, int64_t* out);
/* Copies the ground-truth labels into a standalone label volume. */
INF_API inf_status inf_volume_labels(const inf_volume* vol, inf_labelvol** out);

INF_API inf_status inf_labelvol_read(const char* path, inf_labelvol** out); /* ILBL1 or IVOL1 */
INF_API inf_status inf_labelvol_write(const inf_labelvol* vol, const char* path);
INF_API void inf_labelvol_free(inf_labelvol* vol);
INF_API inf_status inf_labelvol_dims(const inf_labelvol* vol, int64_t dims[3]);

/* ---- training ---- */

/* config_text holds "key = value" lines mirroring the training
 * configuration (lr0, momentum, batch_size, ...). view overrides the
 * config's view_axis when non-NULL. Writes the checkpoint and, when
 * report_path is non-NULL, a JSON training report. */
INF_API inf_status inf_train(const char* config_text, const char* const* volume_paths, size_t n_volumes,
                             const char* view, const char* checkpoint_path, const char* report_path);

/* Trains axial, coronal and sagittal models with per-view derived seeds.
 * Checkpoints land in out_dir as infinet_<view>.ckpt plus report_<view>.json. */
INF_API inf_status inf_train_all_views(const char* config_text, const char* const* volume_paths,
                                       size_t n_volumes, const char* out_dir, int parallel);

/* Resume a checkpointed run (same config) up to the config's max_epochs. */
INF_API inf_status inf_train_resume(const char* config_text, const char* const* volume_paths,
                                    size_t n_volumes, const char* checkpoint_in,
                                    const char* checkpoint_out, const char* report_path);

/* ---- inference and evaluation ---- */

INF_API inf_status inf_model_load(const char* checkpoint_path, inf_model** out);
INF_API void inf_model_free(inf_model* model);
INF_API inf_status inf_model_view(const inf_model* model, char* buf, size_t bufsize);
INF_API inf_status inf_model_param_counts(const inf_model* model, uint64_t* trainable, uint64_t* total);

INF_API inf_status inf_segment_view(inf_model* model, const inf_volume* volume, const char* axis,
                                    inf_probvol** out);
INF_API inf_status inf_aggregate_views(const inf_probvol* const* views, size_t n_views, inf_probvol** out);
INF_API inf_status inf_probvol_write(const inf_probvol* p, const char* path);
INF_API void inf_probvol_free(inf_probvol* p);
INF_API inf_status inf_argmax_labels(const inf_probvol* p, inf_labelvol** out);

/* per_class must hold num_classes entries; num_classes must match the
 * volumes. mean_foreground excludes class 0. */
INF_API inf_status inf_dice_report(const inf_labelvol* pred, const inf_labelvol* truth,
                                   int32_t num_classes, double* per_class, double* mean_foreground);
/* Formatted Dice table + JSON, allocated with inf_string semantics. */
INF_API inf_status inf_dice_report_text(const inf_labelvol* pred, const inf_labelvol* truth,
                                        char** text, char** json_text);

/* ---- verification and export ---- */

/* op: "all" or one of conv2d, relu, batch_norm, max_pool_unpool, concat,
 * softmax, gdl_loss, infinet_gdl. Returns INF_ERR_NUMERIC when any check
 * exceeds the tolerance; *report_text carries one line per op either way. */
INF_API inf_status inf_grad_check(const char* op, int32_t trials, double tolerance, char** report_text);

INF_API void inf_string_free(char* s);

/* Writes one plain 8-bit PGM per slice along `axis` into out_dir.
 * volume_path may be .ivol (t1_/t2_/labels_ series) or .ilbl (labels_).
 * n_slices receives the per-series slice count. */
INF_API inf_status inf_export_slices(const char* volume_path, const char* axis, const char* out_dir,
                                     int64_t* n_slices);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* INFINET_INFINET_H */
