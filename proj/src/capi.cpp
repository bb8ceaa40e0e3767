// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// extern-C surface over the core library. Handles are heap-allocated core
// objects; all exceptions are converted to status codes with the message
// parked in a thread-local buffer.
#include "infinet/infinet.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "core/checkpoint.hpp"
#include "core/inference.hpp"
#include "core/model.hpp"
#include "core/opchecks.hpp"
#include "core/phantom.hpp"
#include "core/training.hpp"
#include "core/volume.hpp"

using namespace infinet;

struct inf_volume {
  LabeledVolume v;
};
struct inf_labelvol {
  LabelVolume v;
};
struct inf_probvol {
  ProbabilityVolume v;
};
struct inf_model {
  LoadedCheckpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

inf_status status_of(const Error& e) {
  return e.kind() == ErrorKind::Numeric ? INF_ERR_NUMERIC : INF_ERR_DATA;
}

template <typename Fn>
inf_status guarded(Fn&& fn) {
  try {
    fn();
    return INF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return INF_ERR_DATA;
  } catch (...) {
    g_last_error = "unknown error";
    return INF_ERR_DATA;
  }
}

inf_status usage_error(const char* msg) {
  g_last_error = msg;
  return INF_ERR_USAGE;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<LabeledVolume> load_volumes(const char* const* paths, size_t n) {
  require(paths != nullptr && n > 0, ErrorKind::Data, "no training volumes supplied");
  std::vector<LabeledVolume> vols;
  for (size_t i = 0; i < n; ++i) vols.push_back(read_volume(paths[i]));
  return vols;
}

}  // namespace

extern "C" {

const char* inf_version(void) { return "1.0.0"; }

const char* inf_last_error(void) { return g_last_error.c_str(); }

inf_status inf_phantom_generate(const char* spec_text, uint64_t seed, inf_volume** out) {
  if (!out) return usage_error("inf_phantom_generate: out is NULL");
  return guarded([&] {
    PhantomSpec spec = (spec_text && *spec_text) ? PhantomSpec::parse(spec_text) : PhantomSpec{};
    auto* handle = new inf_volume{generate_phantom(spec, seed)};
    *out = handle;
  });
}

inf_status inf_volume_read(const char* path, inf_volume** out) {
  if (!path || !out) return usage_error("inf_volume_read: NULL argument");
  return guarded([&] { *out = new inf_volume{read_volume(path)}; });
}

inf_status inf_volume_write(const inf_volume* vol, const char* path) {
  if (!vol || !path) return usage_error("inf_volume_write: NULL argument");
  return guarded([&] { write_volume(vol->v, path); });
}

void inf_volume_free(inf_volume* vol) { delete vol; }

inf_status inf_volume_dims(const inf_volume* vol, int64_t dims[3]) {
  if (!vol || !dims) return usage_error("inf_volume_dims: NULL argument");
  dims[0] = vol->v.dims[0];
  dims[1] = vol->v.dims[1];
  dims[2] = vol->v.dims[2];
  return INF_OK;
}

inf_status inf_volume_num_classes(const inf_volume* vol, int64_t* out) {
  if (!vol || !out) return usage_error("inf_volume_num_classes: NULL argument");
  *out = vol->v.num_classes;
  return INF_OK;
}

inf_status inf_volume_labels(const inf_volume* vol, inf_labelvol** out) {
  if (!vol || !out) return usage_error("inf_volume_labels: NULL argument");
  return guarded([&] {
    LabelVolume lv;
    lv.dims = vol->v.dims;
    lv.labels = vol->v.labels;
    lv.num_classes = vol->v.num_classes;
    lv.seed = vol->v.seed;
    *out = new inf_labelvol{std::move(lv)};
  });
}

inf_status inf_labelvol_read(const char* path, inf_labelvol** out) {
  if (!path || !out) return usage_error("inf_labelvol_read: NULL argument");
  return guarded([&] { *out = new inf_labelvol{read_labels_any(path)}; });
}

inf_status inf_labelvol_write(const inf_labelvol* vol, const char* path) {
  if (!vol || !path) return usage_error("inf_labelvol_write: NULL argument");
  return guarded([&] { write_labels(vol->v, path); });
}

void inf_labelvol_free(inf_labelvol* vol) { delete vol; }

inf_status inf_labelvol_dims(const inf_labelvol* vol, int64_t dims[3]) {
  if (!vol || !dims) return usage_error("inf_labelvol_dims: NULL argument");
  dims[0] = vol->v.dims[0];
  dims[1] = vol->v.dims[1];
  dims[2] = vol->v.dims[2];
  return INF_OK;
}

inf_status inf_train(const char* config_text, const char* const* volume_paths, size_t n_volumes,
                     const char* view, const char* checkpoint_path, const char* report_path) {
  if (!checkpoint_path) return usage_error("inf_train: checkpoint_path is NULL");
  return guarded([&] {
    TrainConfig cfg = TrainConfig::parse(config_text ? config_text : "");
    if (view && *view) cfg.view_axis = parse_axis(view);
    auto volumes = load_volumes(volume_paths, n_volumes);
    TrainResult r = train(volumes, cfg, checkpoint_path);
    if (report_path && *report_path) r.report.save(report_path);
  });
}

inf_status inf_train_all_views(const char* config_text, const char* const* volume_paths, size_t n_volumes,
                               const char* out_dir, int parallel) {
  if (!out_dir) return usage_error("inf_train_all_views: out_dir is NULL");
  return guarded([&] {
    TrainConfig cfg = TrainConfig::parse(config_text ? config_text : "");
    auto volumes = load_volumes(volume_paths, n_volumes);
    train_all_views(volumes, cfg, out_dir, parallel != 0);
  });
}

inf_status inf_train_resume(const char* config_text, const char* const* volume_paths, size_t n_volumes,
                            const char* checkpoint_in, const char* checkpoint_out,
                            const char* report_path) {
  if (!checkpoint_in || !checkpoint_out) return usage_error("inf_train_resume: NULL checkpoint path");
  return guarded([&] {
    TrainConfig cfg = TrainConfig::parse(config_text ? config_text : "");
    auto volumes = load_volumes(volume_paths, n_volumes);
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_in);
    if (!ckpt.meta.view.empty()) cfg.view_axis = parse_axis(ckpt.meta.view);
    TrainResult r = train(volumes, cfg, checkpoint_out, &ckpt);
    if (report_path && *report_path) r.report.save(report_path);
  });
}

inf_status inf_model_load(const char* checkpoint_path, inf_model** out) {
  if (!checkpoint_path || !out) return usage_error("inf_model_load: NULL argument");
  return guarded([&] { *out = new inf_model{load_checkpoint(checkpoint_path)}; });
}

void inf_model_free(inf_model* model) { delete model; }

inf_status inf_model_view(const inf_model* model, char* buf, size_t bufsize) {
  if (!model || !buf || bufsize == 0) return usage_error("inf_model_view: NULL argument");
  std::snprintf(buf, bufsize, "%s", model->ckpt.meta.view.c_str());
  return INF_OK;
}

inf_status inf_model_param_counts(const inf_model* model, uint64_t* trainable, uint64_t* total) {
  if (!model || !trainable || !total) return usage_error("inf_model_param_counts: NULL argument");
  return guarded([&] {
    auto [t, tot] = model->ckpt.model->count_parameters();
    *trainable = static_cast<uint64_t>(t);
    *total = static_cast<uint64_t>(tot);
  });
}

inf_status inf_segment_view(inf_model* model, const inf_volume* volume, const char* axis,
                            inf_probvol** out) {
  if (!model || !volume || !axis || !out) return usage_error("inf_segment_view: NULL argument");
  return guarded([&] {
    *out = new inf_probvol{segment_view(*model->ckpt.model, volume->v, parse_axis(axis))};
  });
}

inf_status inf_aggregate_views(const inf_probvol* const* views, size_t n_views, inf_probvol** out) {
  if (!views || n_views == 0 || !out) return usage_error("inf_aggregate_views: NULL argument");
  return guarded([&] {
    std::vector<const ProbabilityVolume*> vs;
    for (size_t i = 0; i < n_views; ++i) {
      require(views[i] != nullptr, ErrorKind::Data, "aggregate: NULL view");
      vs.push_back(&views[i]->v);
    }
    *out = new inf_probvol{aggregate_views(vs)};
  });
}

inf_status inf_probvol_write(const inf_probvol* p, const char* path) {
  if (!p || !path) return usage_error("inf_probvol_write: NULL argument");
  return guarded([&] { write_probability_volume(p->v, path); });
}

void inf_probvol_free(inf_probvol* p) { delete p; }

inf_status inf_argmax_labels(const inf_probvol* p, inf_labelvol** out) {
  if (!p || !out) return usage_error("inf_argmax_labels: NULL argument");
  return guarded([&] { *out = new inf_labelvol{argmax_labels(p->v)}; });
}

inf_status inf_dice_report(const inf_labelvol* pred, const inf_labelvol* truth, int32_t num_classes,
                           double* per_class, double* mean_foreground) {
  if (!pred || !truth || !per_class || !mean_foreground)
    return usage_error("inf_dice_report: NULL argument");
  return guarded([&] {
    DiceReport r = dice_report(pred->v, truth->v);
    require(r.num_classes == num_classes, ErrorKind::Data,
            "dice report: class count " + std::to_string(r.num_classes) + " does not match requested " +
                std::to_string(num_classes));
    for (int32_t l = 0; l < num_classes; ++l) per_class[l] = r.per_class[static_cast<size_t>(l)];
    *mean_foreground = r.mean_foreground;
  });
}

inf_status inf_dice_report_text(const inf_labelvol* pred, const inf_labelvol* truth, char** text,
                                char** json_text) {
  if (!pred || !truth) return usage_error("inf_dice_report_text: NULL argument");
  return guarded([&] {
    DiceReport r = dice_report(pred->v, truth->v);
    if (text) *text = dup_string(r.to_text());
    if (json_text) *json_text = dup_string(r.to_json_text());
  });
}

inf_status inf_grad_check(const char* op, int32_t trials, double tolerance, char** report_text) {
  if (!op) return usage_error("inf_grad_check: op is NULL");
  try {
    auto results = run_op_gradient_checks(op, trials, tolerance);
    if (report_text) *report_text = dup_string(format_opcheck_report(results));
    if (!opchecks_all_passed(results)) {
      g_last_error = "gradient check failed (max relative error above tolerance)";
      return INF_ERR_NUMERIC;
    }
    return INF_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return INF_ERR_DATA;
  }
}

void inf_string_free(char* s) { std::free(s); }

inf_status inf_export_slices(const char* volume_path, const char* axis, const char* out_dir,
                             int64_t* n_slices) {
  if (!volume_path || !axis || !out_dir) return usage_error("inf_export_slices: NULL argument");
  return guarded([&] {
    const int64_t n = export_slices(volume_path, parse_axis(axis), out_dir);
    if (n_slices) *n_slices = n;
  });
}

}  // extern "C"
