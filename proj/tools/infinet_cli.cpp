// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Talks to the library exclusively through the C
// API in infinet/infinet.h. Exit codes: 0 success, 1 usage, 2 data error,
// 3 numeric failure.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "infinet/infinet.h"

namespace fs = std::filesystem;

namespace {

int fail_with(inf_status st) {
  std::cerr << "error: " << inf_last_error() << "\n";
  return static_cast<int>(st);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open '" << path << "'\n";
    std::exit(2);
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> collect_ivols(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    std::cerr << "error: data directory '" << dir << "' does not exist\n";
    std::exit(2);
  }
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ivol") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    std::cerr << "error: no .ivol volumes in '" << dir << "'\n";
    std::exit(2);
  }
  return paths;
}

std::vector<const char*> as_cstrs(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

int cmd_gen_phantom(const std::string& spec_path, const std::vector<int64_t>& dims, uint64_t seed,
                    const std::string& out) {
  std::string spec_text = spec_path.empty() ? std::string() : read_text_file(spec_path);
  if (!dims.empty()) {
    std::ostringstream os;
    os << spec_text << "\ndims = " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
    spec_text = os.str();
  }
  inf_volume* vol = nullptr;
  if (inf_status st = inf_phantom_generate(spec_text.c_str(), seed, &vol); st != INF_OK)
    return fail_with(st);
  inf_status st = inf_volume_write(vol, out.c_str());
  inf_volume_free(vol);
  if (st != INF_OK) return fail_with(st);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& view,
              const std::string& out_dir, const std::string& resume, const std::string& overrides,
              bool parallel_views) {
  std::string config_text = config_path.empty() ? std::string() : read_text_file(config_path);
  config_text += "\n" + overrides;

  const auto paths = collect_ivols(data_dir);
  const auto cpaths = as_cstrs(paths);
  fs::create_directories(out_dir);

  if (view == "all") {
    if (!resume.empty()) {
      std::cerr << "error: --resume is only supported with a single view\n";
      return 1;
    }
    if (inf_status st = inf_train_all_views(config_text.c_str(), cpaths.data(), cpaths.size(),
                                            out_dir.c_str(), parallel_views ? 1 : 0);
        st != INF_OK)
      return fail_with(st);
    for (const char* v : {"axial", "coronal", "sagittal"})
      std::cout << "wrote " << out_dir << "/infinet_" << v << ".ckpt\n";
    return 0;
  }

  const std::string ckpt = out_dir + "/infinet_" + view + ".ckpt";
  const std::string report = out_dir + "/report_" + view + ".json";
  inf_status st;
  if (!resume.empty())
    st = inf_train_resume(config_text.c_str(), cpaths.data(), cpaths.size(), resume.c_str(),
                          ckpt.c_str(), report.c_str());
  else
    st = inf_train(config_text.c_str(), cpaths.data(), cpaths.size(), view.c_str(), ckpt.c_str(),
                   report.c_str());
  if (st != INF_OK) return fail_with(st);
  std::cout << "wrote " << ckpt << "\n" << "wrote " << report << "\n";
  return 0;
}

int cmd_infer(const std::vector<std::string>& checkpoints, const std::string& volume_path,
              const std::string& out, const std::string& dump_probs) {
  if (checkpoints.size() != 1 && checkpoints.size() != 3) {
    std::cerr << "error: supply one checkpoint (single-view) or three (view aggregation)\n";
    return 1;
  }
  if (checkpoints.size() == 1)
    std::cerr << "warning: single checkpoint supplied, running single-view mode without aggregation\n";

  inf_volume* vol = nullptr;
  if (inf_status st = inf_volume_read(volume_path.c_str(), &vol); st != INF_OK) return fail_with(st);

  std::vector<inf_probvol*> probs;
  std::vector<inf_model*> models;
  auto cleanup = [&] {
    for (auto* p : probs) inf_probvol_free(p);
    for (auto* m : models) inf_model_free(m);
    inf_volume_free(vol);
  };

  for (const auto& cp : checkpoints) {
    inf_model* model = nullptr;
    if (inf_status st = inf_model_load(cp.c_str(), &model); st != INF_OK) {
      cleanup();
      return fail_with(st);
    }
    models.push_back(model);
    char view[32] = {0};
    inf_model_view(model, view, sizeof view);
    if (view[0] == '\0') {
      std::cerr << "error: checkpoint '" << cp << "' does not record a view axis\n";
      cleanup();
      return 2;
    }
    inf_probvol* p = nullptr;
    if (inf_status st = inf_segment_view(model, vol, view, &p); st != INF_OK) {
      cleanup();
      return fail_with(st);
    }
    probs.push_back(p);
    if (!dump_probs.empty()) {
      fs::create_directories(dump_probs);
      const std::string path = dump_probs + "/probs_" + view + ".iprb";
      if (inf_status st = inf_probvol_write(p, path.c_str()); st != INF_OK) {
        cleanup();
        return fail_with(st);
      }
      std::cout << "wrote " << path << "\n";
    }
  }

  inf_probvol* agg = nullptr;
  std::vector<const inf_probvol*> views(probs.begin(), probs.end());
  if (inf_status st = inf_aggregate_views(views.data(), views.size(), &agg); st != INF_OK) {
    cleanup();
    return fail_with(st);
  }
  inf_labelvol* labels = nullptr;
  inf_status st = inf_argmax_labels(agg, &labels);
  if (st == INF_OK) st = inf_labelvol_write(labels, out.c_str());
  inf_labelvol_free(labels);
  inf_probvol_free(agg);
  cleanup();
  if (st != INF_OK) return fail_with(st);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path, const std::string& json_out) {
  inf_labelvol *pred = nullptr, *truth = nullptr;
  if (inf_status st = inf_labelvol_read(pred_path.c_str(), &pred); st != INF_OK) return fail_with(st);
  if (inf_status st = inf_labelvol_read(truth_path.c_str(), &truth); st != INF_OK) {
    inf_labelvol_free(pred);
    return fail_with(st);
  }
  char *text = nullptr, *json_text = nullptr;
  inf_status st = inf_dice_report_text(pred, truth, &text, &json_text);
  if (st == INF_OK) {
    std::cout << text;
    if (!json_out.empty()) {
      std::ofstream out(json_out, std::ios::trunc);
      out << json_text << "\n";
      if (!out) {
        std::cerr << "error: cannot write '" << json_out << "'\n";
        st = INF_ERR_DATA;
      }
    }
  }
  inf_string_free(text);
  inf_string_free(json_text);
  inf_labelvol_free(pred);
  inf_labelvol_free(truth);
  return st == INF_OK ? 0 : fail_with(st);
}

int cmd_grad_check(const std::string& op, int trials, double tolerance) {
  char* report = nullptr;
  inf_status st = inf_grad_check(op.c_str(), trials, tolerance, &report);
  if (report) {
    std::cout << report;
    inf_string_free(report);
  }
  if (st == INF_OK) {
    std::cout << "all gradient checks passed (tolerance " << tolerance << ")\n";
    return 0;
  }
  return fail_with(st);
}

int cmd_export_slices(const std::string& volume_path, const std::string& axis, const std::string& out_dir) {
  int64_t n = 0;
  if (inf_status st = inf_export_slices(volume_path.c_str(), axis.c_str(), out_dir.c_str(), &n);
      st != INF_OK)
    return fail_with(st);
  std::cout << "wrote " << n << " slices per series to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"InfiNet: multi-modal encoder-decoder volumetric segmentation"};
  app.require_subcommand(1);

  // gen-phantom
  std::string gp_spec, gp_out;
  std::vector<int64_t> gp_dims;
  uint64_t gp_seed = 1;
  auto* gen = app.add_subcommand("gen-phantom", "Generate a synthetic two-modality labeled volume");
  gen->add_option("--spec", gp_spec, "Phantom spec file (key = value)");
  gen->add_option("--dims", gp_dims, "Override dims (D H W)")->expected(3);
  gen->add_option("--seed", gp_seed, "RNG seed");
  gen->add_option("--out", gp_out, "Output .ivol path")->required();

  // train
  std::string tr_config, tr_data, tr_view = "axial", tr_out = ".", tr_resume, tr_arch;
  uint64_t tr_seed = 0;
  bool tr_has_seed = false, tr_parallel = false;
  int64_t tr_epochs = -1, tr_batch = -1, tr_base = -1;
  double tr_lr0 = -1, tr_momentum = -1;
  auto* tr = app.add_subcommand("train", "Train one model per view (paper defaults)");
  tr->add_option("--config", tr_config, "Training config file (key = value)");
  tr->add_option("--data-dir", tr_data, "Directory of .ivol training volumes")->required();
  tr->add_option("--view", tr_view, "axial|coronal|sagittal|all")
      ->check(CLI::IsMember({"axial", "coronal", "sagittal", "all"}));
  tr->add_option("--out", tr_out, "Output directory for checkpoints/reports");
  tr->add_option("--resume", tr_resume, "Resume from checkpoint (single view only)");
  tr->add_option("--seed", tr_seed, "Override seed")->each([&](const std::string&) { tr_has_seed = true; });
  tr->add_option("--max-epochs", tr_epochs, "Override max_epochs");
  tr->add_option("--batch-size", tr_batch, "Override batch_size");
  tr->add_option("--base-channels", tr_base, "Override base_channels");
  tr->add_option("--lr0", tr_lr0, "Override initial learning rate");
  tr->add_option("--momentum", tr_momentum, "Override momentum");
  tr->add_option("--arch", tr_arch, "dual|single encoder arms")
      ->check(CLI::IsMember({"dual", "single"}));
  tr->add_flag("--parallel-views", tr_parallel, "Train the three views concurrently");

  // infer
  std::vector<std::string> in_ckpts;
  std::string in_volume, in_out, in_dump;
  auto* in = app.add_subcommand("infer", "Slice-wise inference with view aggregation");
  in->add_option("--checkpoint", in_ckpts, "Checkpoint path (repeat for three views)")->required();
  in->add_option("--volume", in_volume, "Input .ivol volume")->required();
  in->add_option("--out", in_out, "Output .ilbl label volume")->required();
  in->add_option("--dump-probs", in_dump, "Directory for per-view probability dumps");

  // evaluate
  std::string ev_pred, ev_truth, ev_json;
  auto* ev = app.add_subcommand("evaluate", "Dice report between predicted and true labels");
  ev->add_option("--pred", ev_pred, "Predicted labels (.ilbl or .ivol)")->required();
  ev->add_option("--truth", ev_truth, "Ground-truth labels (.ilbl or .ivol)")->required();
  ev->add_option("--json", ev_json, "Write the report as JSON to this path");

  // grad-check
  std::string gc_op = "all";
  int gc_trials = 3;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference verification of every op");
  gc->add_option("--op", gc_op, "Op name or 'all'");
  gc->add_option("--trials", gc_trials, "Trials per op");
  gc->add_option("--tolerance", gc_tol, "Max relative error");

  // export-slices
  std::string ex_volume, ex_axis = "axial", ex_out;
  auto* ex = app.add_subcommand("export-slices", "Export slices as plain PGM images");
  ex->add_option("--volume", ex_volume, "Input .ivol or .ilbl")->required();
  ex->add_option("--axis", ex_axis, "axial|coronal|sagittal")
      ->check(CLI::IsMember({"axial", "coronal", "sagittal"}));
  ex->add_option("--out-dir", ex_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (gen->parsed()) return cmd_gen_phantom(gp_spec, gp_dims, gp_seed, gp_out);
  if (tr->parsed()) {
    std::ostringstream ov;
    if (tr_has_seed) ov << "seed = " << tr_seed << "\n";
    if (tr_epochs >= 0) ov << "max_epochs = " << tr_epochs << "\n";
    if (tr_batch >= 0) ov << "batch_size = " << tr_batch << "\n";
    if (tr_base >= 0) ov << "base_channels = " << tr_base << "\n";
    if (tr_lr0 >= 0) ov << "lr0 = " << tr_lr0 << "\n";
    if (tr_momentum >= 0) ov << "momentum = " << tr_momentum << "\n";
    if (!tr_arch.empty()) ov << "arch = " << tr_arch << "\n";
    return cmd_train(tr_config, tr_data, tr_view, tr_out, tr_resume, ov.str(), tr_parallel);
  }
  if (in->parsed()) return cmd_infer(in_ckpts, in_volume, in_out, in_dump);
  if (ev->parsed()) return cmd_evaluate(ev_pred, ev_truth, ev_json);
  if (gc->parsed()) return cmd_grad_check(gc_op, gc_trials, gc_tol);
  if (ex->parsed()) return cmd_export_slices(ex_volume, ex_axis, ex_out);
  return 1;
}
