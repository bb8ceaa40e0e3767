// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/model.hpp"
#include "core/ops.hpp"
#include "core/volume.hpp"

namespace infinet {

struct TrainConfig {
  double lr0 = 0.01;
  double lr_decay_factor = 10.0;
  int64_t lr_decay_every = 10;
  double momentum = 0.95;
  int64_t batch_size = 8;
  int64_t max_epochs = 40;
  uint64_t seed = 1;
  Axis view_axis = Axis::Axial;
  std::string loss = "gdl";
  Arch arch = Arch::DualArm;
  int64_t base_channels = 64;
  int64_t depth = 3;
  int64_t num_classes = 4;
  // "Until convergence": stop when the mean epoch loss improves by less than
  // min_delta for patience consecutive epochs, or at max_epochs.
  double convergence_min_delta = 1e-4;
  int64_t convergence_patience = 10;

  void validate() const;
  static TrainConfig parse(const std::string& text);  // key = value lines
  std::string to_text() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
  std::vector<double> epoch_seconds;
  std::string checkpoint_path;
  std::vector<double> class_weights;
  int64_t epochs_run = 0;
  bool converged_early = false;

  std::string to_text() const;
  std::string to_json_text() const;
  void save(const std::string& path) const;  // machine-readable summary
};

// lr0 / decay_factor^floor(epoch / decay_every)
double lr_schedule(int64_t epoch, const TrainConfig& cfg);

// Frequencies pooled over all training labels; omega = 1/f^2, absent
// classes get omega = 0.
ClassWeights compute_class_weights(const std::vector<const LabeledVolume*>& volumes, int64_t num_classes);

// One training epoch's visit order: a seeded permutation of every
// (volume, slice) pair along the view axis.
std::vector<std::pair<int32_t, int32_t>> epoch_order(int64_t n_volumes, int64_t slices_per_volume,
                                                     uint64_t epoch_seed);

struct TrainResult {
  TrainReport report;
  std::unique_ptr<InfiNet<float>> model;
};

// Slice-wise training of one view. Writes a checkpoint after every epoch
// when checkpoint_path is non-empty. Pass `resume` to continue a run; the
// checkpoint carries optimizer velocity and running statistics, so the
// resumed loss sequence matches the uninterrupted one exactly.
TrainResult train(const std::vector<LabeledVolume>& volumes, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const LoadedCheckpoint* resume = nullptr);

struct ViewTrainResult {
  Axis axis;
  std::string checkpoint_path;
  TrainReport report;
};

// Three independent trainings with per-axis derived seeds. Checkpoints land
// in out_dir as infinet_<axis>.ckpt. With parallel=true the three runs
// execute on separate threads; results are identical either way.
std::vector<ViewTrainResult> train_all_views(const std::vector<LabeledVolume>& volumes,
                                             const TrainConfig& cfg, const std::string& out_dir,
                                             bool parallel = false);

}  // namespace infinet
