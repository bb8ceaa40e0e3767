// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "core/model.hpp"
#include "core/volume.hpp"

namespace infinet {

// Per-voxel per-class probability field, indexed [l][d][h][w].
struct ProbabilityVolume {
  Dims3 dims{0, 0, 0};
  int64_t num_classes = 0;
  std::vector<float> data;

  int64_t voxels() const { return grid_size(dims); }
  float at(int64_t l, int64_t d, int64_t h, int64_t w) const {
    return data[static_cast<size_t>(((l * dims[0] + d) * dims[1] + h) * dims[2] + w)];
  }
  void validate() const;
};

// Slice-wise whole-volume inference along one axis (eval mode). Slices are
// batched for speed; per-slice results are identical to standalone forward
// passes, so restacking is bit-exact.
ProbabilityVolume segment_view(InfiNet<float>& model, const LabeledVolume& volume, Axis axis,
                               int64_t slice_batch = 8);

// Voxelwise arithmetic mean. Inputs must agree in dims and class count;
// summation runs in double so the result is independent of argument order.
ProbabilityVolume aggregate_views(const std::vector<const ProbabilityVolume*>& views);
ProbabilityVolume aggregate_views(const ProbabilityVolume& axial, const ProbabilityVolume& coronal,
                                  const ProbabilityVolume& sagittal);

// Per-voxel argmax; ties break toward the lowest class index.
LabelVolume argmax_labels(const ProbabilityVolume& p);

// 2|P∩G| / (|P|+|G|); 1 when both masks are empty, 0 when exactly one is.
double dice_score(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth, int64_t cls);

struct DiceReport {
  int64_t num_classes = 0;
  std::vector<double> per_class;
  double mean_foreground = 0.0;  // background (class 0) excluded
  std::vector<int64_t> pred_voxels, truth_voxels;

  std::string to_text() const;
  std::string to_json_text() const;
};

DiceReport dice_report(const LabelVolume& pred, const LabelVolume& truth);

// ".iprb" probability dump: IPRB1 text header then f32 payload, class-major.
void write_probability_volume(const ProbabilityVolume& p, const std::string& path);
ProbabilityVolume read_probability_volume(const std::string& path);

}  // namespace infinet
