// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/model.hpp"
#include "core/volume.hpp"

namespace infinet {

// Checkpoint file: one line "INFINET1 <manifest_bytes>", a JSON manifest
// (magic, config, tensor names/shapes/offsets, epoch, seed, loss history),
// then all tensors as little-endian f32 in canonical parameter order.
// Optimizer velocity and batch-norm running statistics ride along so that a
// resumed run reproduces the uninterrupted one exactly.
struct CheckpointMeta {
  InfiNetConfig config;
  Arch arch = Arch::DualArm;
  std::string view;  // axial|coronal|sagittal or empty
  int64_t epoch = 0;
  uint64_t seed = 0;
  std::vector<double> loss_history;
  std::vector<double> class_weights;
};

void save_checkpoint(const std::string& path, InfiNet<float>& model, const CheckpointMeta& meta,
                     const std::vector<std::vector<float>>* velocity = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<InfiNet<float>> model;
  CheckpointMeta meta;
  std::vector<std::vector<float>> velocity;  // empty when not saved
  bool has_velocity = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace infinet
