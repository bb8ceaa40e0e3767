// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include "core/volume.hpp"

namespace infinet {

// Synthetic head phantom: concentric wavy tissue shells (WM core, GM shell,
// CSF rim, background) imaged in two modalities. The default contrast
// tables make GM and WM nearly iso-intense in T1 and CSF/GM nearly
// iso-intense in T2, while every class pair stays separable when both
// modalities are combined.
struct PhantomSpec {
  Dims3 dims{64, 64, 64};
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  int64_t num_classes = 4;

  double center_jitter = 0.04;   // fraction of each dim
  double radius_wm = 0.34;       // fractions of the normalized unit radius
  double radius_gm = 0.52;
  double radius_csf = 0.66;
  double radius_jitter = 0.05;   // relative jitter on each shell radius
  double wiggle_amplitude = 0.06;
  int64_t wiggle_modes = 3;

  double noise_std = 0.05;
  double bias_field_amplitude = 0.05;

  // Per-class mean intensity per modality: BG, CSF, GM, WM.
  std::array<double, 4> t1_means{0.02, 0.30, 0.60, 0.63};
  std::array<double, 4> t2_means{0.02, 0.72, 0.70, 0.35};

  std::string id = "default";

  void validate() const;
  static PhantomSpec parse(const std::string& text);  // key = value lines
  std::string to_text() const;
};

LabeledVolume generate_phantom(const PhantomSpec& spec, uint64_t seed);

}  // namespace infinet
