// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"

namespace infinet {

// Orientation convention, fixed and written into every volume header:
// axis 0 stacks axial slices (H x W), axis 1 coronal (D x W), axis 2
// sagittal (D x H). Grids are indexed [d][h][w].
enum class Axis { Axial = 0, Coronal = 1, Sagittal = 2 };

const char* axis_name(Axis a);
Axis parse_axis(const std::string& s);

using Dims3 = std::array<int64_t, 3>;

inline int64_t grid_size(const Dims3& d) { return d[0] * d[1] * d[2]; }

int64_t axis_extent(const Dims3& dims, Axis axis);
// (rows, cols) of a slice taken along `axis`.
std::pair<int64_t, int64_t> plane_dims(const Dims3& dims, Axis axis);

template <typename T>
std::vector<T> extract_plane(const std::vector<T>& grid, const Dims3& dims, Axis axis, int64_t index) {
  require(index >= 0 && index < axis_extent(dims, axis), ErrorKind::Data,
          "slice index " + std::to_string(index) + " out of range for axis " + axis_name(axis));
  const auto [rows, cols] = plane_dims(dims, axis);
  std::vector<T> out(static_cast<size_t>(rows * cols));
  const int64_t H = dims[1], W = dims[2];
  switch (axis) {
    case Axis::Axial:
      for (int64_t h = 0; h < rows; ++h)
        for (int64_t w = 0; w < cols; ++w) out[h * cols + w] = grid[(index * H + h) * W + w];
      break;
    case Axis::Coronal:
      for (int64_t d = 0; d < rows; ++d)
        for (int64_t w = 0; w < cols; ++w) out[d * cols + w] = grid[(d * H + index) * W + w];
      break;
    case Axis::Sagittal:
      for (int64_t d = 0; d < rows; ++d)
        for (int64_t h = 0; h < cols; ++h) out[d * cols + h] = grid[(d * H + h) * W + index];
      break;
  }
  return out;
}

template <typename T>
void insert_plane(std::vector<T>& grid, const Dims3& dims, Axis axis, int64_t index,
                  const std::vector<T>& plane) {
  const auto [rows, cols] = plane_dims(dims, axis);
  require(static_cast<int64_t>(plane.size()) == rows * cols, ErrorKind::Shape,
          "insert_plane: plane size does not match axis dims");
  require(index >= 0 && index < axis_extent(dims, axis), ErrorKind::Data,
          "slice index " + std::to_string(index) + " out of range for axis " + axis_name(axis));
  const int64_t H = dims[1], W = dims[2];
  switch (axis) {
    case Axis::Axial:
      for (int64_t h = 0; h < rows; ++h)
        for (int64_t w = 0; w < cols; ++w) grid[(index * H + h) * W + w] = plane[h * cols + w];
      break;
    case Axis::Coronal:
      for (int64_t d = 0; d < rows; ++d)
        for (int64_t w = 0; w < cols; ++w) grid[(d * H + index) * W + w] = plane[d * cols + w];
      break;
    case Axis::Sagittal:
      for (int64_t d = 0; d < rows; ++d)
        for (int64_t h = 0; h < cols; ++h) grid[(d * H + h) * W + index] = plane[d * cols + h];
      break;
  }
}

// Co-registered two-modality volume with integer labels.
struct LabeledVolume {
  Dims3 dims{0, 0, 0};
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};
  std::vector<float> t1, t2;   // intensities in [0,1]
  std::vector<uint8_t> labels;
  int64_t num_classes = 4;
  uint64_t seed = 0;
  std::string spec_id;

  void validate() const;
};

struct LabelVolume {
  Dims3 dims{0, 0, 0};
  std::vector<uint8_t> labels;
  int64_t num_classes = 4;
  uint64_t seed = 0;

  void validate() const;
};

struct SliceTriple {
  int64_t rows = 0, cols = 0;
  std::vector<float> t1, t2;
  std::vector<uint8_t> labels;
};

SliceTriple extract_slice(const LabeledVolume& vol, Axis axis, int64_t index);

// Exact voxel-count frequencies (sums to 1 up to division rounding).
std::vector<double> class_frequencies(const std::vector<uint8_t>& labels, int64_t num_classes);

// ".ivol": text header (magic IVOL1) terminated by a blank line, then raw
// little-endian payload t1 (f32), t2 (f32), labels (u8).
void write_volume(const LabeledVolume& vol, const std::string& path);
LabeledVolume read_volume(const std::string& path);

// Labels-only variant, magic ILBL1, u8 payload.
void write_labels(const LabelVolume& vol, const std::string& path);
LabelVolume read_labels(const std::string& path);

// Reads the label field of either an ILBL1 file or a full IVOL1 volume.
LabelVolume read_labels_any(const std::string& path);

// Plain 8-bit PGM (P2) slice export. For an .ivol input writes t1_/t2_/labels_
// series; for an .ilbl input only the labels series. Label values map to the
// fixed gray levels round(255 * l / (num_classes - 1)).
int64_t export_slices(const std::string& volume_path, Axis axis, const std::string& out_dir);

void write_pgm(const std::string& path, int64_t rows, int64_t cols, const std::vector<uint8_t>& pixels);

}  // namespace infinet
