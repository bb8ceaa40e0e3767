// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#include "core/inference.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace infinet {

void ProbabilityVolume::validate() const {
  require(num_classes >= 2, ErrorKind::Data, "probability volume: num_classes must be >= 2");
  require(static_cast<int64_t>(data.size()) == num_classes * voxels(), ErrorKind::Data,
          "probability volume: payload does not match dims");
  const int64_t n = voxels();
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int64_t l = 0; l < num_classes; ++l) {
      const float v = data[static_cast<size_t>(l * n + i)];
      require(v >= 0.0f && v <= 1.0f, ErrorKind::Data, "probability outside [0,1]");
      s += static_cast<double>(v);
    }
    require(std::abs(s - 1.0) <= 1e-5, ErrorKind::Data, "per-voxel class sums must equal 1 within 1e-5");
  }
}

ProbabilityVolume segment_view(InfiNet<float>& model, const LabeledVolume& volume, Axis axis,
                               int64_t slice_batch) {
  volume.validate();
  require(slice_batch >= 1, ErrorKind::Config, "segment_view: slice_batch must be >= 1");
  const auto [rows, cols] = plane_dims(volume.dims, axis);
  const InfiNetConfig& cfg = model.config();
  require(cfg.input_height == rows && cfg.input_width == cols, ErrorKind::Data,
          "segment_view: checkpoint expects " + std::to_string(cfg.input_height) + "x" +
              std::to_string(cfg.input_width) + " slices but axis " + axis_name(axis) + " yields " +
              std::to_string(rows) + "x" + std::to_string(cols));
  require(cfg.num_classes >= volume.num_classes, ErrorKind::Data,
          "segment_view: model has fewer classes than the volume labels");

  ProbabilityVolume out;
  out.dims = volume.dims;
  out.num_classes = cfg.num_classes;
  out.data.assign(static_cast<size_t>(cfg.num_classes * grid_size(volume.dims)), 0.0f);

  const int64_t slices = axis_extent(volume.dims, axis);
  const int64_t pix = rows * cols;

  for (int64_t begin = 0; begin < slices; begin += slice_batch) {
    const int64_t end = std::min(slices, begin + slice_batch);
    const int64_t bsz = end - begin;
    std::vector<float> t1(static_cast<size_t>(bsz * pix)), t2(static_cast<size_t>(bsz * pix));
    for (int64_t b = 0; b < bsz; ++b) {
      const auto p1 = extract_plane(volume.t1, volume.dims, axis, begin + b);
      const auto p2 = extract_plane(volume.t2, volume.dims, axis, begin + b);
      std::copy(p1.begin(), p1.end(), t1.begin() + b * pix);
      std::copy(p2.begin(), p2.end(), t2.begin() + b * pix);
    }
    Tensor<float> probs =
        model.forward(Tensor<float>::from_data({bsz, 1, rows, cols}, std::move(t1)),
                      Tensor<float>::from_data({bsz, 1, rows, cols}, std::move(t2)), Mode::Eval);
    const auto& pd = probs.data();
    const int64_t D = volume.dims[0], H = volume.dims[1], W = volume.dims[2];
    for (int64_t b = 0; b < bsz; ++b) {
      const int64_t s = begin + b;
      for (int64_t l = 0; l < cfg.num_classes; ++l) {
        const float* plane = pd.data() + (b * cfg.num_classes + l) * pix;
        float* grid = out.data.data() + l * grid_size(volume.dims);
        switch (axis) {
          case Axis::Axial:
            std::memcpy(grid + s * H * W, plane, static_cast<size_t>(H * W) * sizeof(float));
            break;
          case Axis::Coronal:
            for (int64_t d = 0; d < D; ++d)
              std::memcpy(grid + (d * H + s) * W, plane + d * W, static_cast<size_t>(W) * sizeof(float));
            break;
          case Axis::Sagittal:
            for (int64_t d = 0; d < D; ++d)
              for (int64_t h = 0; h < H; ++h) grid[(d * H + h) * W + s] = plane[d * H + h];
            break;
        }
      }
    }
  }
  return out;
}

ProbabilityVolume aggregate_views(const std::vector<const ProbabilityVolume*>& views) {
  require(!views.empty(), ErrorKind::Data, "aggregate_views: no inputs");
  const ProbabilityVolume& first = *views.front();
  for (const auto* v : views) {
    require(v->dims == first.dims, ErrorKind::Shape, "aggregate_views: dims mismatch");
    require(v->num_classes == first.num_classes, ErrorKind::Shape,
            "aggregate_views: class count mismatch");
  }
  ProbabilityVolume out;
  out.dims = first.dims;
  out.num_classes = first.num_classes;
  out.data.resize(first.data.size());
  const double inv = 1.0 / static_cast<double>(views.size());
  for (size_t i = 0; i < out.data.size(); ++i) {
    double s = 0.0;
    for (const auto* v : views) s += static_cast<double>(v->data[i]);
    out.data[i] = static_cast<float>(s * inv);
  }
  return out;
}

ProbabilityVolume aggregate_views(const ProbabilityVolume& axial, const ProbabilityVolume& coronal,
                                  const ProbabilityVolume& sagittal) {
  return aggregate_views({&axial, &coronal, &sagittal});
}

LabelVolume argmax_labels(const ProbabilityVolume& p) {
  LabelVolume out;
  out.dims = p.dims;
  out.num_classes = p.num_classes;
  const int64_t n = p.voxels();
  out.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    float best_v = p.data[static_cast<size_t>(i)];
    for (int64_t l = 1; l < p.num_classes; ++l) {
      const float v = p.data[static_cast<size_t>(l * n + i)];
      if (v > best_v) {
        best_v = v;
        best = l;
      }
    }
    out.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return out;
}

double dice_score(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth, int64_t cls) {
  require(pred.size() == truth.size(), ErrorKind::Shape, "dice_score: mask size mismatch");
  int64_t p = 0, g = 0, both = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool in_p = pred[i] == cls;
    const bool in_g = truth[i] == cls;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;  // both masks empty
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

DiceReport dice_report(const LabelVolume& pred, const LabelVolume& truth) {
  require(pred.dims == truth.dims, ErrorKind::Shape, "dice_report: volume dims mismatch");
  const int64_t L = std::max(pred.num_classes, truth.num_classes);
  DiceReport report;
  report.num_classes = L;
  double sum = 0.0;
  for (int64_t l = 0; l < L; ++l) {
    report.per_class.push_back(dice_score(pred.labels, truth.labels, l));
    report.pred_voxels.push_back(std::count(pred.labels.begin(), pred.labels.end(), l));
    report.truth_voxels.push_back(std::count(truth.labels.begin(), truth.labels.end(), l));
    if (l > 0) sum += report.per_class.back();
  }
  report.mean_foreground = L > 1 ? sum / static_cast<double>(L - 1) : 0.0;
  return report;
}

namespace {

const char* kClassNames[4] = {"BG", "CSF", "GM", "WM"};

}  // namespace

std::string DiceReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(8) << "class" << std::right << std::setw(10) << "dice" << std::setw(12)
     << "pred_vox" << std::setw(12) << "truth_vox" << "\n";
  for (int64_t l = 0; l < num_classes; ++l) {
    std::string name = num_classes == 4 ? kClassNames[l] : "c" + std::to_string(l);
    os << std::left << std::setw(8) << name << std::right << std::setw(10) << std::fixed
       << std::setprecision(4) << per_class[static_cast<size_t>(l)] << std::setw(12)
       << pred_voxels[static_cast<size_t>(l)] << std::setw(12) << truth_voxels[static_cast<size_t>(l)]
       << "\n";
  }
  os << "mean (foreground): " << std::fixed << std::setprecision(4) << mean_foreground << "\n";
  return os.str();
}

std::string DiceReport::to_json_text() const {
  nlohmann::json j{{"num_classes", num_classes},
                   {"per_class", per_class},
                   {"mean_foreground", mean_foreground},
                   {"pred_voxels", pred_voxels},
                   {"truth_voxels", truth_voxels}};
  return j.dump(2);
}

void write_probability_volume(const ProbabilityVolume& p, const std::string& path) {
  require(static_cast<int64_t>(p.data.size()) == p.num_classes * p.voxels(), ErrorKind::Data,
          "probability volume payload does not match dims");
  std::ostringstream head;
  head << "IPRB1\n";
  head << "endian = little\n";
  head << "dims = " << p.dims[0] << " " << p.dims[1] << " " << p.dims[2] << "\n";
  head << "num_classes = " << p.num_classes << "\n";
  head << "dtype = f32\n";
  head << "axes = 0:axial 1:coronal 2:sagittal\n";
  head << "\n";
  std::string out = head.str();
  out.reserve(out.size() + p.data.size() * 4);
  for (float v : p.data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out.push_back(static_cast<char>(bits & 0xFF));
    out.push_back(static_cast<char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<char>((bits >> 24) & 0xFF));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(static_cast<bool>(f), ErrorKind::Io, "short write to '" + path + "'");
}

ProbabilityVolume read_probability_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string contents = buf.str();

  size_t pos = contents.find('\n');
  require(pos != std::string::npos && contents.substr(0, pos) == "IPRB1", ErrorKind::Version,
          path + ": bad magic (expected IPRB1)");
  ProbabilityVolume p;
  ++pos;
  while (true) {
    size_t eol = contents.find('\n', pos);
    require(eol != std::string::npos, ErrorKind::Data, path + ": header not terminated");
    std::string line = contents.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    std::istringstream is(line);
    std::string key, eq;
    is >> key >> eq;
    if (key == "dims")
      is >> p.dims[0] >> p.dims[1] >> p.dims[2];
    else if (key == "num_classes")
      is >> p.num_classes;
    else if (key == "endian") {
      std::string e;
      is >> e;
      require(e == "little", ErrorKind::Data, path + ": unsupported endianness");
    }
  }
  const int64_t n = p.num_classes * grid_size(p.dims);
  require(n > 0, ErrorKind::Data, path + ": missing dims or num_classes");
  require(contents.size() - pos >= static_cast<size_t>(n) * 4, ErrorKind::Data,
          path + ": truncated payload");
  p.data.resize(static_cast<size_t>(n));
  const char* c = contents.data() + pos;
  for (int64_t i = 0; i < n; ++i) {
    const auto b = reinterpret_cast<const unsigned char*>(c + 4 * i);
    uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                    (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    p.data[static_cast<size_t>(i)] = v;
  }
  return p;
}

}  // namespace infinet
