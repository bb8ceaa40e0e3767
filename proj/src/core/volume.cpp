// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#include "core/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace infinet {

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::Axial: return "axial";
    case Axis::Coronal: return "coronal";
    case Axis::Sagittal: return "sagittal";
  }
  return "?";
}

Axis parse_axis(const std::string& s) {
  if (s == "axial") return Axis::Axial;
  if (s == "coronal") return Axis::Coronal;
  if (s == "sagittal") return Axis::Sagittal;
  fail(ErrorKind::Config, "unknown axis '" + s + "' (expected axial|coronal|sagittal)");
}

int64_t axis_extent(const Dims3& dims, Axis axis) { return dims[static_cast<size_t>(axis)]; }

std::pair<int64_t, int64_t> plane_dims(const Dims3& dims, Axis axis) {
  switch (axis) {
    case Axis::Axial: return {dims[1], dims[2]};
    case Axis::Coronal: return {dims[0], dims[2]};
    case Axis::Sagittal: return {dims[0], dims[1]};
  }
  return {0, 0};
}

void LabeledVolume::validate() const {
  const int64_t n = grid_size(dims);
  require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::Data, "volume dims must be positive");
  require(static_cast<int64_t>(t1.size()) == n && static_cast<int64_t>(t2.size()) == n &&
              static_cast<int64_t>(labels.size()) == n,
          ErrorKind::Data, "volume fields must share dims (co-registration)");
  require(num_classes >= 2 && num_classes <= 255, ErrorKind::Data, "num_classes out of range");
  for (float v : t1)
    require(v >= 0.0f && v <= 1.0f, ErrorKind::Data, "t1 intensity outside [0,1]");
  for (float v : t2)
    require(v >= 0.0f && v <= 1.0f, ErrorKind::Data, "t2 intensity outside [0,1]");
  for (uint8_t l : labels)
    require(l < num_classes, ErrorKind::Data, "label value outside [0, num_classes)");
}

void LabelVolume::validate() const {
  require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::Data, "volume dims must be positive");
  require(static_cast<int64_t>(labels.size()) == grid_size(dims), ErrorKind::Data,
          "label payload does not match dims");
  for (uint8_t l : labels)
    require(l < num_classes, ErrorKind::Data, "label value outside [0, num_classes)");
}

SliceTriple extract_slice(const LabeledVolume& vol, Axis axis, int64_t index) {
  SliceTriple s;
  auto [rows, cols] = plane_dims(vol.dims, axis);
  s.rows = rows;
  s.cols = cols;
  s.t1 = extract_plane(vol.t1, vol.dims, axis, index);
  s.t2 = extract_plane(vol.t2, vol.dims, axis, index);
  s.labels = extract_plane(vol.labels, vol.dims, axis, index);
  return s;
}

std::vector<double> class_frequencies(const std::vector<uint8_t>& labels, int64_t num_classes) {
  std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
  for (uint8_t l : labels) {
    require(l < num_classes, ErrorKind::Data, "label value outside [0, num_classes)");
    ++counts[l];
  }
  std::vector<double> f(static_cast<size_t>(num_classes));
  const double total = static_cast<double>(labels.size());
  require(total > 0, ErrorKind::Data, "class_frequencies on empty label volume");
  for (size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(counts[i]) / total;
  return f;
}

namespace {

// All payloads are serialized byte-by-byte little endian, independent of the
// host.
void put_f32le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xFF));
  out.push_back(static_cast<char>((bits >> 8) & 0xFF));
  out.push_back(static_cast<char>((bits >> 16) & 0xFF));
  out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

float get_f32le(const char* p) {
  const auto b = reinterpret_cast<const unsigned char*>(p);
  uint32_t bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                  (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

struct Header {
  std::string magic;
  std::map<std::string, std::string> fields;
  size_t payload_offset = 0;
};

Header read_header(const std::string& path, const std::string& contents) {
  Header h;
  size_t pos = contents.find('\n');
  require(pos != std::string::npos, ErrorKind::Version, path + ": missing header");
  h.magic = contents.substr(0, pos);
  ++pos;
  while (true) {
    size_t eol = contents.find('\n', pos);
    require(eol != std::string::npos, ErrorKind::Data, path + ": header not terminated by blank line");
    std::string line = contents.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) break;
    size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Data, path + ": malformed header line '" + line + "'");
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    h.fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  h.payload_offset = pos;
  return h;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "short write to '" + path + "'");
}

Dims3 parse_dims(const std::string& path, const std::map<std::string, std::string>& fields) {
  auto it = fields.find("dims");
  require(it != fields.end(), ErrorKind::Data, path + ": header missing dims");
  std::istringstream is(it->second);
  Dims3 dims{0, 0, 0};
  is >> dims[0] >> dims[1] >> dims[2];
  require(!is.fail(), ErrorKind::Data, path + ": malformed dims");
  require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::Data, path + ": non-positive dims");
  require(dims[0] <= (1 << 20) && dims[1] <= (1 << 20) && dims[2] <= (1 << 20) &&
              dims[0] * dims[1] * dims[2] <= (int64_t(1) << 33),
          ErrorKind::Data, path + ": dims overflow sanity bound");
  return dims;
}

void check_endian(const std::string& path, const std::map<std::string, std::string>& fields) {
  auto it = fields.find("endian");
  if (it != fields.end())
    require(it->second == "little", ErrorKind::Data, path + ": unsupported endianness '" + it->second + "'");
}

uint64_t parse_u64(const std::map<std::string, std::string>& fields, const std::string& key, uint64_t dflt) {
  auto it = fields.find(key);
  if (it == fields.end()) return dflt;
  return std::stoull(it->second);
}

}  // namespace

void write_volume(const LabeledVolume& vol, const std::string& path) {
  vol.validate();
  std::ostringstream head;
  head << "IVOL1\n";
  head << "endian = little\n";
  head << "dims = " << vol.dims[0] << " " << vol.dims[1] << " " << vol.dims[2] << "\n";
  head << "voxel_size = " << vol.voxel_size[0] << " " << vol.voxel_size[1] << " " << vol.voxel_size[2]
       << "\n";
  head << "dtype = f32 f32 u8\n";
  head << "axes = 0:axial 1:coronal 2:sagittal\n";
  head << "num_classes = " << vol.num_classes << "\n";
  head << "seed = " << vol.seed << "\n";
  head << "spec_id = " << vol.spec_id << "\n";
  head << "\n";

  std::string out = head.str();
  out.reserve(out.size() + vol.t1.size() * 9);
  for (float v : vol.t1) put_f32le(out, v);
  for (float v : vol.t2) put_f32le(out, v);
  out.append(reinterpret_cast<const char*>(vol.labels.data()), vol.labels.size());
  spit(path, out);
}

LabeledVolume read_volume(const std::string& path) {
  const std::string contents = slurp(path);
  const Header h = read_header(path, contents);
  require(h.magic == "IVOL1", ErrorKind::Version,
          path + ": bad magic '" + h.magic + "' (expected IVOL1)");
  check_endian(path, h.fields);

  LabeledVolume vol;
  vol.dims = parse_dims(path, h.fields);
  if (auto it = h.fields.find("voxel_size"); it != h.fields.end()) {
    std::istringstream is(it->second);
    is >> vol.voxel_size[0] >> vol.voxel_size[1] >> vol.voxel_size[2];
    require(!is.fail(), ErrorKind::Data, path + ": malformed voxel_size");
  }
  vol.num_classes = static_cast<int64_t>(parse_u64(h.fields, "num_classes", 4));
  vol.seed = parse_u64(h.fields, "seed", 0);
  if (auto it = h.fields.find("spec_id"); it != h.fields.end()) vol.spec_id = it->second;

  const int64_t n = grid_size(vol.dims);
  const size_t need = static_cast<size_t>(n) * 9;
  require(contents.size() - h.payload_offset >= need, ErrorKind::Data,
          path + ": truncated payload (header dims inconsistent with file length)");
  const char* p = contents.data() + h.payload_offset;
  vol.t1.resize(static_cast<size_t>(n));
  vol.t2.resize(static_cast<size_t>(n));
  vol.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) vol.t1[static_cast<size_t>(i)] = get_f32le(p + 4 * i);
  p += 4 * n;
  for (int64_t i = 0; i < n; ++i) vol.t2[static_cast<size_t>(i)] = get_f32le(p + 4 * i);
  p += 4 * n;
  std::memcpy(vol.labels.data(), p, static_cast<size_t>(n));
  vol.validate();
  return vol;
}

void write_labels(const LabelVolume& vol, const std::string& path) {
  vol.validate();
  std::ostringstream head;
  head << "ILBL1\n";
  head << "endian = little\n";
  head << "dims = " << vol.dims[0] << " " << vol.dims[1] << " " << vol.dims[2] << "\n";
  head << "dtype = u8\n";
  head << "axes = 0:axial 1:coronal 2:sagittal\n";
  head << "num_classes = " << vol.num_classes << "\n";
  head << "seed = " << vol.seed << "\n";
  head << "\n";
  std::string out = head.str();
  out.append(reinterpret_cast<const char*>(vol.labels.data()), vol.labels.size());
  spit(path, out);
}

LabelVolume read_labels(const std::string& path) {
  const std::string contents = slurp(path);
  const Header h = read_header(path, contents);
  require(h.magic == "ILBL1", ErrorKind::Version,
          path + ": bad magic '" + h.magic + "' (expected ILBL1)");
  check_endian(path, h.fields);
  LabelVolume vol;
  vol.dims = parse_dims(path, h.fields);
  vol.num_classes = static_cast<int64_t>(parse_u64(h.fields, "num_classes", 4));
  vol.seed = parse_u64(h.fields, "seed", 0);
  const int64_t n = grid_size(vol.dims);
  require(contents.size() - h.payload_offset >= static_cast<size_t>(n), ErrorKind::Data,
          path + ": truncated payload (header dims inconsistent with file length)");
  vol.labels.resize(static_cast<size_t>(n));
  std::memcpy(vol.labels.data(), contents.data() + h.payload_offset, static_cast<size_t>(n));
  vol.validate();
  return vol;
}

LabelVolume read_labels_any(const std::string& path) {
  const std::string contents = slurp(path);
  const Header h = read_header(path, contents);
  if (h.magic == "ILBL1") return read_labels(path);
  if (h.magic == "IVOL1") {
    LabeledVolume vol = read_volume(path);
    LabelVolume out;
    out.dims = vol.dims;
    out.labels = std::move(vol.labels);
    out.num_classes = vol.num_classes;
    out.seed = vol.seed;
    return out;
  }
  fail(ErrorKind::Version, path + ": bad magic '" + h.magic + "' (expected IVOL1 or ILBL1)");
}

void write_pgm(const std::string& path, int64_t rows, int64_t cols, const std::vector<uint8_t>& pixels) {
  require(static_cast<int64_t>(pixels.size()) == rows * cols, ErrorKind::Shape,
          "pgm: pixel count does not match dims");
  std::ostringstream os;
  os << "P2\n" << cols << " " << rows << "\n255\n";
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      if (c) os << ' ';
      os << static_cast<int>(pixels[static_cast<size_t>(r * cols + c)]);
    }
    os << '\n';
  }
  spit(path, os.str());
}

namespace {

std::vector<uint8_t> intensity_to_gray(const std::vector<float>& plane) {
  std::vector<uint8_t> px(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) {
    const float v = std::clamp(plane[i], 0.0f, 1.0f);
    px[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  return px;
}

std::vector<uint8_t> labels_to_gray(const std::vector<uint8_t>& plane, int64_t num_classes) {
  std::vector<uint8_t> px(plane.size());
  const double scale = 255.0 / static_cast<double>(num_classes - 1);
  for (size_t i = 0; i < plane.size(); ++i)
    px[i] = static_cast<uint8_t>(std::lround(plane[i] * scale));
  return px;
}

std::string slice_name(const std::string& prefix, int64_t i) {
  std::ostringstream os;
  os << prefix << "_" << std::setw(4) << std::setfill('0') << i << ".pgm";
  return os.str();
}

}  // namespace

int64_t export_slices(const std::string& volume_path, Axis axis, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string contents = slurp(volume_path);
  const Header h = read_header(volume_path, contents);
  int64_t count = 0;
  if (h.magic == "IVOL1") {
    const LabeledVolume vol = read_volume(volume_path);
    count = axis_extent(vol.dims, axis);
    const auto [rows, cols] = plane_dims(vol.dims, axis);
    for (int64_t i = 0; i < count; ++i) {
      write_pgm(out_dir + "/" + slice_name("t1", i), rows, cols,
                intensity_to_gray(extract_plane(vol.t1, vol.dims, axis, i)));
      write_pgm(out_dir + "/" + slice_name("t2", i), rows, cols,
                intensity_to_gray(extract_plane(vol.t2, vol.dims, axis, i)));
      write_pgm(out_dir + "/" + slice_name("labels", i), rows, cols,
                labels_to_gray(extract_plane(vol.labels, vol.dims, axis, i), vol.num_classes));
    }
  } else if (h.magic == "ILBL1") {
    const LabelVolume vol = read_labels(volume_path);
    count = axis_extent(vol.dims, axis);
    const auto [rows, cols] = plane_dims(vol.dims, axis);
    for (int64_t i = 0; i < count; ++i)
      write_pgm(out_dir + "/" + slice_name("labels", i), rows, cols,
                labels_to_gray(extract_plane(vol.labels, vol.dims, axis, i), vol.num_classes));
  } else {
    fail(ErrorKind::Version, volume_path + ": bad magic '" + h.magic + "'");
  }
  return count;
}

}  // namespace infinet
