// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#include "core/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "core/rng.hpp"

namespace infinet {

void PhantomSpec::validate() const {
  require(num_classes == 4, ErrorKind::Config, "phantom: only 4 classes (BG/CSF/GM/WM) are supported");
  for (int i = 0; i < 3; ++i)
    require(dims[static_cast<size_t>(i)] > 0 && dims[static_cast<size_t>(i)] % 8 == 0, ErrorKind::Data,
            "phantom dims must be positive and divisible by 8, got " + std::to_string(dims[0]) + "x" +
                std::to_string(dims[1]) + "x" + std::to_string(dims[2]));
  require(radius_wm > 0 && radius_wm < radius_gm && radius_gm < radius_csf && radius_csf < 1.0,
          ErrorKind::Config, "phantom shell radii must satisfy 0 < wm < gm < csf < 1");
  require(noise_std >= 0 && bias_field_amplitude >= 0 && bias_field_amplitude < 1, ErrorKind::Config,
          "phantom noise/bias parameters out of range");
  for (double m : t1_means) require(m >= 0 && m <= 1, ErrorKind::Config, "t1 contrast means must be in [0,1]");
  for (double m : t2_means) require(m >= 0 && m <= 1, ErrorKind::Config, "t2 contrast means must be in [0,1]");

  if (noise_std > 0) {
    auto has_ambiguous_pair = [&](const std::array<double, 4>& means) {
      for (size_t a = 0; a < means.size(); ++a)
        for (size_t b = a + 1; b < means.size(); ++b)
          if (std::abs(means[a] - means[b]) < noise_std) return true;
      return false;
    };
    require(has_ambiguous_pair(t1_means), ErrorKind::Config,
            "phantom contrast: no iso-intense class pair in T1 (need |dmean| < noise_std)");
    require(has_ambiguous_pair(t2_means), ErrorKind::Config,
            "phantom contrast: no iso-intense class pair in T2 (need |dmean| < noise_std)");
    for (size_t a = 0; a < t1_means.size(); ++a)
      for (size_t b = a + 1; b < t1_means.size(); ++b) {
        const double d1 = t1_means[a] - t1_means[b];
        const double d2 = t2_means[a] - t2_means[b];
        require(std::sqrt(d1 * d1 + d2 * d2) >= 2.0 * noise_std, ErrorKind::Config,
                "phantom contrast: classes " + std::to_string(a) + " and " + std::to_string(b) +
                    " are not jointly separable");
      }
  }
}

namespace {

struct Wiggle {
  // Low-frequency separable sinusoid mixture over normalized coordinates.
  std::vector<std::array<double, 7>> modes;  // amp, fx, fy, fz, px, py, pz

  static Wiggle draw(Rng& rng, double amplitude, int64_t count) {
    Wiggle w;
    for (int64_t k = 0; k < count; ++k) {
      w.modes.push_back({amplitude / std::max<double>(1.0, static_cast<double>(count)),
                         rng.uniform(1.5, 4.5), rng.uniform(1.5, 4.5), rng.uniform(1.5, 4.5),
                         rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 2.0 * M_PI),
                         rng.uniform(0.0, 2.0 * M_PI)});
    }
    return w;
  }

  double at(double x, double y, double z) const {
    double s = 0.0;
    for (const auto& m : modes)
      s += m[0] * std::sin(m[1] * x + m[4]) * std::sin(m[2] * y + m[5]) * std::sin(m[3] * z + m[6]);
    return s;
  }
};

struct BiasField {
  double amplitude;
  std::array<double, 6> fp;  // fx, fy, fz, px, py, pz

  static BiasField draw(Rng& rng, double amplitude) {
    return {amplitude,
            {rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5),
             rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 2.0 * M_PI)}};
  }

  double at(double u, double v, double w) const {
    return 1.0 + amplitude * std::cos(M_PI * fp[0] * u + fp[3]) * std::cos(M_PI * fp[1] * v + fp[4]) *
                     std::cos(M_PI * fp[2] * w + fp[5]);
  }
};

}  // namespace

LabeledVolume generate_phantom(const PhantomSpec& spec, uint64_t seed) {
  spec.validate();

  Rng shape_rng(derive_seed(seed, 0));
  Rng noise1(derive_seed(seed, 1));
  Rng noise2(derive_seed(seed, 2));
  Rng bias_rng(derive_seed(seed, 3));

  const Dims3 d = spec.dims;
  std::array<double, 3> center;
  for (int i = 0; i < 3; ++i)
    center[static_cast<size_t>(i)] =
        0.5 * static_cast<double>(d[static_cast<size_t>(i)]) *
        (1.0 + spec.center_jitter * shape_rng.uniform(-1.0, 1.0));

  auto jittered = [&](double r) { return r * (1.0 + spec.radius_jitter * shape_rng.uniform(-1.0, 1.0)); };
  const double r_wm = jittered(spec.radius_wm);
  const double r_gm = std::max(jittered(spec.radius_gm), r_wm + 0.02);
  const double r_csf = std::max(jittered(spec.radius_csf), r_gm + 0.02);

  const Wiggle wiggle = Wiggle::draw(shape_rng, spec.wiggle_amplitude, spec.wiggle_modes);
  const BiasField bias1 = BiasField::draw(bias_rng, spec.bias_field_amplitude);
  const BiasField bias2 = BiasField::draw(bias_rng, spec.bias_field_amplitude);

  LabeledVolume vol;
  vol.dims = d;
  vol.voxel_size = spec.voxel_size;
  vol.num_classes = spec.num_classes;
  vol.seed = seed;
  vol.spec_id = spec.id;
  const int64_t n = grid_size(d);
  vol.t1.resize(static_cast<size_t>(n));
  vol.t2.resize(static_cast<size_t>(n));
  vol.labels.resize(static_cast<size_t>(n));

  std::array<int64_t, 4> counts{0, 0, 0, 0};
  int64_t i = 0;
  for (int64_t z = 0; z < d[0]; ++z)
    for (int64_t y = 0; y < d[1]; ++y)
      for (int64_t x = 0; x < d[2]; ++x, ++i) {
        const double qz = (static_cast<double>(z) - center[0]) / (0.5 * static_cast<double>(d[0]));
        const double qy = (static_cast<double>(y) - center[1]) / (0.5 * static_cast<double>(d[1]));
        const double qx = (static_cast<double>(x) - center[2]) / (0.5 * static_cast<double>(d[2]));
        const double rho = std::sqrt(qx * qx + qy * qy + qz * qz) + wiggle.at(qx, qy, qz);
        uint8_t label = 0;
        if (rho < r_wm)
          label = 3;
        else if (rho < r_gm)
          label = 2;
        else if (rho < r_csf)
          label = 1;
        vol.labels[static_cast<size_t>(i)] = label;
        ++counts[label];

        const double u = static_cast<double>(z) / static_cast<double>(d[0]);
        const double v = static_cast<double>(y) / static_cast<double>(d[1]);
        const double w = static_cast<double>(x) / static_cast<double>(d[2]);
        const double m1 = spec.t1_means[label] * bias1.at(u, v, w) + spec.noise_std * noise1.normal();
        const double m2 = spec.t2_means[label] * bias2.at(u, v, w) + spec.noise_std * noise2.normal();
        vol.t1[static_cast<size_t>(i)] = static_cast<float>(std::clamp(m1, 0.0, 1.0));
        vol.t2[static_cast<size_t>(i)] = static_cast<float>(std::clamp(m2, 0.0, 1.0));
      }

  for (int64_t c = 0; c < spec.num_classes; ++c)
    require(counts[static_cast<size_t>(c)] > 0, ErrorKind::Data,
            "phantom spec produced an empty class " + std::to_string(c) +
                " (adjust radii/jitter or dims)");
  return vol;
}

namespace {

std::vector<double> parse_doubles(const std::string& s, size_t expect, const std::string& key) {
  std::istringstream is(s);
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  require(out.size() == expect, ErrorKind::Config,
          "phantom spec: key '" + key + "' expects " + std::to_string(expect) + " numbers");
  return out;
}

}  // namespace

PhantomSpec PhantomSpec::parse(const std::string& text) {
  PhantomSpec spec;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::Config, "phantom spec: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "dims") {
        auto v = parse_doubles(val, 3, key);
        spec.dims = {static_cast<int64_t>(v[0]), static_cast<int64_t>(v[1]), static_cast<int64_t>(v[2])};
      } else if (key == "voxel_size") {
        auto v = parse_doubles(val, 3, key);
        spec.voxel_size = {v[0], v[1], v[2]};
      } else if (key == "num_classes") {
        spec.num_classes = std::stoll(val);
      } else if (key == "center_jitter") {
        spec.center_jitter = std::stod(val);
      } else if (key == "radius_wm") {
        spec.radius_wm = std::stod(val);
      } else if (key == "radius_gm") {
        spec.radius_gm = std::stod(val);
      } else if (key == "radius_csf") {
        spec.radius_csf = std::stod(val);
      } else if (key == "radius_jitter") {
        spec.radius_jitter = std::stod(val);
      } else if (key == "wiggle_amplitude") {
        spec.wiggle_amplitude = std::stod(val);
      } else if (key == "wiggle_modes") {
        spec.wiggle_modes = std::stoll(val);
      } else if (key == "noise_std") {
        spec.noise_std = std::stod(val);
      } else if (key == "bias_field_amplitude") {
        spec.bias_field_amplitude = std::stod(val);
      } else if (key == "t1_means") {
        auto v = parse_doubles(val, 4, key);
        std::copy(v.begin(), v.end(), spec.t1_means.begin());
      } else if (key == "t2_means") {
        auto v = parse_doubles(val, 4, key);
        std::copy(v.begin(), v.end(), spec.t2_means.begin());
      } else if (key == "id") {
        spec.id = val;
      } else {
        fail(ErrorKind::Config, "phantom spec: unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::Config, "phantom spec: malformed value for key '" + key + "'");
    } catch (const std::out_of_range&) {
      fail(ErrorKind::Config, "phantom spec: value out of range for key '" + key + "'");
    }
  }
  return spec;
}

std::string PhantomSpec::to_text() const {
  std::ostringstream os;
  os << "dims = " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
  os << "voxel_size = " << voxel_size[0] << " " << voxel_size[1] << " " << voxel_size[2] << "\n";
  os << "num_classes = " << num_classes << "\n";
  os << "center_jitter = " << center_jitter << "\n";
  os << "radius_wm = " << radius_wm << "\n";
  os << "radius_gm = " << radius_gm << "\n";
  os << "radius_csf = " << radius_csf << "\n";
  os << "radius_jitter = " << radius_jitter << "\n";
  os << "wiggle_amplitude = " << wiggle_amplitude << "\n";
  os << "wiggle_modes = " << wiggle_modes << "\n";
  os << "noise_std = " << noise_std << "\n";
  os << "bias_field_amplitude = " << bias_field_amplitude << "\n";
  os << "t1_means = " << t1_means[0] << " " << t1_means[1] << " " << t1_means[2] << " " << t1_means[3]
     << "\n";
  os << "t2_means = " << t2_means[0] << " " << t2_means[1] << " " << t2_means[2] << " " << t2_means[3]
     << "\n";
  os << "id = " << id << "\n";
  return os.str();
}

}  // namespace infinet
