// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#include "core/checkpoint.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace infinet {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "INFINET1";
constexpr int kFormatVersion = 1;

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

json config_to_json(const InfiNetConfig& c) {
  return json{{"num_classes", c.num_classes},   {"base_channels", c.base_channels},
              {"depth", c.depth},               {"input_height", c.input_height},
              {"input_width", c.input_width},   {"modalities", c.modalities}};
}

InfiNetConfig config_from_json(const json& j) {
  InfiNetConfig c;
  c.num_classes = j.at("num_classes").get<int64_t>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.depth = j.at("depth").get<int64_t>();
  c.input_height = j.at("input_height").get<int64_t>();
  c.input_width = j.at("input_width").get<int64_t>();
  c.modalities = j.at("modalities").get<int64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, InfiNet<float>& model, const CheckpointMeta& meta,
                     const std::vector<std::vector<float>>* velocity) {
  json tensors = json::array();
  std::string payload;
  int64_t offset = 0;

  auto append = [&](const std::string& name, const std::string& kind, const std::vector<int64_t>& shape,
                    const std::vector<float>& data) {
    tensors.push_back(json{{"name", name},
                           {"kind", kind},
                           {"shape", shape},
                           {"offset", offset},
                           {"size", static_cast<int64_t>(data.size())}});
    for (float v : data) put_f32le(payload, v);
    offset += static_cast<int64_t>(data.size());
  };

  for (auto& p : model.parameters()) {
    const Shape4 s = p.tensor.shape();
    append(p.name, "param", {s.n, s.c, s.h, s.w}, p.tensor.data());
  }
  for (auto& [name, buf] : model.buffers()) append(name, "buffer", {static_cast<int64_t>(buf->size())}, *buf);
  if (velocity) {
    require(velocity->size() == model.parameters().size(), ErrorKind::Config,
            "checkpoint: velocity count does not match parameter count");
    for (size_t i = 0; i < velocity->size(); ++i)
      append("velocity/" + model.parameters()[i].name, "velocity",
             {static_cast<int64_t>((*velocity)[i].size())}, (*velocity)[i]);
  }

  json manifest{{"magic", kMagic},
                {"format_version", kFormatVersion},
                {"arch", arch_name(model.arch())},
                {"config", config_to_json(meta.config)},
                {"view", meta.view},
                {"epoch", meta.epoch},
                {"seed", meta.seed},
                {"loss_history", meta.loss_history},
                {"class_weights", meta.class_weights},
                {"tensors", tensors}};
  const std::string mtext = manifest.dump();

  std::ostringstream os;
  os << kMagic << " " << mtext.size() << "\n" << mtext << "\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write checkpoint '" + path + "'");
    const std::string head = os.str();
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "short write to checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string contents = buf.str();

  const size_t eol = contents.find('\n');
  require(eol != std::string::npos, ErrorKind::Version, path + ": not a checkpoint file");
  const std::string first = contents.substr(0, eol);
  require(first.size() > std::strlen(kMagic) && first.compare(0, std::strlen(kMagic), kMagic) == 0,
          ErrorKind::Version, path + ": bad magic (expected " + std::string(kMagic) + ")");

  size_t manifest_len = 0;
  try {
    manifest_len = std::stoull(first.substr(std::strlen(kMagic) + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::Version, path + ": malformed checkpoint header line");
  }
  require(eol + 1 + manifest_len + 1 <= contents.size(), ErrorKind::Data,
          path + ": truncated manifest");

  json manifest;
  try {
    manifest = json::parse(contents.substr(eol + 1, manifest_len));
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path + ": manifest parse failure: " + e.what());
  }
  require(manifest.value("magic", "") == kMagic, ErrorKind::Version, path + ": manifest magic mismatch");
  require(manifest.value("format_version", -1) == kFormatVersion, ErrorKind::Version,
          path + ": unsupported checkpoint format version");

  LoadedCheckpoint out;
  out.meta.config = config_from_json(manifest.at("config"));
  out.meta.arch = parse_arch(manifest.at("arch").get<std::string>());
  out.meta.view = manifest.value("view", "");
  out.meta.epoch = manifest.value("epoch", int64_t(0));
  out.meta.seed = manifest.value("seed", uint64_t(0));
  out.meta.loss_history = manifest.value("loss_history", std::vector<double>{});
  out.meta.class_weights = manifest.value("class_weights", std::vector<double>{});

  out.model = std::make_unique<InfiNet<float>>(out.meta.config, out.meta.arch, out.meta.seed);

  const char* payload = contents.data() + eol + 1 + manifest_len + 1;
  const int64_t payload_floats = static_cast<int64_t>((contents.size() - (eol + 1 + manifest_len + 1)) / 4);

  auto read_tensor = [&](const json& entry, std::vector<float>& dst) {
    const int64_t offset = entry.at("offset").get<int64_t>();
    const int64_t size = entry.at("size").get<int64_t>();
    require(offset >= 0 && size >= 0 && offset + size <= payload_floats, ErrorKind::Data,
            path + ": truncated payload for tensor '" + entry.at("name").get<std::string>() + "'");
    dst.resize(static_cast<size_t>(size));
    for (int64_t i = 0; i < size; ++i) dst[static_cast<size_t>(i)] = get_f32le(payload + 4 * (offset + i));
  };

  const json& tensors = manifest.at("tensors");
  size_t ti = 0;
  for (auto& p : out.model->parameters()) {
    require(ti < tensors.size(), ErrorKind::Data, path + ": manifest missing tensor '" + p.name + "'");
    const json& e = tensors[ti++];
    require(e.at("name") == p.name && e.at("kind") == "param", ErrorKind::Data,
            path + ": manifest order mismatch at '" + p.name + "'");
    const Shape4 s = p.tensor.shape();
    const std::vector<int64_t> want{s.n, s.c, s.h, s.w};
    require(e.at("shape").get<std::vector<int64_t>>() == want, ErrorKind::Shape,
            path + ": checkpoint tensor '" + p.name + "' shape does not match model " + s.str());
    std::vector<float> data;
    read_tensor(e, data);
    require(static_cast<int64_t>(data.size()) == p.tensor.numel(), ErrorKind::Shape,
            path + ": checkpoint tensor '" + p.name + "' size does not match model");
    p.tensor.mutable_data() = std::move(data);
  }
  for (auto& [name, buf] : out.model->buffers()) {
    require(ti < tensors.size(), ErrorKind::Data, path + ": manifest missing buffer '" + name + "'");
    const json& e = tensors[ti++];
    require(e.at("name") == name && e.at("kind") == "buffer", ErrorKind::Data,
            path + ": manifest order mismatch at '" + name + "'");
    std::vector<float> data;
    read_tensor(e, data);
    require(data.size() == buf->size(), ErrorKind::Shape,
            path + ": checkpoint buffer '" + name + "' size does not match model");
    *buf = std::move(data);
  }
  while (ti < tensors.size()) {
    const json& e = tensors[ti++];
    require(e.at("kind") == "velocity", ErrorKind::Data,
            path + ": unexpected tensor kind '" + e.at("kind").get<std::string>() + "'");
    std::vector<float> data;
    read_tensor(e, data);
    out.velocity.push_back(std::move(data));
  }
  if (!out.velocity.empty()) {
    require(out.velocity.size() == out.model->parameters().size(), ErrorKind::Data,
            path + ": velocity entries do not match parameter count");
    out.has_velocity = true;
  }
  return out;
}

}  // namespace infinet
