// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#include "core/training.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "core/optimizer.hpp"
#include "core/rng.hpp"

namespace infinet {

void TrainConfig::validate() const {
  require(lr0 > 0, ErrorKind::Config, "train config: lr0 must be positive");
  require(lr_decay_factor > 0, ErrorKind::Config, "train config: lr_decay_factor must be positive");
  require(lr_decay_every >= 1, ErrorKind::Config, "train config: lr_decay_every must be >= 1");
  require(momentum >= 0 && momentum < 1, ErrorKind::Config, "train config: momentum must be in [0,1)");
  require(batch_size >= 1, ErrorKind::Config, "train config: batch_size must be >= 1");
  require(max_epochs >= 1, ErrorKind::Config, "train config: max_epochs must be >= 1");
  require(loss == "gdl", ErrorKind::Config, "train config: unsupported loss '" + loss + "'");
  require(num_classes >= 2, ErrorKind::Config, "train config: num_classes must be >= 2");
  require(base_channels >= 1 && depth >= 1, ErrorKind::Config, "train config: invalid model dims");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
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
    require(eq != std::string::npos, ErrorKind::Config, "train config: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "lr0") cfg.lr0 = std::stod(val);
      else if (key == "lr_decay_factor") cfg.lr_decay_factor = std::stod(val);
      else if (key == "lr_decay_every") cfg.lr_decay_every = std::stoll(val);
      else if (key == "momentum") cfg.momentum = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoll(val);
      else if (key == "max_epochs") cfg.max_epochs = std::stoll(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "view_axis") cfg.view_axis = parse_axis(val);
      else if (key == "loss") cfg.loss = val;
      else if (key == "arch") cfg.arch = parse_arch(val);
      else if (key == "base_channels") cfg.base_channels = std::stoll(val);
      else if (key == "depth") cfg.depth = std::stoll(val);
      else if (key == "num_classes") cfg.num_classes = std::stoll(val);
      else if (key == "convergence_min_delta") cfg.convergence_min_delta = std::stod(val);
      else if (key == "convergence_patience") cfg.convergence_patience = std::stoll(val);
      else fail(ErrorKind::Config, "train config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::Config, "train config: malformed value for key '" + key + "'");
    } catch (const std::out_of_range&) {
      fail(ErrorKind::Config, "train config: value out of range for key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "lr0 = " << lr0 << "\n";
  os << "lr_decay_factor = " << lr_decay_factor << "\n";
  os << "lr_decay_every = " << lr_decay_every << "\n";
  os << "momentum = " << momentum << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "max_epochs = " << max_epochs << "\n";
  os << "seed = " << seed << "\n";
  os << "view_axis = " << axis_name(view_axis) << "\n";
  os << "loss = " << loss << "\n";
  os << "arch = " << arch_name(arch) << "\n";
  os << "base_channels = " << base_channels << "\n";
  os << "depth = " << depth << "\n";
  os << "num_classes = " << num_classes << "\n";
  os << "convergence_min_delta = " << convergence_min_delta << "\n";
  os << "convergence_patience = " << convergence_patience << "\n";
  return os.str();
}

double lr_schedule(int64_t epoch, const TrainConfig& cfg) {
  require(epoch >= 0, ErrorKind::Config, "lr_schedule: negative epoch");
  const int64_t steps = epoch / cfg.lr_decay_every;
  return cfg.lr0 / std::pow(cfg.lr_decay_factor, static_cast<double>(steps));
}

ClassWeights compute_class_weights(const std::vector<const LabeledVolume*>& volumes, int64_t num_classes) {
  require(!volumes.empty(), ErrorKind::Data, "compute_class_weights: no training volumes");
  std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
  int64_t total = 0;
  for (const auto* vol : volumes) {
    for (uint8_t l : vol->labels) {
      require(l < num_classes, ErrorKind::Data, "compute_class_weights: label outside [0, num_classes)");
      ++counts[l];
    }
    total += static_cast<int64_t>(vol->labels.size());
  }
  std::vector<double> f(static_cast<size_t>(num_classes));
  int64_t populated = 0;
  for (size_t i = 0; i < f.size(); ++i) {
    f[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    populated += counts[i] > 0;
  }
  if (populated <= 1)
    std::fprintf(stderr,
                 "warning: training labels contain a single class; loss weights are degenerate\n");
  return ClassWeights::from_frequencies(std::move(f));
}

std::vector<std::pair<int32_t, int32_t>> epoch_order(int64_t n_volumes, int64_t slices_per_volume,
                                                     uint64_t epoch_seed) {
  std::vector<std::pair<int32_t, int32_t>> items;
  items.reserve(static_cast<size_t>(n_volumes * slices_per_volume));
  for (int32_t v = 0; v < n_volumes; ++v)
    for (int32_t s = 0; s < slices_per_volume; ++s) items.emplace_back(v, s);
  Rng rng(epoch_seed);
  rng.shuffle(items.begin(), items.end());
  return items;
}

std::string TrainReport::to_text() const {
  std::ostringstream os;
  for (size_t e = 0; e < epoch_loss.size(); ++e)
    os << "epoch " << e << "  lr " << epoch_lr[e] << "  loss " << epoch_loss[e] << "  time "
       << epoch_seconds[e] << "s\n";
  os << "epochs_run " << epochs_run << (converged_early ? "  (converged)" : "") << "\n";
  os << "checkpoint " << checkpoint_path << "\n";
  return os.str();
}

std::string TrainReport::to_json_text() const {
  nlohmann::json j{{"epoch_loss", epoch_loss},
                   {"epoch_lr", epoch_lr},
                   {"epoch_seconds", epoch_seconds},
                   {"checkpoint_path", checkpoint_path},
                   {"class_weights", class_weights},
                   {"epochs_run", epochs_run},
                   {"converged_early", converged_early}};
  return j.dump(2);
}

void TrainReport::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write report '" + path + "'");
  out << to_json_text() << "\n";
  require(static_cast<bool>(out), ErrorKind::Io, "short write to report '" + path + "'");
}

namespace {

struct Batch {
  Tensor<float> t1, t2, target;
};

Batch assemble_batch(const std::vector<LabeledVolume>& volumes,
                     const std::vector<std::pair<int32_t, int32_t>>& items, size_t begin, size_t end,
                     Axis axis, int64_t num_classes) {
  const auto [rows, cols] = plane_dims(volumes.front().dims, axis);
  const int64_t bsz = static_cast<int64_t>(end - begin);
  const int64_t pix = rows * cols;
  std::vector<float> t1(static_cast<size_t>(bsz * pix));
  std::vector<float> t2(static_cast<size_t>(bsz * pix));
  std::vector<float> target(static_cast<size_t>(bsz * num_classes * pix), 0.0f);

  for (int64_t b = 0; b < bsz; ++b) {
    const auto [vi, si] = items[begin + static_cast<size_t>(b)];
    const SliceTriple s = extract_slice(volumes[static_cast<size_t>(vi)], axis, si);
    std::copy(s.t1.begin(), s.t1.end(), t1.begin() + b * pix);
    std::copy(s.t2.begin(), s.t2.end(), t2.begin() + b * pix);
    for (int64_t i = 0; i < pix; ++i)
      target[static_cast<size_t>((b * num_classes + s.labels[static_cast<size_t>(i)]) * pix + i)] = 1.0f;
  }
  Batch out;
  out.t1 = Tensor<float>::from_data({bsz, 1, rows, cols}, std::move(t1));
  out.t2 = Tensor<float>::from_data({bsz, 1, rows, cols}, std::move(t2));
  out.target = Tensor<float>::from_data({bsz, num_classes, rows, cols}, std::move(target));
  return out;
}

}  // namespace

TrainResult train(const std::vector<LabeledVolume>& volumes, const TrainConfig& cfg,
                  const std::string& checkpoint_path, const LoadedCheckpoint* resume) {
  cfg.validate();
  require(!volumes.empty(), ErrorKind::Data, "train: empty volume list");
  const Dims3 dims = volumes.front().dims;
  for (const auto& v : volumes) {
    v.validate();
    require(v.dims == dims, ErrorKind::Data, "train: all volumes must share dims");
    require(v.num_classes <= cfg.num_classes, ErrorKind::Data,
            "train: volume classes exceed configured num_classes");
  }

  const auto [rows, cols] = plane_dims(dims, cfg.view_axis);
  InfiNetConfig mcfg;
  mcfg.num_classes = cfg.num_classes;
  mcfg.base_channels = cfg.base_channels;
  mcfg.depth = cfg.depth;
  mcfg.input_height = rows;
  mcfg.input_width = cols;
  mcfg.validate();

  std::vector<const LabeledVolume*> vptrs;
  for (const auto& v : volumes) vptrs.push_back(&v);
  const ClassWeights weights = compute_class_weights(vptrs, cfg.num_classes);

  std::unique_ptr<InfiNet<float>> model;
  SgdMomentum<float> opt;
  int64_t start_epoch = 0;
  std::vector<double> loss_history;

  if (resume) {
    require(resume->meta.config == mcfg, ErrorKind::Data,
            "train: resume checkpoint config does not match data/view");
    require(resume->meta.arch == cfg.arch, ErrorKind::Data,
            "train: resume checkpoint architecture does not match config");
    require(resume->meta.seed == cfg.seed, ErrorKind::Data,
            "train: resume checkpoint seed does not match config (sampler streams would diverge)");
    model = std::make_unique<InfiNet<float>>(resume->model->clone());
    opt.reset(model->parameters());
    if (resume->has_velocity) {
      require(resume->velocity.size() == model->parameters().size(), ErrorKind::Data,
              "train: resume velocity does not match parameters");
      opt.velocity() = resume->velocity;
    }
    start_epoch = resume->meta.epoch;
    loss_history = resume->meta.loss_history;
  } else {
    model = std::make_unique<InfiNet<float>>(mcfg, cfg.arch, cfg.seed);
    opt.reset(model->parameters());
  }

  TrainReport report;
  report.class_weights = weights.weights;
  report.checkpoint_path = checkpoint_path;
  for (size_t e = 0; e < loss_history.size(); ++e) {
    report.epoch_loss.push_back(loss_history[e]);
    report.epoch_lr.push_back(lr_schedule(static_cast<int64_t>(e), cfg));
    report.epoch_seconds.push_back(0.0);
  }

  const int64_t slices = axis_extent(dims, cfg.view_axis);
  int64_t flat_streak = 0;
  bool converged = false;
  // Replay the convergence streak over resumed history so a resumed run
  // stops at the same epoch an uninterrupted one would.
  for (size_t e = 1; e < loss_history.size(); ++e)
    flat_streak = (loss_history[e - 1] - loss_history[e] < cfg.convergence_min_delta) ? flat_streak + 1 : 0;

  for (int64_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto order =
        epoch_order(static_cast<int64_t>(volumes.size()), slices, derive_seed(cfg.seed, static_cast<uint64_t>(epoch)));

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      Batch batch = assemble_batch(volumes, order, begin, end, cfg.view_axis, cfg.num_classes);
      double loss_value = 0.0;
      try {
        Tensor<float> probs = model->forward(batch.t1, batch.t2, Mode::Train);
        Tensor<float> loss = gdl_loss(probs, batch.target, weights);
        loss_value = static_cast<double>(loss.value());
        require(std::isfinite(loss_value), ErrorKind::Numeric, "non-finite loss");
        loss.backward();
        opt.step(model->parameters(), lr, cfg.momentum);
      } catch (const Error& err) {
        if (err.kind() == ErrorKind::Numeric)
          fail(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                       std::to_string(batches) + ": " + err.what());
        throw;
      }
      loss_sum += loss_value;
      ++batches;
    }

    const double mean_loss = loss_sum / static_cast<double>(batches);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epoch_loss.push_back(mean_loss);
    report.epoch_lr.push_back(lr);
    report.epoch_seconds.push_back(secs);
    loss_history.push_back(mean_loss);

    if (!checkpoint_path.empty()) {
      CheckpointMeta meta;
      meta.config = mcfg;
      meta.arch = cfg.arch;
      meta.view = axis_name(cfg.view_axis);
      meta.epoch = epoch + 1;
      meta.seed = cfg.seed;
      meta.loss_history = loss_history;
      meta.class_weights = weights.weights;
      save_checkpoint(checkpoint_path, *model, meta, &opt.velocity());
    }

    if (report.epoch_loss.size() >= 2) {
      const double prev = report.epoch_loss[report.epoch_loss.size() - 2];
      flat_streak = (prev - mean_loss < cfg.convergence_min_delta) ? flat_streak + 1 : 0;
      if (flat_streak >= cfg.convergence_patience) {
        converged = true;
      }
    }
    if (converged) break;
  }

  report.epochs_run = static_cast<int64_t>(report.epoch_loss.size());
  report.converged_early = converged;
  TrainResult result;
  result.report = std::move(report);
  result.model = std::move(model);
  return result;
}

std::vector<ViewTrainResult> train_all_views(const std::vector<LabeledVolume>& volumes,
                                             const TrainConfig& cfg, const std::string& out_dir,
                                             bool parallel) {
  std::filesystem::create_directories(out_dir);
  const Axis axes[3] = {Axis::Axial, Axis::Coronal, Axis::Sagittal};
  std::vector<ViewTrainResult> results(3);
  std::vector<std::exception_ptr> errors(3);

  auto run_one = [&](int i) {
    try {
      TrainConfig vcfg = cfg;
      vcfg.view_axis = axes[i];
      vcfg.seed = derive_seed(cfg.seed, static_cast<uint64_t>(i));
      const std::string path = out_dir + "/infinet_" + axis_name(axes[i]) + ".ckpt";
      TrainResult r = train(volumes, vcfg, path);
      r.report.save(out_dir + "/report_" + axis_name(axes[i]) + ".json");
      results[static_cast<size_t>(i)] = {axes[i], path, std::move(r.report)};
    } catch (...) {
      errors[static_cast<size_t>(i)] = std::current_exception();
    }
  };

  if (parallel) {
    std::vector<std::thread> threads;
    for (int i = 0; i < 3; ++i) threads.emplace_back(run_one, i);
    for (auto& t : threads) t.join();
  } else {
    for (int i = 0; i < 3; ++i) run_one(i);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace infinet
