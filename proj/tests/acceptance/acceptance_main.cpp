// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: runs the quantitative desk-scale criteria end to end
// and prints one [PASS]/[FAIL] line per criterion.
//
//   acceptance --criterion all|1|2|...|10 [--cli PATH] [--work DIR]
//
// Criterion 1 drives the installed CLI binary (grad-check); everything else
// runs in-process against the core library.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "core/inference.hpp"
#include "core/opchecks.hpp"
#include "core/optimizer.hpp"
#include "core/phantom.hpp"
#include "core/training.hpp"

using namespace infinet;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::vector<int> criteria;
  std::string cli;
  std::string work;
};

struct Result {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string details;
  double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

// ---------------------------------------------------------------- helpers

std::vector<LabeledVolume> make_phantoms(const PhantomSpec& spec, uint64_t seed0, int count) {
  std::vector<LabeledVolume> vols;
  for (int i = 0; i < count; ++i) vols.push_back(generate_phantom(spec, seed0 + static_cast<uint64_t>(i)));
  return vols;
}

// Per-class Dice of a trained model on a set of volumes, averaged over the
// volumes. views: one model per axis for aggregation, or a single view.
std::vector<double> dice_foreground(const std::vector<std::unique_ptr<InfiNet<float>>>& views,
                                    const std::vector<Axis>& axes,
                                    const std::vector<const LabeledVolume*>& volumes) {
  std::vector<double> acc(3, 0.0);  // CSF, GM, WM
  for (const auto* vol : volumes) {
    std::vector<ProbabilityVolume> probs;
    for (size_t i = 0; i < views.size(); ++i) probs.push_back(segment_view(*views[i], *vol, axes[i]));
    std::vector<const ProbabilityVolume*> ptrs;
    for (const auto& p : probs) ptrs.push_back(&p);
    const LabelVolume pred = argmax_labels(aggregate_views(ptrs));
    for (int64_t l = 1; l <= 3; ++l)
      acc[static_cast<size_t>(l - 1)] += dice_score(pred.labels, vol->labels, l);
  }
  for (auto& v : acc) v /= static_cast<double>(volumes.size());
  return acc;
}

double mean3(const std::vector<double>& v) { return (v[0] + v[1] + v[2]) / 3.0; }

// ---------------------------------------------------------------- criteria

Result criterion_1_gradient_oracle(const Options& opt) {
  Result r{1, "gradient oracle (cmd_grad_check --op all)"};
  const auto t0 = Clock::now();
  if (opt.cli.empty()) {
    r.details = "CLI path not set (use --cli or INFINET_CLI)";
    return r;
  }
  const std::string log = opt.work + "/grad_check.log";
  const std::string cmd = opt.cli + " grad-check --op all --trials 3 --tolerance 1e-4 >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  r.seconds = secs_since(t0);
  const bool ok = WEXITSTATUS(rc) == 0;
  const bool in_budget = r.seconds < 300.0;
  r.pass = ok && in_budget;
  r.details = std::string(ok ? "all ops < 1e-4" : "CLI exited nonzero, see " + log) +
              ", runtime " + fmt(r.seconds, 1) + "s (budget 300s)";
  return r;
}

Result criterion_2_gdl_worked_example(const Options&) {
  Result r{2, "GDL worked example"};
  const auto t0 = Clock::now();
  auto weights = ClassWeights::from_frequencies({0.5, 0.5});
  auto pred = Tensor<double>::from_data({1, 2, 1, 2}, {0.8, 0.4, 0.2, 0.6});
  auto target = Tensor<double>::from_data({1, 2, 1, 2}, {1.0, 0.0, 0.0, 1.0});
  const double worked = gdl_loss(pred, target, weights).value();

  auto w4 = ClassWeights::from_frequencies({0.25, 0.25, 0.25, 0.25});
  std::vector<double> onehot(4 * 16, 0.0);
  for (int i = 0; i < 16; ++i) onehot[static_cast<size_t>((i % 4) * 16 + i)] = 1.0;
  auto t = Tensor<double>::from_data({1, 4, 4, 4}, onehot);
  const double perfect = gdl_loss(t, t, w4).value();

  std::vector<double> wrong(4 * 16, 0.0);
  for (int i = 0; i < 16; ++i) wrong[static_cast<size_t>(((i + 1) % 4) * 16 + i)] = 1.0;
  const double total_miss =
      gdl_loss(Tensor<double>::from_data({1, 4, 4, 4}, wrong), t, w4, /*strict=*/false).value();

  r.pass = std::abs(worked - 0.3) <= 1e-9 && std::abs(perfect) <= 1e-6 && std::abs(total_miss - 1.0) <= 1e-6;
  r.details = "worked=" + fmt(worked, 12) + " perfect=" + fmt(perfect, 10) +
              " total_miss=" + fmt(total_miss, 10);
  r.seconds = secs_since(t0);
  return r;
}

Result criterion_3_pool_unpool_algebra(const Options&) {
  Result r{3, "pool/unpool algebra on 1000 random tensors"};
  const auto t0 = Clock::now();
  Rng rng(321);
  bool ok = true;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const Shape4 s{1 + rng.uniform_int(2), 1 + rng.uniform_int(4),
                   2 * (1 + rng.uniform_int(4)), 2 * (1 + rng.uniform_int(4))};
    std::vector<float> data(static_cast<size_t>(s.size()));
    for (auto& v : data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    auto x = Tensor<float>::from_data(s, std::move(data));
    auto [pooled, idx] = max_pool_2x2(x);
    auto up = max_unpool_2x2(pooled, idx, s);
    auto [pooled2, idx2] = max_pool_2x2(up);
    ok = ok && pooled2.data() == pooled.data();  // bit-exact

    for (int64_t nc = 0; nc < s.n * s.c && ok; ++nc)
      for (int64_t i = 0; i < s.h; i += 2)
        for (int64_t j = 0; j < s.w; j += 2) {
          int nz = 0;
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx)
              nz += up.data()[nc * s.h * s.w + (i + dy) * s.w + (j + dx)] != 0.0f;
          ok = ok && nz <= 1;
        }
  }
  r.pass = ok;
  r.details = ok ? "1000/1000 round trips bit-exact, <=1 nonzero per window" : "algebra violated";
  r.seconds = secs_since(t0);
  return r;
}

Result criterion_4_overfit(const Options&) {
  Result r{4, "overfit capability on a single 32^3 phantom"};
  const auto t0 = Clock::now();
  PhantomSpec spec;
  spec.dims = {32, 32, 32};
  auto vols = make_phantoms(spec, 104, 1);

  TrainConfig cfg;  // paper defaults: lr0 0.01, momentum 0.95, batch 8
  cfg.max_epochs = 200;
  cfg.seed = 11;
  cfg.view_axis = Axis::Axial;
  auto res = train(vols, cfg, "");

  std::vector<std::unique_ptr<InfiNet<float>>> views;
  views.push_back(std::move(res.model));
  auto dice = dice_foreground(views, {Axis::Axial}, {&vols[0]});
  r.seconds = secs_since(t0);
  const bool dice_ok = dice[0] >= 0.95 && dice[1] >= 0.95 && dice[2] >= 0.95;
  const bool time_ok = r.seconds < 1800.0;
  r.pass = dice_ok && time_ok;
  r.details = "train dice CSF/GM/WM = " + fmt(dice[0]) + "/" + fmt(dice[1]) + "/" + fmt(dice[2]) +
              " after " + std::to_string(res.report.epochs_run) + " epochs, " + fmt(r.seconds, 1) +
              "s (budget 1800s)";
  return r;
}

// Shared setup for criteria 5 and 6: per seed, train the dual-arm model on
// all three views plus a single-arm axial baseline, on an 8 train / 2 test
// split of iso-intense phantoms.
struct FusionOutcome {
  double dual_axial_mean = 0.0, single_axial_mean = 0.0;
  std::vector<double> agg{0, 0, 0};
  std::vector<double> best_single{0, 0, 0};
  double mean_single_view = 0.0;  // mean over views of mean foreground dice
};

FusionOutcome run_fusion_experiment(uint64_t seed, const PhantomSpec& spec, int64_t epochs) {
  auto train_vols = make_phantoms(spec, 500 + seed * 100, 8);
  auto test_vols = make_phantoms(spec, 900 + seed * 100, 2);
  std::vector<const LabeledVolume*> test_ptrs{&test_vols[0], &test_vols[1]};

  TrainConfig cfg;  // paper hyperparameters
  cfg.max_epochs = epochs;
  cfg.seed = seed;

  const Axis axes[3] = {Axis::Axial, Axis::Coronal, Axis::Sagittal};
  std::vector<std::unique_ptr<InfiNet<float>>> dual_views;
  std::vector<std::vector<double>> single_view_dice;
  for (int a = 0; a < 3; ++a) {
    TrainConfig vcfg = cfg;
    vcfg.view_axis = axes[a];
    vcfg.seed = derive_seed(cfg.seed, static_cast<uint64_t>(a));
    auto res = train(train_vols, vcfg, "");
    dual_views.push_back(std::move(res.model));
    std::vector<std::unique_ptr<InfiNet<float>>> one;
    one.push_back(std::move(dual_views.back()));
    single_view_dice.push_back(dice_foreground(one, {axes[a]}, test_ptrs));
    dual_views.back() = std::move(one.front());
  }

  TrainConfig scfg = cfg;
  scfg.view_axis = Axis::Axial;
  scfg.seed = derive_seed(cfg.seed, 0);
  scfg.arch = Arch::SingleArm;
  auto single_res = train(train_vols, scfg, "");

  FusionOutcome out;
  out.dual_axial_mean = mean3(single_view_dice[0]);
  {
    std::vector<std::unique_ptr<InfiNet<float>>> one;
    one.push_back(std::move(single_res.model));
    out.single_axial_mean = mean3(dice_foreground(one, {Axis::Axial}, test_ptrs));
  }
  out.agg = dice_foreground(dual_views, {Axis::Axial, Axis::Coronal, Axis::Sagittal}, test_ptrs);
  for (int c = 0; c < 3; ++c)
    out.best_single[static_cast<size_t>(c)] =
        std::max({single_view_dice[0][static_cast<size_t>(c)], single_view_dice[1][static_cast<size_t>(c)],
                  single_view_dice[2][static_cast<size_t>(c)]});
  out.mean_single_view =
      (mean3(single_view_dice[0]) + mean3(single_view_dice[1]) + mean3(single_view_dice[2])) / 3.0;
  return out;
}

// Desk-scale experiment knobs for criteria 5/6 (spec margins stay pinned).
PhantomSpec fusion_spec() {
  PhantomSpec spec;
  spec.dims = {32, 32, 32};
  spec.noise_std = 0.10;
  spec.bias_field_amplitude = 0.08;
  return spec;
}
constexpr int64_t kFusionEpochs = 15;

std::pair<Result, Result> criteria_5_6_fusion_and_views(const Options&) {
  Result r5{5, "generalization + fusion advantage (dual vs single arm)"};
  Result r6{6, "view aggregation vs single views"};
  const auto t0 = Clock::now();

  const PhantomSpec spec = fusion_spec();
  double margin_sum = 0.0;
  std::vector<double> agg_mean{0, 0, 0}, best_mean{0, 0, 0};
  double mean_single_sum = 0.0, agg_overall = 0.0;
  std::ostringstream seeds_detail;

  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const FusionOutcome out = run_fusion_experiment(seed, spec, kFusionEpochs);
    margin_sum += out.dual_axial_mean - out.single_axial_mean;
    for (int c = 0; c < 3; ++c) {
      agg_mean[static_cast<size_t>(c)] += out.agg[static_cast<size_t>(c)] / 3.0;
      best_mean[static_cast<size_t>(c)] += out.best_single[static_cast<size_t>(c)] / 3.0;
    }
    mean_single_sum += out.mean_single_view / 3.0;
    agg_overall += mean3(out.agg) / 3.0;
    seeds_detail << " [seed " << seed << ": dual " << fmt(out.dual_axial_mean) << " vs single "
                 << fmt(out.single_axial_mean) << ", agg " << fmt(mean3(out.agg)) << "]";
  }
  const double margin = margin_sum / 3.0;

  r5.pass = margin >= 0.01;
  r5.details = "mean dice margin (dual - single, 3 seeds) = " + fmt(margin) + seeds_detail.str();
  r5.seconds = secs_since(t0);

  bool per_class_ok = true;
  for (int c = 0; c < 3; ++c)
    per_class_ok = per_class_ok && agg_mean[static_cast<size_t>(c)] >=
                                       best_mean[static_cast<size_t>(c)] - 0.02;
  const bool mean_ok = agg_overall >= mean_single_sum;
  r6.pass = per_class_ok && mean_ok;
  r6.details = "aggregated CSF/GM/WM = " + fmt(agg_mean[0]) + "/" + fmt(agg_mean[1]) + "/" +
               fmt(agg_mean[2]) + " vs best single " + fmt(best_mean[0]) + "/" + fmt(best_mean[1]) + "/" +
               fmt(best_mean[2]) + "; agg mean " + fmt(agg_overall) + " vs mean single-view " +
               fmt(mean_single_sum);
  r6.seconds = r5.seconds;
  return {r5, r6};
}

Result criterion_7_schedule_and_momentum(const Options&) {
  Result r{7, "schedule and optimizer exactness"};
  const auto t0 = Clock::now();
  TrainConfig cfg;  // lr0 0.01, decay 10 every 10
  const bool lr_ok = lr_schedule(0, cfg) == 0.01 && lr_schedule(10, cfg) == 0.001 &&
                     lr_schedule(25, cfg) == 0.0001;

  const double p0 = 1.0, lr = 0.01, mu = 0.95;
  std::vector<NamedParam<double>> params{{"p", Tensor<double>::from_data({1, 1, 1, 1}, {p0}, true)}};
  SgdMomentum<double> optimizer(params);
  for (int step = 0; step < 2; ++step) {
    auto loss = weighted_sum(params[0].tensor, {1.0});
    loss.backward();
    optimizer.step(params, lr, mu);
  }
  const double expect = p0 - lr * (1.0 + 1.95);
  const double err = std::abs(params[0].tensor.data()[0] - expect);
  r.pass = lr_ok && err <= 1e-12;
  r.details = std::string("lr(0/10/25) exact: ") + (lr_ok ? "yes" : "NO") +
              ", momentum closed-form |err| = " + fmt(err, 16);
  r.seconds = secs_since(t0);
  return r;
}

Result criterion_8_determinism_resume(const Options&) {
  Result r{8, "determinism and resume fidelity"};
  const auto t0 = Clock::now();
  PhantomSpec spec;
  spec.dims = {16, 16, 16};
  auto vols = make_phantoms(spec, 2000, 2);

  TrainConfig cfg;
  cfg.base_channels = 8;
  cfg.max_epochs = 4;
  cfg.seed = 77;

  auto a = train(vols, cfg, "");
  auto b = train(vols, cfg, "");
  const bool identical = a.report.epoch_loss == b.report.epoch_loss;

  const std::string dir = fs::temp_directory_path() / "acceptance_resume";
  fs::create_directories(dir);
  TrainConfig half = cfg;
  half.max_epochs = 2;
  train(vols, half, dir + "/half.ckpt");
  auto ckpt = load_checkpoint(dir + "/half.ckpt");
  auto resumed = train(vols, cfg, dir + "/resumed.ckpt", &ckpt);
  const bool resume_ok = resumed.report.epoch_loss == a.report.epoch_loss;
  fs::remove_all(dir);

  r.pass = identical && resume_ok;
  r.details = std::string("identical-seed losses bit-identical: ") + (identical ? "yes" : "NO") +
              "; resume reproduces uninterrupted run: " + (resume_ok ? "yes" : "NO");
  r.seconds = secs_since(t0);
  return r;
}

Result criterion_9_parameter_accounting(const Options&) {
  Result r{9, "parameter accounting"};
  const auto t0 = Clock::now();
  InfiNetConfig cfg;  // paper defaults
  InfiNet<float> model(cfg, Arch::DualArm, 1);
  auto [trainable, total] = model.count_parameters();

  // Independent enumeration of the documented wiring.
  auto enumerate = [](int64_t base, int64_t depth, int64_t classes, bool dual) {
    const int64_t arms = dual ? 2 : 1;
    int64_t sum = 0;
    for (int64_t a = 0; a < arms; ++a) {
      sum += base * (dual ? 1 : 2) * 9 + base;
      for (int64_t k = 1; k < depth; ++k) sum += base * base * 9 + base;
      sum += depth * 2 * base;
    }
    for (int64_t f = 0; f < depth; ++f)
      sum += 2 * arms * base + (base * arms * base + base) + 2 * base +
             (base * (1 + arms) * base * 9 + base) + 2 * base;
    sum += classes * base + classes;
    return sum;
  };
  const int64_t expected = enumerate(64, 3, 4, true);
  const int64_t biases = model.bias_parameter_count();
  const int64_t paper_figure = 740000;

  r.pass = trainable == expected && trainable >= 100000 && trainable < 1000000;
  r.details = "trainable = " + std::to_string(trainable) + " (enumeration " + std::to_string(expected) +
              "), without biases = " + std::to_string(trainable - biases) + ", total with buffers = " +
              std::to_string(total) + "; delta vs published 0.74M figure = " +
              std::to_string(trainable - paper_figure) +
              " (order-of-magnitude agreement required, not equality)";
  r.seconds = secs_since(t0);
  return r;
}

Result criterion_10_inference_throughput(const Options&) {
  Result r{10, "three-view aggregated inference on 64^3 under 60 s"};
  PhantomSpec spec;  // default 64^3
  auto vol = generate_phantom(spec, 42);

  InfiNetConfig mcfg;  // base 64, 64x64 slices
  std::vector<std::unique_ptr<InfiNet<float>>> views;
  for (uint64_t s = 0; s < 3; ++s) views.push_back(std::make_unique<InfiNet<float>>(mcfg, Arch::DualArm, s + 1));

  const auto t0 = Clock::now();
  std::vector<ProbabilityVolume> probs;
  const Axis axes[3] = {Axis::Axial, Axis::Coronal, Axis::Sagittal};
  for (int a = 0; a < 3; ++a) probs.push_back(segment_view(*views[static_cast<size_t>(a)], vol, axes[a]));
  auto agg = aggregate_views(probs[0], probs[1], probs[2]);
  auto labels = argmax_labels(agg);
  r.seconds = secs_since(t0);

  r.pass = r.seconds < 60.0 && labels.labels.size() == vol.labels.size();
  r.details = "whole-volume three-view inference took " + fmt(r.seconds, 2) +
              "s (desk budget 60s; the original reports <50s at full scale on GPU, not asserted here)";
  return r;
}

void print_result(const Result& r) {
  std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(),
              r.details.c_str(), r.seconds);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  if (const char* env = std::getenv("INFINET_CLI")) opt.cli = env;
  opt.work = (fs::temp_directory_path() / "infinet_acceptance").string();

  std::vector<std::string> tokens;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&](const char* flag) {
      if (i + 1 >= argc) {
        std::fprintf(stderr, "missing value for %s\n", flag);
        std::exit(1);
      }
      return std::string(argv[++i]);
    };
    if (arg == "--criterion") tokens.push_back(next("--criterion"));
    else if (arg == "--cli") opt.cli = next("--cli");
    else if (arg == "--work") opt.work = next("--work");
    else {
      std::fprintf(stderr, "usage: acceptance --criterion all|N [--cli PATH] [--work DIR]\n");
      return 1;
    }
  }
  if (tokens.empty()) tokens.push_back("all");
  for (const auto& t : tokens) {
    if (t == "all") {
      opt.criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
      break;
    }
    opt.criteria.push_back(std::atoi(t.c_str()));
  }
  fs::create_directories(opt.work);

  std::vector<Result> results;
  bool fusion_done = false;
  size_t printed = 0;
  for (int id : opt.criteria) {
    switch (id) {
      case 1: results.push_back(criterion_1_gradient_oracle(opt)); break;
      case 2: results.push_back(criterion_2_gdl_worked_example(opt)); break;
      case 3: results.push_back(criterion_3_pool_unpool_algebra(opt)); break;
      case 4: results.push_back(criterion_4_overfit(opt)); break;
      case 5:
      case 6:
        // The two criteria share one set of trainings; run them together.
        if (!fusion_done) {
          auto [r5, r6] = criteria_5_6_fusion_and_views(opt);
          results.push_back(r5);
          results.push_back(r6);
          fusion_done = true;
        }
        break;
      case 7: results.push_back(criterion_7_schedule_and_momentum(opt)); break;
      case 8: results.push_back(criterion_8_determinism_resume(opt)); break;
      case 9: results.push_back(criterion_9_parameter_accounting(opt)); break;
      case 10: results.push_back(criterion_10_inference_throughput(opt)); break;
      default:
        std::fprintf(stderr, "unknown criterion %d\n", id);
        return 1;
    }
    for (; printed < results.size(); ++printed) print_result(results[printed]);
  }

  bool all_pass = true;
  for (const auto& r : results) all_pass = all_pass && r.pass;
  std::printf("%s: %zu criteria run\n", all_pass ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", results.size());
  return all_pass ? 0 : 1;
}
