// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// The segmentation network: per-modality encoder arms (conv -> ReLU -> BN ->
// max-pool with saved indices), a bottleneck that fuses the arms by
// index-preserving unpooling, decoder blocks that unpool the running decoder
// state with each arm's indices and concatenate both arms' skip features,
// and a 1x1 classifier with channel softmax. A single-arm variant stacks the
// two modalities as a 2-channel input to one encoder.
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace infinet {

struct InfiNetConfig {
  int64_t num_classes = 4;
  int64_t base_channels = 64;
  int64_t depth = 3;
  int64_t input_height = 64;
  int64_t input_width = 64;
  int64_t modalities = 2;

  void validate() const {
    require(num_classes >= 2, ErrorKind::Config, "config: num_classes must be >= 2");
    require(base_channels > 0, ErrorKind::Config, "config: base_channels must be positive");
    require(depth >= 1, ErrorKind::Config, "config: depth must be >= 1");
    require(modalities == 2, ErrorKind::Config, "config: exactly two modalities are supported");
    const int64_t div = int64_t(1) << depth;
    require(input_height > 0 && input_height % div == 0, ErrorKind::Config,
            "config: input_height " + std::to_string(input_height) + " not divisible by 2^depth = " +
                std::to_string(div));
    require(input_width > 0 && input_width % div == 0, ErrorKind::Config,
            "config: input_width " + std::to_string(input_width) + " not divisible by 2^depth = " +
                std::to_string(div));
  }

  bool operator==(const InfiNetConfig&) const = default;
};

enum class Arch { DualArm, SingleArm };

inline const char* arch_name(Arch a) { return a == Arch::DualArm ? "dual" : "single"; }

inline Arch parse_arch(const std::string& s) {
  if (s == "dual") return Arch::DualArm;
  if (s == "single") return Arch::SingleArm;
  fail(ErrorKind::Config, "unknown architecture '" + s + "' (expected dual|single)");
}

// One record per unpooling layer executed during a forward pass: which block
// consumed which arm's indices at which level.
struct WiringRecord {
  std::string block;
  int slot = 0;
  int arm = -1;
  int level = -1;
};
using WiringTrace = std::vector<WiringRecord>;

template <typename T>
class InfiNet {
 public:
  InfiNet(const InfiNetConfig& cfg, Arch arch, uint64_t seed) : cfg_(cfg), arch_(arch), seed_(seed) {
    cfg_.validate();
    build(seed);
  }

  const InfiNetConfig& config() const { return cfg_; }
  Arch arch() const { return arch_; }
  uint64_t seed() const { return seed_; }

  std::vector<NamedParam<T>>& parameters() { return params_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }

  // Batch-norm running statistics, canonical order.
  std::vector<std::pair<std::string, std::vector<T>*>> buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    auto add = [&](const std::string& prefix, BatchNorm<T>& bn) {
      out.emplace_back(prefix + ".running_mean", &bn.running_mean);
      out.emplace_back(prefix + ".running_var", &bn.running_var);
    };
    for (size_t a = 0; a < arms_.size(); ++a)
      for (size_t k = 0; k < arms_[a].size(); ++k)
        add("arm" + std::to_string(a + 1) + ".enc" + std::to_string(k + 1) + ".bn", arms_[a][k].bn);
    for (size_t f = 0; f < fusion_.size(); ++f) {
      add(fusion_name(f) + ".bn_in", fusion_[f].bn_in);
      add(fusion_name(f) + ".bn_mid", fusion_[f].bn_mid);
      add(fusion_name(f) + ".bn_out", fusion_[f].bn_out);
    }
    return out;
  }

  // t1 and t2 are (N,1,H,W) slices of the two modalities. The single-arm
  // variant stacks them into one 2-channel input.
  Tensor<T> forward(const Tensor<T>& t1, const Tensor<T>& t2, Mode mode, WiringTrace* trace = nullptr) {
    require(t1.shape() == t2.shape(), ErrorKind::Shape,
            "forward: T1 " + t1.shape().str() + " and T2 " + t2.shape().str() +
                " slices must be co-registered (identical shapes)");
    const Shape4 s = t1.shape();
    require(s.c == 1, ErrorKind::Shape, "forward: expected single-channel modality slices, got " + s.str());
    require(s.h == cfg_.input_height && s.w == cfg_.input_width, ErrorKind::Shape,
            "forward: input " + s.str() + " does not match configured " +
                std::to_string(cfg_.input_height) + "x" + std::to_string(cfg_.input_width));

    std::vector<std::vector<Tensor<T>>> skips(arms_.size());
    std::vector<std::vector<PoolIndices>> indices(arms_.size());
    std::vector<Tensor<T>> coarsest(arms_.size());

    if (arch_ == Arch::DualArm) {
      coarsest[0] = encode(0, t1, mode, skips[0], indices[0]);
      coarsest[1] = encode(1, t2, mode, skips[1], indices[1]);
    } else {
      coarsest[0] = encode(0, concat_channels<T>({t1, t2}), mode, skips[0], indices[0]);
    }

    // Bottleneck: unpool each arm's coarsest features with its own indices.
    const size_t last = static_cast<size_t>(cfg_.depth - 1);
    std::vector<Tensor<T>> ins, sk;
    std::vector<const PoolIndices*> idx;
    for (size_t a = 0; a < arms_.size(); ++a) {
      ins.push_back(coarsest[a]);
      idx.push_back(&indices[a][last]);
      sk.push_back(skips[a][last]);
    }
    Tensor<T> y = fuse(0, ins, idx, sk, mode, trace);

    // Decoder blocks walk back up: both unpooling layers take the running
    // decoder state, each with the matching arm's indices at that level.
    for (int64_t level = cfg_.depth - 1; level >= 1; --level) {
      const size_t f = static_cast<size_t>(cfg_.depth - level);
      ins.clear();
      idx.clear();
      sk.clear();
      for (size_t a = 0; a < arms_.size(); ++a) {
        ins.push_back(y);
        idx.push_back(&indices[a][static_cast<size_t>(level - 1)]);
        sk.push_back(skips[a][static_cast<size_t>(level - 1)]);
      }
      y = fuse(f, ins, idx, sk, mode, trace);
    }

    Tensor<T> logits = conv2d(y, cls_w_, cls_b_, 0);
    return softmax_channels(logits);
  }

  std::pair<int64_t, int64_t> count_parameters() const {
    int64_t trainable = 0;
    for (const auto& p : params_) trainable += p.tensor.numel();
    int64_t total = trainable;
    for (auto& [name, buf] : const_cast<InfiNet*>(this)->buffers()) total += static_cast<int64_t>(buf->size());
    return {trainable, total};
  }

  int64_t bias_parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0) n += p.tensor.numel();
    return n;
  }

  // Deep copy: fresh leaf tensors and running-stat buffers.
  InfiNet clone() const {
    InfiNet m(cfg_, arch_, seed_);
    for (size_t i = 0; i < params_.size(); ++i)
      m.params_[i].tensor.mutable_data() = params_[i].tensor.data();
    auto src = const_cast<InfiNet*>(this)->buffers();
    auto dst = m.buffers();
    for (size_t i = 0; i < src.size(); ++i) *dst[i].second = *src[i].second;
    return m;
  }

 private:
  struct EncoderBlock {
    Tensor<T> w, b;
    BatchNorm<T> bn;
  };
  struct FusionBlock {
    BatchNorm<T> bn_in;
    Tensor<T> reduce_w, reduce_b;
    BatchNorm<T> bn_mid;
    Tensor<T> conv_w, conv_b;
    BatchNorm<T> bn_out;
  };

  std::string fusion_name(size_t f) const {
    if (f == 0) return "bottleneck";
    return "decoder" + std::to_string(cfg_.depth - static_cast<int64_t>(f));
  }

  Tensor<T> make_kernel(Rng& rng, int64_t k, int64_t c, int64_t kh, int64_t kw) {
    const double std_dev = std::sqrt(2.0 / static_cast<double>(c * kh * kw));
    std::vector<T> data(static_cast<size_t>(k * c * kh * kw));
    for (auto& v : data) v = static_cast<T>(rng.normal() * std_dev);
    return Tensor<T>::from_data({k, c, kh, kw}, std::move(data), true);
  }

  void reg(const std::string& name, const Tensor<T>& t) { params_.push_back({name, t}); }

  void reg_bn(const std::string& prefix, BatchNorm<T>& bn) {
    reg(prefix + ".gamma", bn.gamma);
    reg(prefix + ".beta", bn.beta);
  }

  void build(uint64_t seed) {
    Rng rng(seed);
    const int64_t base = cfg_.base_channels;
    const int64_t arms = arch_ == Arch::DualArm ? 2 : 1;
    arms_.assign(static_cast<size_t>(arms), {});

    for (int64_t a = 0; a < arms; ++a) {
      const std::string ap = "arm" + std::to_string(a + 1);
      for (int64_t k = 0; k < cfg_.depth; ++k) {
        EncoderBlock e;
        const int64_t in_ch = k == 0 ? (arch_ == Arch::DualArm ? 1 : 2) : base;
        e.w = make_kernel(rng, base, in_ch, 3, 3);
        e.b = Tensor<T>::zeros({1, base, 1, 1}, true);
        e.bn = BatchNorm<T>::create(base);
        const std::string p = ap + ".enc" + std::to_string(k + 1);
        reg(p + ".conv.weight", e.w);
        reg(p + ".conv.bias", e.b);
        reg_bn(p + ".bn", e.bn);
        arms_[static_cast<size_t>(a)].push_back(std::move(e));
      }
    }

    for (int64_t f = 0; f < cfg_.depth; ++f) {
      FusionBlock fb;
      const int64_t unpooled = arms * base;      // channels after concat of unpooled maps
      const int64_t fused = base + arms * base;  // reduced features plus skip connections
      fb.bn_in = BatchNorm<T>::create(unpooled);
      fb.reduce_w = make_kernel(rng, base, unpooled, 1, 1);
      fb.reduce_b = Tensor<T>::zeros({1, base, 1, 1}, true);
      fb.bn_mid = BatchNorm<T>::create(base);
      fb.conv_w = make_kernel(rng, base, fused, 3, 3);
      fb.conv_b = Tensor<T>::zeros({1, base, 1, 1}, true);
      fb.bn_out = BatchNorm<T>::create(base);
      const std::string p = fusion_name(static_cast<size_t>(f));
      reg_bn(p + ".bn_in", fb.bn_in);
      reg(p + ".reduce.weight", fb.reduce_w);
      reg(p + ".reduce.bias", fb.reduce_b);
      reg_bn(p + ".bn_mid", fb.bn_mid);
      reg(p + ".conv.weight", fb.conv_w);
      reg(p + ".conv.bias", fb.conv_b);
      reg_bn(p + ".bn_out", fb.bn_out);
      fusion_.push_back(std::move(fb));
    }

    cls_w_ = make_kernel(rng, cfg_.num_classes, base, 1, 1);
    cls_b_ = Tensor<T>::zeros({1, cfg_.num_classes, 1, 1}, true);
    reg("classifier.weight", cls_w_);
    reg("classifier.bias", cls_b_);
  }

  Tensor<T> encode(size_t arm, const Tensor<T>& input, Mode mode, std::vector<Tensor<T>>& skips,
                   std::vector<PoolIndices>& indices) {
    Tensor<T> x = input;
    for (size_t k = 0; k < arms_[arm].size(); ++k) {
      auto& e = arms_[arm][k];
      x = batch_norm(relu(conv2d(x, e.w, e.b, 1)), e.bn, mode);
      skips.push_back(x);
      auto [pooled, idx] = max_pool_2x2(x);
      idx.arm_tag = static_cast<int>(arm) + 1;
      idx.level_tag = static_cast<int>(k) + 1;
      indices.push_back(idx);
      x = pooled;
    }
    return x;
  }

  Tensor<T> fuse(size_t f, const std::vector<Tensor<T>>& ins, const std::vector<const PoolIndices*>& idx,
                 const std::vector<Tensor<T>>& skips, Mode mode, WiringTrace* trace) {
    auto& fb = fusion_[f];
    std::vector<Tensor<T>> unpooled;
    for (size_t a = 0; a < ins.size(); ++a) {
      const Shape4 s = ins[a].shape();
      unpooled.push_back(max_unpool_2x2(ins[a], *idx[a], {s.n, s.c, 2 * s.h, 2 * s.w}));
      if (trace)
        trace->push_back({fusion_name(f), static_cast<int>(a), idx[a]->arm_tag, idx[a]->level_tag});
    }
    Tensor<T> y = batch_norm(concat_channels(unpooled), fb.bn_in, mode);
    y = batch_norm(relu(conv2d(y, fb.reduce_w, fb.reduce_b, 0)), fb.bn_mid, mode);
    std::vector<Tensor<T>> cat{y};
    for (const auto& s : skips) cat.push_back(s);
    y = batch_norm(relu(conv2d(concat_channels(cat), fb.conv_w, fb.conv_b, 1)), fb.bn_out, mode);
    return y;
  }

  InfiNetConfig cfg_;
  Arch arch_;
  uint64_t seed_;
  std::vector<std::vector<EncoderBlock>> arms_;
  std::vector<FusionBlock> fusion_;
  Tensor<T> cls_w_, cls_b_;
  std::vector<NamedParam<T>> params_;
};

template <typename T>
std::unique_ptr<InfiNet<T>> build_infinet(const InfiNetConfig& cfg, uint64_t seed) {
  return std::make_unique<InfiNet<T>>(cfg, Arch::DualArm, seed);
}

template <typename T>
std::unique_ptr<InfiNet<T>> build_single_arm(const InfiNetConfig& cfg, uint64_t seed) {
  return std::make_unique<InfiNet<T>>(cfg, Arch::SingleArm, seed);
}

}  // namespace infinet
