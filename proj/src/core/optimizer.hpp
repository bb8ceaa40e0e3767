// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace infinet {

// Classical momentum SGD: v <- momentum * v + grad; p <- p - lr * v.
// Gradients are zeroed after the step.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum() = default;

  explicit SgdMomentum(const std::vector<NamedParam<T>>& params) { reset(params); }

  void reset(const std::vector<NamedParam<T>>& params) {
    velocity_.clear();
    for (const auto& p : params)
      velocity_.emplace_back(static_cast<size_t>(p.tensor.numel()), T(0));
  }

  void step(std::vector<NamedParam<T>>& params, double lr, double momentum) {
    require(velocity_.size() == params.size(), ErrorKind::Config,
            "sgd_momentum_step: optimizer state does not match parameter list");
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      require(p.tensor.has_grad(), ErrorKind::Config,
              "sgd_momentum_step: missing gradient on trainable tensor '" + p.name + "'");
      const auto& g = p.tensor.grad();
      auto& v = velocity_[i];
      auto& data = p.tensor.mutable_data();
      for (size_t j = 0; j < v.size(); ++j) {
        v[j] = static_cast<T>(momentum * static_cast<double>(v[j]) + static_cast<double>(g[j]));
        data[j] = static_cast<T>(static_cast<double>(data[j]) - lr * static_cast<double>(v[j]));
      }
      p.tensor.zero_grad();
    }
  }

  std::vector<std::vector<T>>& velocity() { return velocity_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  std::vector<std::vector<T>> velocity_;
};

}  // namespace infinet
