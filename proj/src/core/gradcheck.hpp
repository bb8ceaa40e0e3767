// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient verification. Runs at 64-bit precision; the
// closure under test must reduce to a scalar.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace infinet {

struct FdOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  // Elements of the input where the op is non-differentiable (kinks) can be
  // excluded; they are counted as skipped, not failed.
  std::function<bool(double)> skip = nullptr;
  // Composed graphs can sit exactly on a ReLU/pool kink, where the analytic
  // gradient is a one-sided subgradient but the central difference averages
  // both sides. With kink_probe on, failing elements are re-examined with
  // one-sided differences: if the two slopes visibly disagree and the
  // analytic value matches one side, the element counts as skipped.
  bool kink_probe = false;
};

struct FdReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;
  int64_t worst_index = -1;
  bool pass = true;
};

namespace detail {

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

// One-sided slope classification at a failing element. `fwd` and `bwd` are
// the forward/backward difference quotients around the base point.
inline bool looks_like_kink(double analytic, double fwd, double bwd) {
  const double scale = std::max({std::abs(fwd), std::abs(bwd), 1e-6});
  if (std::abs(fwd - bwd) <= 1e-3 * scale) return false;  // slopes agree: genuinely smooth
  const double lo = std::min(fwd, bwd), hi = std::max(fwd, bwd);
  const double margin = 1e-3 * scale + 1e-12;
  return analytic >= lo - margin && analytic <= hi + margin;
}

}  // namespace detail

// f must map a (1,1,1,1)-gradable tensor function of `x0`. Analytic gradient
// comes from one reverse pass; the estimate from two evaluations per element.
inline FdReport finite_difference_check(
    const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x0,
    const FdOptions& opt = {}) {
  Tensor<double> x = Tensor<double>::from_data(x0.shape(), x0.data(), true);
  Tensor<double> y = f(x);
  require(y.numel() == 1, ErrorKind::Shape,
          "finite_difference_check: op output must be scalar, got " + y.shape().str());
  y.backward();
  const std::vector<double> analytic = x.grad();

  FdReport report;
  const auto& base = x0.data();
  double f_base = 0.0;
  bool have_f_base = false;
  for (size_t i = 0; i < base.size(); ++i) {
    if (opt.skip && opt.skip(base[i])) {
      ++report.skipped;
      continue;
    }
    std::vector<double> plus = base, minus = base;
    plus[i] += opt.h;
    minus[i] -= opt.h;
    const double fp = f(Tensor<double>::from_data(x0.shape(), std::move(plus))).value();
    const double fm = f(Tensor<double>::from_data(x0.shape(), std::move(minus))).value();
    const double fd = (fp - fm) / (2.0 * opt.h);
    const double err = detail::rel_err(analytic[i], fd);
    if (err > opt.tolerance && opt.kink_probe) {
      if (!have_f_base) {
        f_base = f(Tensor<double>::from_data(x0.shape(), base)).value();
        have_f_base = true;
      }
      if (detail::looks_like_kink(analytic[i], (fp - f_base) / opt.h, (f_base - fm) / opt.h)) {
        ++report.skipped;
        continue;
      }
    }
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = static_cast<int64_t>(i);
    }
    ++report.checked;
  }
  report.pass = report.max_rel_err < opt.tolerance && report.checked > 0;
  return report;
}

}  // namespace infinet
