// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations on Tensor<T>. Convolutions run as im2col plus a
// GEMM; everything else is direct loops. Batch-level parallelism only, with
// per-image partial buffers reduced in batch order, so results are identical
// at any thread count.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace infinet {

enum class Mode { Train, Eval };

inline const char* mode_name(Mode m) { return m == Mode::Train ? "train" : "eval"; }

// Argmax locations recorded by max_pool_2x2: for each pooled element, the
// flat offset (h * W + w) of the window maximum inside its pre-pool plane.
struct PoolIndices {
  Shape4 shape;  // equals the pooled output shape
  std::shared_ptr<const std::vector<int32_t>> values;
  // Wiring-audit metadata, set by the model when tracing is requested.
  int arm_tag = -1;
  int level_tag = -1;

  int64_t count() const { return shape.size(); }
  int32_t at(int64_t i) const { return (*values)[static_cast<size_t>(i)]; }
};

// Per-class loss weights, omega_l = 1 / f_l^2 (zero-frequency classes are
// excluded with omega = 0).
struct ClassWeights {
  std::vector<double> weights;
  std::vector<double> frequencies;

  static ClassWeights from_frequencies(std::vector<double> f) {
    double total = 0.0;
    for (double v : f) {
      require(v >= 0.0 && v <= 1.0, ErrorKind::Data, "class frequency outside [0,1]");
      total += v;
    }
    require(std::abs(total - 1.0) <= 1e-9, ErrorKind::Data, "class frequencies must sum to 1");
    ClassWeights cw;
    cw.frequencies = std::move(f);
    cw.weights.resize(cw.frequencies.size());
    for (size_t l = 0; l < cw.frequencies.size(); ++l) {
      double fl = cw.frequencies[l];
      cw.weights[l] = fl > 0.0 ? 1.0 / (fl * fl) : 0.0;
    }
    return cw;
  }

  int64_t num_classes() const { return static_cast<int64_t>(weights.size()); }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta;  // (1,C,1,1)
  std::vector<T> running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNorm create(int64_t channels) {
    BatchNorm bn;
    bn.gamma = Tensor<T>::full({1, channels, 1, 1}, T(1), true);
    bn.beta = Tensor<T>::zeros({1, channels, 1, 1}, true);
    bn.running_mean.assign(static_cast<size_t>(channels), T(0));
    bn.running_var.assign(static_cast<size_t>(channels), T(1));
    return bn;
  }

  int64_t channels() const { return static_cast<int64_t>(running_mean.size()); }
};

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unpacks one image plane set into the (C*kh*kw) x (OH*OW) patch matrix.
// Every cell is written exactly once (zeros only where padding reaches).
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t pad,
            int64_t OH, int64_t OW, T* col) {
  for (int64_t c = 0; c < C; ++c) {
    const T* plane = x + c * H * W;
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((c * kh + ky) * kw + kx) * OH * OW;
        const int64_t oy_lo = std::max<int64_t>(0, pad - ky);
        const int64_t oy_hi = std::min<int64_t>(OH, H + pad - ky);
        const int64_t ox_lo = std::max<int64_t>(0, pad - kx);
        const int64_t ox_hi = std::min<int64_t>(OW, W + pad - kx);
        if (oy_lo > 0) std::fill(row, row + oy_lo * OW, T(0));
        for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
          T* dst = row + oy * OW;
          const int64_t iy = oy - pad + ky;
          if (ox_lo > 0) std::fill(dst, dst + ox_lo, T(0));
          if (ox_hi > ox_lo)
            std::memcpy(dst + ox_lo, plane + iy * W + (ox_lo - pad + kx),
                        static_cast<size_t>(ox_hi - ox_lo) * sizeof(T));
          if (ox_hi < OW) std::fill(dst + ox_hi, dst + OW, T(0));
        }
        if (oy_hi < OH) std::fill(row + std::max<int64_t>(oy_hi, oy_lo) * OW, row + OH * OW, T(0));
      }
    }
  }
}

// Scatter-add of the patch-matrix gradient back onto an image plane set.
template <typename T>
void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t pad,
                int64_t OH, int64_t OW, T* dx) {
  for (int64_t c = 0; c < C; ++c) {
    T* plane = dx + c * H * W;
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((c * kh + ky) * kw + kx) * OH * OW;
        const int64_t oy_lo = std::max<int64_t>(0, pad - ky);
        const int64_t oy_hi = std::min<int64_t>(OH, H + pad - ky);
        const int64_t ox_lo = std::max<int64_t>(0, pad - kx);
        const int64_t ox_hi = std::min<int64_t>(OW, W + pad - kx);
        for (int64_t oy = oy_lo; oy < oy_hi; ++oy) {
          const int64_t iy = oy - pad + ky;
          const T* src = row + oy * OW;
          T* dst = plane + iy * W + (ox_lo - pad + kx);
          for (int64_t ox = ox_lo; ox < ox_hi; ++ox) dst[ox - ox_lo] += src[ox];
        }
      }
    }
  }
}

}  // namespace detail

// 2D cross-correlation. x: (N,C,H,W), kernel: (K,C,kh,kw), bias: (1,K,1,1).
// Output spatial dims follow H' = H + 2*pad - kh + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int64_t padding) {
  const Shape4 xs = x.shape();
  const Shape4 ks = kernel.shape();
  require(padding >= 0, ErrorKind::Config, "conv2d: negative padding");
  require(xs.c == ks.c, ErrorKind::Shape,
          "conv2d: input channels do not match kernel, input " + xs.str() + " vs kernel " + ks.str());
  require(bias.numel() == ks.n, ErrorKind::Shape,
          "conv2d: bias length " + std::to_string(bias.numel()) + " does not match kernel count " +
              std::to_string(ks.n));

  const int64_t N = xs.n, C = xs.c, H = xs.h, W = xs.w;
  const int64_t K = ks.n, kh = ks.h, kw = ks.w;
  const int64_t OH = H + 2 * padding - kh + 1;
  const int64_t OW = W + 2 * padding - kw + 1;
  require(OH > 0 && OW > 0, ErrorKind::Shape,
          "conv2d: kernel " + ks.str() + " does not fit input " + xs.str() + " with padding " +
              std::to_string(padding));

  const Shape4 os{N, K, OH, OW};
  const int64_t ckk = C * kh * kw;
  const int64_t opix = OH * OW;
  const bool pointwise = (kh == 1 && kw == 1 && padding == 0);

  std::vector<T> out(static_cast<size_t>(os.size()));
  const T* xd = x.data().data();
  const T* wd = kernel.data().data();
  const T* bd = bias.data().data();

#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    Eigen::Map<const detail::MatRM<T>> wmat(wd, K, ckk);
    Eigen::Map<detail::MatRM<T>> omat(out.data() + n * K * opix, K, opix);
    if (pointwise) {
      Eigen::Map<const detail::MatRM<T>> cmat(xd + n * C * H * W, ckk, opix);
      omat.noalias() = wmat * cmat;
    } else {
      std::vector<T> col(static_cast<size_t>(ckk * opix));
      detail::im2col(xd + n * C * H * W, C, H, W, kh, kw, padding, OH, OW, col.data());
      Eigen::Map<const detail::MatRM<T>> cmat(col.data(), ckk, opix);
      omat.noalias() = wmat * cmat;
    }
    for (int64_t k = 0; k < K; ++k) omat.row(k).array() += bd[k];
  }

  auto xn = x.node();
  auto wn = kernel.node();
  auto bn = bias.node();
  auto backward = [xn, wn, bn, xs, ks, os, padding, pointwise](detail::TensorNode<T>& node) {
    const int64_t N = xs.n, C = xs.c, H = xs.h, W = xs.w;
    const int64_t K = ks.n, kh = ks.h, kw = ks.w;
    const int64_t OH = os.h, OW = os.w;
    const int64_t ckk = C * kh * kw;
    const int64_t opix = OH * OW;
    const T* g = node.grad.data();

    if (bn->requires_grad) {
      std::vector<T> db(static_cast<size_t>(K), T(0));
      for (int64_t n = 0; n < N; ++n)
        for (int64_t k = 0; k < K; ++k) {
          double acc = 0.0;
          const T* row = g + (n * K + k) * opix;
          for (int64_t i = 0; i < opix; ++i) acc += static_cast<double>(row[i]);
          db[k] += static_cast<T>(acc);
        }
      detail::add_grad(bn, db);
    }

    const bool need_dw = wn->requires_grad;
    const bool need_dx = xn->requires_grad;
    if (!need_dw && !need_dx) return;

    std::vector<std::vector<T>> dw_per_n;
    if (need_dw) dw_per_n.assign(static_cast<size_t>(N), {});
    std::vector<T> dx;
    if (need_dx) dx.assign(static_cast<size_t>(xs.size()), T(0));
    const T* xd = xn->data.data();
    const T* wd = wn->data.data();

#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
      Eigen::Map<const detail::MatRM<T>> gmat(g + n * K * opix, K, opix);
      std::vector<T> col;
      const T* col_ptr = nullptr;
      if (!pointwise) {
        col.resize(static_cast<size_t>(ckk * opix));
        detail::im2col(xd + n * C * H * W, C, H, W, kh, kw, padding, OH, OW, col.data());
        col_ptr = col.data();
      } else {
        col_ptr = xd + n * C * H * W;
      }
      if (need_dw) {
        dw_per_n[static_cast<size_t>(n)].resize(static_cast<size_t>(K * ckk));
        Eigen::Map<detail::MatRM<T>> dwmat(dw_per_n[static_cast<size_t>(n)].data(), K, ckk);
        Eigen::Map<const detail::MatRM<T>> cmat(col_ptr, ckk, opix);
        dwmat.noalias() = gmat * cmat.transpose();
      }
      if (need_dx) {
        Eigen::Map<const detail::MatRM<T>> wmat(wd, K, ckk);
        if (pointwise) {
          Eigen::Map<detail::MatRM<T>> dxmat(dx.data() + n * C * H * W, ckk, opix);
          dxmat.noalias() = wmat.transpose() * gmat;
        } else {
          std::vector<T> dcol(static_cast<size_t>(ckk * opix));
          Eigen::Map<detail::MatRM<T>> dcmat(dcol.data(), ckk, opix);
          dcmat.noalias() = wmat.transpose() * gmat;
          detail::col2im_add(dcol.data(), C, H, W, kh, kw, padding, OH, OW, dx.data() + n * C * H * W);
        }
      }
    }

    if (need_dw) {
      wn->ensure_grad();
      for (int64_t n = 0; n < N; ++n) {
        const auto& part = dw_per_n[static_cast<size_t>(n)];
        for (size_t i = 0; i < part.size(); ++i) wn->grad[i] += part[i];
      }
    }
    if (need_dx) detail::add_grad(xn, dx);
  };

  return Tensor<T>::from_op(os, std::move(out), {x, kernel, bias}, std::move(backward), "conv2d");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().size());
  const auto& xd = x.data();
  for (size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);

  auto xn = x.node();
  auto backward = [xn](detail::TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const auto& xd = xn->data;
    for (size_t i = 0; i < xd.size(); ++i)
      if (xd[i] > T(0)) xn->grad[i] += node.grad[i];
  };
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, std::move(backward), "relu");
}

// Batch normalization over (N,H,W) per channel. Train mode normalizes with
// batch statistics and updates the running estimates in `bn` (a side effect
// on the layer state); eval mode uses the running estimates only.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNorm<T>& bn, Mode mode) {
  const Shape4 xs = x.shape();
  require(xs.c == bn.channels(), ErrorKind::Shape,
          "batch_norm: input " + xs.str() + " does not match state with " +
              std::to_string(bn.channels()) + " channels");
  const int64_t N = xs.n, C = xs.c, HW = xs.h * xs.w;
  const int64_t M = N * HW;
  const auto& xd = x.data();
  const auto& gamma = bn.gamma.data();
  const auto& beta = bn.beta.data();

  std::vector<T> out(xd.size());
  auto xhat = std::make_shared<std::vector<T>>(xd.size());
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(C));

  if (mode == Mode::Train) {
    require(M > 1, ErrorKind::Data, "batch_norm: train mode needs N*H*W > 1 (variance undefined)");
    for (int64_t c = 0; c < C; ++c) {
      double mean = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = xd.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) mean += static_cast<double>(p[i]);
      }
      mean /= static_cast<double>(M);
      double var = 0.0;
      for (int64_t n = 0; n < N; ++n) {
        const T* p = xd.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(M);
      const double istd = 1.0 / std::sqrt(var + bn.epsilon);
      (*invstd)[static_cast<size_t>(c)] = static_cast<T>(istd);
      for (int64_t n = 0; n < N; ++n) {
        const T* p = xd.data() + (n * C + c) * HW;
        T* xh = xhat->data() + (n * C + c) * HW;
        T* o = out.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const T h = static_cast<T>((static_cast<double>(p[i]) - mean) * istd);
          xh[i] = h;
          o[i] = gamma[static_cast<size_t>(c)] * h + beta[static_cast<size_t>(c)];
        }
      }
      auto& rm = bn.running_mean[static_cast<size_t>(c)];
      auto& rv = bn.running_var[static_cast<size_t>(c)];
      rm = static_cast<T>((1.0 - bn.momentum) * static_cast<double>(rm) + bn.momentum * mean);
      rv = static_cast<T>((1.0 - bn.momentum) * static_cast<double>(rv) + bn.momentum * var);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      const double istd = 1.0 / std::sqrt(static_cast<double>(bn.running_var[static_cast<size_t>(c)]) + bn.epsilon);
      const double mean = static_cast<double>(bn.running_mean[static_cast<size_t>(c)]);
      (*invstd)[static_cast<size_t>(c)] = static_cast<T>(istd);
      for (int64_t n = 0; n < N; ++n) {
        const T* p = xd.data() + (n * C + c) * HW;
        T* xh = xhat->data() + (n * C + c) * HW;
        T* o = out.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const T h = static_cast<T>((static_cast<double>(p[i]) - mean) * istd);
          xh[i] = h;
          o[i] = gamma[static_cast<size_t>(c)] * h + beta[static_cast<size_t>(c)];
        }
      }
    }
  }

  auto xn = x.node();
  auto gn = bn.gamma.node();
  auto bnode = bn.beta.node();
  auto backward = [xn, gn, bnode, xhat, invstd, xs, mode](detail::TensorNode<T>& node) {
    const int64_t N = xs.n, C = xs.c, HW = xs.h * xs.w;
    const int64_t M = N * HW;
    const T* g = node.grad.data();

    std::vector<double> sum_g(static_cast<size_t>(C), 0.0), sum_gx(static_cast<size_t>(C), 0.0);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T* gr = g + (n * C + c) * HW;
        const T* xh = xhat->data() + (n * C + c) * HW;
        double a = 0.0, b = 0.0;
        for (int64_t i = 0; i < HW; ++i) {
          a += static_cast<double>(gr[i]);
          b += static_cast<double>(gr[i]) * static_cast<double>(xh[i]);
        }
        sum_g[static_cast<size_t>(c)] += a;
        sum_gx[static_cast<size_t>(c)] += b;
      }

    if (bnode->requires_grad) {
      bnode->ensure_grad();
      for (int64_t c = 0; c < C; ++c) bnode->grad[static_cast<size_t>(c)] += static_cast<T>(sum_g[static_cast<size_t>(c)]);
    }
    if (gn->requires_grad) {
      gn->ensure_grad();
      for (int64_t c = 0; c < C; ++c) gn->grad[static_cast<size_t>(c)] += static_cast<T>(sum_gx[static_cast<size_t>(c)]);
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      const auto& gamma = gn->data;
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const T* gr = g + (n * C + c) * HW;
          const T* xh = xhat->data() + (n * C + c) * HW;
          T* dx = xn->grad.data() + (n * C + c) * HW;
          const double gam = static_cast<double>(gamma[static_cast<size_t>(c)]);
          const double istd = static_cast<double>((*invstd)[static_cast<size_t>(c)]);
          if (mode == Mode::Train) {
            const double mg = sum_g[static_cast<size_t>(c)] / static_cast<double>(M);
            const double mgx = sum_gx[static_cast<size_t>(c)] / static_cast<double>(M);
            for (int64_t i = 0; i < HW; ++i)
              dx[i] += static_cast<T>(gam * istd *
                                      (static_cast<double>(gr[i]) - mg - static_cast<double>(xh[i]) * mgx));
          } else {
            for (int64_t i = 0; i < HW; ++i)
              dx[i] += static_cast<T>(gam * istd * static_cast<double>(gr[i]));
          }
        }
    }
  };

  return Tensor<T>::from_op(xs, std::move(out), {x, bn.gamma, bn.beta}, std::move(backward), "batch_norm");
}

// 2x2 max pooling, stride 2. Ties break to the first element in raster
// order. Returns the pooled tensor plus the argmax locations.
template <typename T>
std::pair<Tensor<T>, PoolIndices> max_pool_2x2(const Tensor<T>& x) {
  const Shape4 xs = x.shape();
  require(xs.h % 2 == 0 && xs.w % 2 == 0, ErrorKind::Shape,
          "max_pool_2x2: spatial dims must be even, got " + xs.str());
  const Shape4 os{xs.n, xs.c, xs.h / 2, xs.w / 2};
  const int64_t W = xs.w;

  std::vector<T> out(static_cast<size_t>(os.size()));
  auto idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(os.size()));
  const auto& xd = x.data();

  int64_t o = 0;
  for (int64_t n = 0; n < xs.n; ++n)
    for (int64_t c = 0; c < xs.c; ++c) {
      const T* plane = xd.data() + (n * xs.c + c) * xs.h * xs.w;
      for (int64_t i = 0; i < os.h; ++i)
        for (int64_t j = 0; j < os.w; ++j, ++o) {
          const int64_t y0 = 2 * i, x0 = 2 * j;
          T best = plane[y0 * W + x0];
          int32_t bi = static_cast<int32_t>(y0 * W + x0);
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx) {
              const int64_t f = (y0 + dy) * W + (x0 + dx);
              if (plane[f] > best) {
                best = plane[f];
                bi = static_cast<int32_t>(f);
              }
            }
          out[static_cast<size_t>(o)] = best;
          (*idx)[static_cast<size_t>(o)] = bi;
        }
    }

  auto xn = x.node();
  auto backward = [xn, idx, xs, os](detail::TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const int64_t opix = os.h * os.w;
    const int64_t ipix = xs.h * xs.w;
    for (int64_t nc = 0; nc < os.n * os.c; ++nc) {
      const T* g = node.grad.data() + nc * opix;
      T* dx = xn->grad.data() + nc * ipix;
      const int32_t* ix = idx->data() + nc * opix;
      for (int64_t i = 0; i < opix; ++i) dx[ix[i]] += g[i];
    }
  };

  Tensor<T> pooled = Tensor<T>::from_op(os, std::move(out), {x}, std::move(backward), "max_pool_2x2");
  return {pooled, PoolIndices{os, idx}};
}

// Index-preserving unpooling: each input value lands at its recorded argmax
// location, all other positions are zero. No trainable parameters.
template <typename T>
Tensor<T> max_unpool_2x2(const Tensor<T>& x, const PoolIndices& indices, const Shape4& output_shape) {
  const Shape4 xs = x.shape();
  require(xs == indices.shape, ErrorKind::Shape,
          "max_unpool_2x2: input " + xs.str() + " does not match indices " + indices.shape.str());
  require(output_shape.n == xs.n && output_shape.c == xs.c && output_shape.h == 2 * xs.h &&
              output_shape.w == 2 * xs.w,
          ErrorKind::Shape,
          "max_unpool_2x2: output shape " + output_shape.str() + " is not the spatial double of " + xs.str());

  const int64_t opix = output_shape.h * output_shape.w;
  const int64_t ipix = xs.h * xs.w;
  const int64_t W = output_shape.w;
  std::vector<T> out(static_cast<size_t>(output_shape.size()), T(0));
  const auto& xd = x.data();
  auto idx = indices.values;

  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* in = xd.data() + nc * ipix;
    const int32_t* ix = idx->data() + nc * ipix;
    T* o = out.data() + nc * opix;
    for (int64_t i = 0; i < xs.h; ++i)
      for (int64_t j = 0; j < xs.w; ++j) {
        const int32_t f = ix[i * xs.w + j];
        const int64_t y = f / W, xcol = f % W;
        require(y / 2 == i && xcol / 2 == j, ErrorKind::Data,
                "max_unpool_2x2: stored index " + std::to_string(f) + " lies outside its 2x2 window");
        o[f] = in[i * xs.w + j];
      }
  }

  auto xn = x.node();
  auto backward = [xn, idx, xs, opix, ipix](detail::TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
      const T* g = node.grad.data() + nc * opix;
      T* dx = xn->grad.data() + nc * ipix;
      const int32_t* ix = idx->data() + nc * ipix;
      for (int64_t i = 0; i < ipix; ++i) dx[i] += g[ix[i]];
    }
  };

  return Tensor<T>::from_op(output_shape, std::move(out), {x}, std::move(backward), "max_unpool_2x2");
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs) {
  require(!inputs.empty(), ErrorKind::Config, "concat_channels: no inputs");
  const Shape4 first = inputs.front().shape();
  int64_t cout = 0;
  for (const auto& t : inputs) {
    const Shape4 s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      std::string all;
      for (const auto& u : inputs) all += u.shape().str() + " ";
      fail(ErrorKind::Shape, "concat_channels: spatial mismatch across inputs: " + all);
    }
    cout += s.c;
  }
  const Shape4 os{first.n, cout, first.h, first.w};
  const int64_t pix = first.h * first.w;

  std::vector<T> out(static_cast<size_t>(os.size()));
  for (int64_t n = 0; n < os.n; ++n) {
    int64_t coff = 0;
    for (const auto& t : inputs) {
      const int64_t ci = t.shape().c;
      std::memcpy(out.data() + (n * cout + coff) * pix, t.data().data() + n * ci * pix,
                  static_cast<size_t>(ci * pix) * sizeof(T));
      coff += ci;
    }
  }

  std::vector<std::shared_ptr<detail::TensorNode<T>>> pnodes;
  std::vector<int64_t> chans;
  for (const auto& t : inputs) {
    pnodes.push_back(t.node());
    chans.push_back(t.shape().c);
  }
  auto backward = [pnodes, chans, os, pix](detail::TensorNode<T>& node) {
    int64_t coff = 0;
    for (size_t pi = 0; pi < pnodes.size(); ++pi) {
      auto& p = pnodes[pi];
      const int64_t ci = chans[pi];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t n = 0; n < os.n; ++n) {
          const T* g = node.grad.data() + (n * os.c + coff) * pix;
          T* dst = p->grad.data() + n * ci * pix;
          for (int64_t i = 0; i < ci * pix; ++i) dst[i] += g[i];
        }
      }
      coff += ci;
    }
  };

  return Tensor<T>::from_op(os, std::move(out), inputs, std::move(backward), "concat_channels");
}

// Channel-wise softmax per pixel, stabilized by max subtraction.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  const Shape4 xs = x.shape();
  const int64_t C = xs.c, pix = xs.h * xs.w;
  std::vector<T> out(x.data().size());
  const auto& xd = x.data();

  for (int64_t n = 0; n < xs.n; ++n) {
    const T* base = xd.data() + n * C * pix;
    T* ob = out.data() + n * C * pix;
    for (int64_t i = 0; i < pix; ++i) {
      T m = base[i];
      for (int64_t c = 1; c < C; ++c) m = std::max(m, base[c * pix + i]);
      double s = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        const double e = std::exp(static_cast<double>(base[c * pix + i] - m));
        ob[c * pix + i] = static_cast<T>(e);
        s += e;
      }
      const double inv = 1.0 / s;
      for (int64_t c = 0; c < C; ++c) ob[c * pix + i] = static_cast<T>(static_cast<double>(ob[c * pix + i]) * inv);
    }
  }

  auto xn = x.node();
  auto on = std::make_shared<std::vector<T>>(out);  // softmax output reused in backward
  auto backward = [xn, on, xs](detail::TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const int64_t C = xs.c, pix = xs.h * xs.w;
    for (int64_t n = 0; n < xs.n; ++n) {
      const T* p = on->data() + n * C * pix;
      const T* g = node.grad.data() + n * C * pix;
      T* dx = xn->grad.data() + n * C * pix;
      for (int64_t i = 0; i < pix; ++i) {
        double dot = 0.0;
        for (int64_t c = 0; c < C; ++c)
          dot += static_cast<double>(g[c * pix + i]) * static_cast<double>(p[c * pix + i]);
        for (int64_t c = 0; c < C; ++c)
          dx[c * pix + i] += static_cast<T>(static_cast<double>(p[c * pix + i]) *
                                            (static_cast<double>(g[c * pix + i]) - dot));
      }
    }
  };

  return Tensor<T>::from_op(xs, std::move(out), {x}, std::move(backward), "softmax_channels");
}

inline constexpr double kGdlEpsilon = 1e-8;  // denominator-only stabilizer

// Generalized Dice Loss over classes and pixels:
//   1 - 2 * sum_l w_l sum_x p g / (sum_l w_l sum_x (p + g) + eps).
// Reductions run in double regardless of T. Gradient flows to pred only.
template <typename T>
Tensor<T> gdl_loss(const Tensor<T>& pred, const Tensor<T>& target, const ClassWeights& weights,
                   bool strict = true) {
  const Shape4 ps = pred.shape();
  require(ps == target.shape(), ErrorKind::Shape,
          "gdl_loss: pred " + ps.str() + " vs target " + target.shape().str());
  require(ps.c == weights.num_classes(), ErrorKind::Shape,
          "gdl_loss: " + std::to_string(ps.c) + " channels vs " +
              std::to_string(weights.num_classes()) + " class weights");

  const int64_t C = ps.c, pix = ps.h * ps.w;
  const auto& pd = pred.data();
  const auto& gd = target.data();

  if (strict) {
    for (int64_t n = 0; n < ps.n; ++n)
      for (int64_t i = 0; i < pix; ++i) {
        double tsum = 0.0, psum = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          const T tv = gd[static_cast<size_t>((n * C + c) * pix + i)];
          require(tv == T(0) || tv == T(1), ErrorKind::Data,
                  "gdl_loss: target is not one-hot (entry neither 0 nor 1)");
          tsum += static_cast<double>(tv);
          psum += static_cast<double>(pd[static_cast<size_t>((n * C + c) * pix + i)]);
        }
        require(tsum == 1.0, ErrorKind::Data, "gdl_loss: target rows must sum to 1 (one-hot)");
        require(std::abs(psum - 1.0) <= 1e-3, ErrorKind::Data,
                "gdl_loss: pred rows must sum to 1 (got " + std::to_string(psum) + ")");
      }
  }

  double numer = 0.0, denom = 0.0;
  for (int64_t n = 0; n < ps.n; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* p = pd.data() + (n * C + c) * pix;
      const T* g = gd.data() + (n * C + c) * pix;
      double a = 0.0, b = 0.0;
      for (int64_t i = 0; i < pix; ++i) {
        a += static_cast<double>(p[i]) * static_cast<double>(g[i]);
        b += static_cast<double>(p[i]) + static_cast<double>(g[i]);
      }
      numer += weights.weights[static_cast<size_t>(c)] * a;
      denom += weights.weights[static_cast<size_t>(c)] * b;
    }

  const double d = denom + kGdlEpsilon;
  const double loss = 1.0 - 2.0 * numer / d;

  auto pn = pred.node();
  auto tn = target.node();
  auto w = weights.weights;
  auto backward = [pn, tn, w, ps, numer, d](detail::TensorNode<T>& node) {
    if (!pn->requires_grad) return;
    pn->ensure_grad();
    const int64_t C = ps.c, pix = ps.h * ps.w;
    const double up = static_cast<double>(node.grad[0]);
    const double inv_d2 = 1.0 / (d * d);
    for (int64_t n = 0; n < ps.n; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T* g = tn->data.data() + (n * C + c) * pix;
        T* dp = pn->grad.data() + (n * C + c) * pix;
        const double wc = w[static_cast<size_t>(c)];
        for (int64_t i = 0; i < pix; ++i)
          dp[i] += static_cast<T>(up * (-2.0) * wc * (static_cast<double>(g[i]) * d - numer) * inv_d2);
      }
  };

  return Tensor<T>::from_op({1, 1, 1, 1}, {static_cast<T>(loss)}, {pred, target}, std::move(backward),
                            "gdl_loss");
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
  double s = 0.0;
  for (const T& v : x.data()) s += static_cast<double>(v);
  auto xn = x.node();
  auto backward = [xn](detail::TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T g = node.grad[0];
    for (auto& v : xn->grad) v += g;
  };
  return Tensor<T>::from_op({1, 1, 1, 1}, {static_cast<T>(s)}, {x}, std::move(backward), "reduce_sum");
}

// Fixed-coefficient contraction to a scalar; the workhorse for scalarizing
// op outputs in gradient checks.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::vector<T> coeffs) {
  require(static_cast<int64_t>(coeffs.size()) == x.numel(), ErrorKind::Shape,
          "weighted_sum: coefficient count does not match tensor size");
  double s = 0.0;
  const auto& xd = x.data();
  for (size_t i = 0; i < xd.size(); ++i) s += static_cast<double>(xd[i]) * static_cast<double>(coeffs[i]);
  auto xn = x.node();
  auto cs = std::make_shared<std::vector<T>>(std::move(coeffs));
  auto backward = [xn, cs](detail::TensorNode<T>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T g = node.grad[0];
    for (size_t i = 0; i < cs->size(); ++i) xn->grad[i] += g * (*cs)[i];
  };
  return Tensor<T>::from_op({1, 1, 1, 1}, {static_cast<T>(s)}, {x}, std::move(backward), "weighted_sum");
}

}  // namespace infinet
