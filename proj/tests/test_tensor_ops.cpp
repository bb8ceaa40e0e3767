// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/optimizer.hpp"
#include "core/rng.hpp"

using namespace infinet;

namespace {

Tensor<double> rand_tensor(Rng& rng, const Shape4& s, double lo = -1.0, double hi = 1.0,
                           bool requires_grad = false) {
  std::vector<double> v(static_cast<size_t>(s.size()));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from_data(s, std::move(v), requires_grad);
}

// Independent scalar re-derivation of the GDL formula, used as the oracle
// for the worked example.
double gdl_reference(const std::vector<double>& p, const std::vector<double>& g,
                     const std::vector<double>& w, int64_t classes, int64_t pixels) {
  double nu = 0.0, de = 0.0;
  for (int64_t l = 0; l < classes; ++l)
    for (int64_t x = 0; x < pixels; ++x) {
      nu += w[l] * p[l * pixels + x] * g[l * pixels + x];
      de += w[l] * (p[l * pixels + x] + g[l * pixels + x]);
    }
  return 1.0 - 2.0 * nu / (de + 1e-8);
}

}  // namespace

TEST_CASE("conv2d constant-input counting") {
  auto x = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  auto w = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
  auto b = Tensor<float>::zeros({1, 1, 1, 1});
  auto y = conv2d(x, w, b, 1);
  REQUIRE(y.shape() == Shape4{1, 1, 3, 3});
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0f));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0f));
  CHECK(y.at(0, 0, 1, 0) == doctest::Approx(6.0f));
}

TEST_CASE("conv2d scalar kernel") {
  auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto w = Tensor<float>::from_data({1, 1, 1, 1}, {2});
  auto b = Tensor<float>::from_data({1, 1, 1, 1}, {1});
  auto y = conv2d(x, w, b, 0);
  CHECK(y.data() == std::vector<float>{3, 5, 7, 9});
}

TEST_CASE("conv2d shape errors name both shapes") {
  auto x = Tensor<float>::zeros({1, 3, 4, 4});
  auto w = Tensor<float>::zeros({2, 4, 3, 3});
  auto b = Tensor<float>::zeros({1, 2, 1, 1});
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, 1),
                       doctest::Contains("(1,3,4,4)"), Error);
  auto w2 = Tensor<float>::zeros({2, 3, 3, 3});
  auto bad_b = Tensor<float>::zeros({1, 3, 1, 1});
  CHECK_THROWS_AS(conv2d(x, w2, bad_b, 1), Error);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  auto x = rand_tensor(rng, {2, 3, 5, 5});
  auto w = rand_tensor(rng, {4, 3, 3, 3});
  auto b = rand_tensor(rng, {1, 4, 1, 1}, -0.5, 0.5);
  std::vector<double> coeffs(static_cast<size_t>(2 * 4 * 5 * 5));
  for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);

  auto report = finite_difference_check(
      [&](const Tensor<double>& xv) {
        return weighted_sum(conv2d(xv, w, b, 1), std::vector<double>(coeffs));
      },
      x);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("conv2d is linear in its input with zero bias") {
  Rng rng(11);
  auto x = rand_tensor(rng, {1, 2, 6, 6});
  auto y = rand_tensor(rng, {1, 2, 6, 6});
  auto w = rand_tensor(rng, {3, 2, 3, 3});
  auto b = Tensor<double>::zeros({1, 3, 1, 1});
  const double a = 1.7, c = -0.6;

  std::vector<double> mixed(x.data().size());
  for (size_t i = 0; i < mixed.size(); ++i) mixed[i] = a * x.data()[i] + c * y.data()[i];
  auto lhs = conv2d(Tensor<double>::from_data(x.shape(), mixed), w, b, 1);
  auto fx = conv2d(x, w, b, 1);
  auto fy = conv2d(y, w, b, 1);
  for (size_t i = 0; i < lhs.data().size(); ++i)
    CHECK(lhs.data()[i] == doctest::Approx(a * fx.data()[i] + c * fy.data()[i]).epsilon(1e-12));
}

TEST_CASE("relu basics") {
  auto x = Tensor<float>::from_data({1, 1, 1, 3}, {-1, 0, 2});
  auto y = relu(x);
  CHECK(y.data() == std::vector<float>{0, 0, 2});

  auto neg = Tensor<float>::from_data({1, 1, 1, 3}, {-3, -1, -2}, true);
  auto out = reduce_sum(relu(neg));
  CHECK(out.value() == 0.0f);
  out.backward();
  CHECK(neg.grad() == std::vector<float>{0, 0, 0});
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
  Rng rng(3);
  auto xd = rand_tensor(rng, {1, 2, 4, 4}).data();
  for (auto& v : xd)
    if (std::abs(v) < 0.05) v += v >= 0 ? 0.05 : -0.05;
  std::vector<double> coeffs(xd.size());
  for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);
  auto report = finite_difference_check(
      [&](const Tensor<double>& x) { return weighted_sum(relu(x), std::vector<double>(coeffs)); },
      Tensor<double>::from_data({1, 2, 4, 4}, xd));
  CHECK(report.pass);
}

TEST_CASE("batch_norm train-mode normalizes per channel") {
  Rng rng(5);
  auto x = rand_tensor(rng, {4, 3, 6, 6}, -2.0, 5.0);
  auto bn = BatchNorm<double>::create(3);
  auto y = batch_norm(x, bn, Mode::Train);

  const int64_t M = 4 * 6 * 6;
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 36; ++i) mean += y.data()[(n * 3 + c) * 36 + i];
    mean /= M;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 36; ++i) {
        const double d = y.data()[(n * 3 + c) * 36 + i] - mean;
        var += d * d;
      }
    var /= M;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("batch_norm affine output has requested mean and std") {
  // Feed data that is already zero-mean unit-variance per channel.
  std::vector<double> vals;
  for (int i = 0; i < 64; ++i) vals.push_back(i < 32 ? -1.0 : 1.0);
  auto x = Tensor<double>::from_data({1, 1, 8, 8}, vals);
  auto bn = BatchNorm<double>::create(1);
  bn.gamma = Tensor<double>::from_data({1, 1, 1, 1}, {2.0}, true);
  bn.beta = Tensor<double>::from_data({1, 1, 1, 1}, {3.0}, true);
  auto y = batch_norm(x, bn, Mode::Train);
  double mean = 0.0;
  for (double v : y.data()) mean += v;
  mean /= 64.0;
  double var = 0.0;
  for (double v : y.data()) var += (v - mean) * (v - mean);
  var /= 64.0;
  CHECK(mean == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("batch_norm eval mode ignores batch statistics") {
  auto bn = BatchNorm<float>::create(1);
  bn.running_mean = {0.5f};
  bn.running_var = {4.0f};
  auto x = Tensor<float>::from_data({1, 1, 1, 2}, {100.0f, -100.0f});
  auto y = batch_norm(x, bn, Mode::Eval);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx((100.0f - 0.5f) / std::sqrt(4.0f + 1e-5f)).epsilon(1e-5));
  // Running stats untouched in eval mode.
  CHECK(bn.running_mean[0] == 0.5f);
}

TEST_CASE("batch_norm rejects single-element train batches") {
  auto x = Tensor<float>::zeros({1, 2, 1, 1});
  auto bn = BatchNorm<float>::create(2);
  CHECK_THROWS_AS(batch_norm(x, bn, Mode::Train), Error);
  CHECK_NOTHROW(batch_norm(x, bn, Mode::Eval));
}

TEST_CASE("batch_norm gradients match finite differences") {
  Rng rng(9);
  auto x = rand_tensor(rng, {3, 2, 4, 4});
  std::vector<double> coeffs(x.data().size());
  for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);
  auto report = finite_difference_check(
      [&](const Tensor<double>& xv) {
        auto bn = BatchNorm<double>::create(2);
        return weighted_sum(batch_norm(xv, bn, Mode::Train), std::vector<double>(coeffs));
      },
      x);
  CHECK(report.pass);
}

TEST_CASE("max_pool_2x2 picks the window max and records its offset") {
  auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto [y, idx] = max_pool_2x2(x);
  CHECK(y.data() == std::vector<float>{4});
  CHECK(idx.at(0) == 3);  // bottom-right of the 2x2 plane

  auto tie = Tensor<float>::from_data({1, 1, 2, 2}, {5, 5, 5, 5});
  auto [ty, tidx] = max_pool_2x2(tie);
  CHECK(ty.data() == std::vector<float>{5});
  CHECK(tidx.at(0) == 0);  // first element wins ties
}

TEST_CASE("max_pool_2x2 rejects odd spatial dims") {
  CHECK_THROWS_AS(max_pool_2x2(Tensor<float>::zeros({1, 1, 3, 4})), Error);
  CHECK_THROWS_AS(max_pool_2x2(Tensor<float>::zeros({1, 1, 4, 5})), Error);
}

TEST_CASE("max_unpool_2x2 places values at recorded positions") {
  auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto [pooled, idx] = max_pool_2x2(x);
  auto up = max_unpool_2x2(pooled, idx, {1, 1, 2, 2});
  CHECK(up.data() == std::vector<float>{0, 0, 0, 4});

  auto zero = Tensor<float>::zeros({1, 1, 1, 1});
  auto upz = max_unpool_2x2(zero, idx, {1, 1, 2, 2});
  CHECK(upz.data() == std::vector<float>{0, 0, 0, 0});
}

TEST_CASE("max_unpool_2x2 shape mismatch errors") {
  auto x = Tensor<float>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto [pooled, idx] = max_pool_2x2(x);
  CHECK_THROWS_AS(max_unpool_2x2(x, idx, {1, 1, 4, 4}), Error);         // input vs indices
  CHECK_THROWS_AS(max_unpool_2x2(pooled, idx, {1, 1, 4, 4}), Error);    // not spatial double
}

TEST_CASE("pool/unpool round trip is exact and windows have one nonzero") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape4 s{1 + static_cast<int64_t>(rng.uniform_int(2)), 1 + static_cast<int64_t>(rng.uniform_int(3)),
                   4, 4};
    auto x = rand_tensor(rng, s, 0.0, 1.0);
    auto [pooled, idx] = max_pool_2x2(x);
    auto up = max_unpool_2x2(pooled, idx, s);
    auto [pooled2, idx2] = max_pool_2x2(up);
    REQUIRE(pooled2.data() == pooled.data());  // bit-exact

    for (int64_t nc = 0; nc < s.n * s.c; ++nc)
      for (int64_t i = 0; i < s.h; i += 2)
        for (int64_t j = 0; j < s.w; j += 2) {
          int nonzero = 0;
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx)
              nonzero += up.data()[nc * s.h * s.w + (i + dy) * s.w + (j + dx)] != 0.0;
          CHECK(nonzero <= 1);
        }
  }
}

TEST_CASE("concat_channels widths and identity") {
  auto a = Tensor<float>::zeros({2, 64, 8, 8});
  auto b = Tensor<float>::zeros({2, 64, 8, 8});
  CHECK(concat_channels<float>({a, b}).shape() == Shape4{2, 128, 8, 8});
  CHECK(concat_channels<float>({a, b, a}).shape() == Shape4{2, 192, 8, 8});

  Rng rng(2);
  auto single = rand_tensor(rng, {1, 3, 4, 4});
  auto same = concat_channels<double>({single});
  CHECK(same.data() == single.data());

  auto bad = Tensor<float>::zeros({2, 64, 4, 8});
  CHECK_THROWS_WITH_AS(concat_channels<float>({a, bad}), doctest::Contains("(2,64,4,8)"), Error);
}

TEST_CASE("softmax_channels distributions") {
  auto x = Tensor<float>::zeros({1, 4, 1, 1});
  auto p = softmax_channels(x);
  for (int64_t c = 0; c < 4; ++c) CHECK(p.at(0, c, 0, 0) == doctest::Approx(0.25f));

  auto big = Tensor<float>::from_data({1, 2, 1, 1}, {1000.0f, 0.0f});
  auto pb = softmax_channels(big);
  CHECK(pb.at(0, 0, 0, 0) == doctest::Approx(1.0f));
  CHECK(pb.at(0, 1, 0, 0) == doctest::Approx(0.0f));

  Rng rng(4);
  auto logits = rand_tensor(rng, {2, 5, 3, 3}, -3.0, 3.0);
  auto probs = softmax_channels(logits);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t i = 0; i < 9; ++i) {
      double s = 0.0;
      for (int64_t c = 0; c < 5; ++c) s += probs.data()[(n * 5 + c) * 9 + i];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax jacobian-vector product matches finite differences") {
  Rng rng(8);
  auto x = rand_tensor(rng, {1, 4, 3, 3}, -2.0, 2.0);
  std::vector<double> coeffs(x.data().size());
  for (auto& c : coeffs) c = rng.uniform(-1.0, 1.0);
  auto report = finite_difference_check(
      [&](const Tensor<double>& xv) {
        return weighted_sum(softmax_channels(xv), std::vector<double>(coeffs));
      },
      x);
  CHECK(report.pass);
}

TEST_CASE("gdl_loss worked example: loss 0.3") {
  // 2 classes, 2 pixels, f = (0.5, 0.5) so w = (4, 4).
  // g = (class0, class1); p = ((0.8, 0.2), (0.4, 0.6)).
  auto weights = ClassWeights::from_frequencies({0.5, 0.5});
  CHECK(weights.weights[0] == doctest::Approx(4.0));
  // Layout (1, 2, 1, 2): channel-major per class.
  auto pred = Tensor<double>::from_data({1, 2, 1, 2}, {0.8, 0.4, 0.2, 0.6});
  auto target = Tensor<double>::from_data({1, 2, 1, 2}, {1.0, 0.0, 0.0, 1.0});
  auto loss = gdl_loss(pred, target, weights);
  CHECK(std::abs(loss.value() - 0.3) <= 1e-9);

  const double ref = gdl_reference({0.8, 0.4, 0.2, 0.6}, {1, 0, 0, 1}, {4, 4}, 2, 2);
  CHECK(loss.value() == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("gdl_loss extremes") {
  auto weights = ClassWeights::from_frequencies({0.25, 0.75});
  // pred == target -> loss 0
  auto t = Tensor<float>::from_data({1, 2, 2, 2}, {1, 0, 0, 1, 0, 1, 1, 0});
  auto loss0 = gdl_loss(t, t, weights);
  CHECK(std::abs(loss0.value()) <= 1e-6);
  // all mass on the wrong class -> loss 1
  auto wrong = Tensor<float>::from_data({1, 2, 2, 2}, {0, 1, 1, 0, 1, 0, 0, 1});
  auto loss1 = gdl_loss(wrong, t, weights);
  CHECK(std::abs(loss1.value() - 1.0) <= 1e-6);
}

TEST_CASE("gdl_loss strict mode rejects bad targets") {
  auto weights = ClassWeights::from_frequencies({0.5, 0.5});
  auto pred = Tensor<float>::from_data({1, 2, 1, 1}, {0.5, 0.5});
  auto bad = Tensor<float>::from_data({1, 2, 1, 1}, {0.7, 0.3});
  CHECK_THROWS_AS(gdl_loss(pred, bad, weights), Error);
  CHECK_NOTHROW(gdl_loss(pred, bad, weights, /*strict=*/false));
  auto mismatch = Tensor<float>::from_data({1, 2, 1, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS(gdl_loss(pred, mismatch, weights), Error);
}

TEST_CASE("gdl_loss stays in [0, 1] and gradient matches finite differences") {
  Rng rng(13);
  const Shape4 s{1, 3, 4, 4};
  std::vector<double> target(static_cast<size_t>(s.size()), 0.0);
  std::vector<double> freq(3, 0.0);
  for (int64_t i = 0; i < 16; ++i) {
    const int64_t cls = i < 3 ? i : rng.uniform_int(3);
    target[static_cast<size_t>(cls * 16 + i)] = 1.0;
    freq[static_cast<size_t>(cls)] += 1.0 / 16.0;
  }
  auto weights = ClassWeights::from_frequencies(freq);
  auto logits = rand_tensor(rng, s, -1.0, 1.0);
  auto probs = softmax_channels(logits);

  auto loss = gdl_loss(probs, Tensor<double>::from_data(s, target), weights);
  CHECK(loss.value() >= 0.0);
  CHECK(loss.value() <= 1.0 + 1e-9);

  auto report = finite_difference_check(
      [&](const Tensor<double>& p) {
        return gdl_loss(p, Tensor<double>::from_data(s, target), weights, /*strict=*/false);
      },
      Tensor<double>::from_data(s, probs.data()));
  CHECK(report.pass);
}

TEST_CASE("zero-frequency class is excluded from the weights") {
  auto w = ClassWeights::from_frequencies({0.0, 1.0});
  CHECK(w.weights[0] == 0.0);
  CHECK(w.weights[1] == 1.0);
}

TEST_CASE("sgd_momentum_step examples") {
  SUBCASE("plain sgd") {
    std::vector<NamedParam<double>> params{{"p", Tensor<double>::from_data({1, 1, 1, 1}, {5.0}, true)}};
    auto loss = weighted_sum(params[0].tensor, {1.0});
    loss.backward();
    SgdMomentum<double> opt(params);
    opt.step(params, 0.1, 0.0);
    CHECK(params[0].tensor.data()[0] == doctest::Approx(4.9).epsilon(1e-12));
    CHECK_FALSE(params[0].tensor.has_grad());
  }

  SUBCASE("two-step momentum closed form") {
    const double p0 = 2.0, lr = 0.01, mu = 0.95;
    std::vector<NamedParam<double>> params{{"p", Tensor<double>::from_data({1, 1, 1, 1}, {p0}, true)}};
    SgdMomentum<double> opt(params);
    for (int step = 0; step < 2; ++step) {
      auto loss = weighted_sum(params[0].tensor, {1.0});  // constant gradient 1
      loss.backward();
      opt.step(params, lr, mu);
    }
    CHECK(std::abs(params[0].tensor.data()[0] - (p0 - lr * (1.0 + 1.95))) <= 1e-12);
  }

  SUBCASE("momentum carry with zero gradient") {
    std::vector<NamedParam<double>> params{{"p", Tensor<double>::from_data({1, 1, 1, 1}, {1.0}, true)}};
    SgdMomentum<double> opt(params);
    opt.velocity()[0][0] = 2.0;
    auto loss = weighted_sum(params[0].tensor, {0.0});  // zero gradient
    loss.backward();
    opt.step(params, 0.1, 0.5);
    CHECK(params[0].tensor.data()[0] == doctest::Approx(1.0 - 0.1 * 0.5 * 2.0).epsilon(1e-12));
  }

  SUBCASE("missing gradient names the tensor") {
    std::vector<NamedParam<double>> params{
        {"conv.weight", Tensor<double>::from_data({1, 1, 1, 1}, {1.0}, true)}};
    SgdMomentum<double> opt(params);
    CHECK_THROWS_WITH_AS(opt.step(params, 0.1, 0.9), doctest::Contains("conv.weight"), Error);
  }
}

TEST_CASE("finite_difference_check fundamentals") {
  SUBCASE("linear op has gradient 3 everywhere") {
    auto x = Tensor<double>::from_data({1, 1, 1, 4}, {1.0, -2.0, 0.5, 3.0});
    auto report = finite_difference_check(
        [](const Tensor<double>& xv) { return weighted_sum(xv, {3.0, 3.0, 3.0, 3.0}); }, x,
        {.h = 1e-5, .tolerance = 1e-10});
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-10);
  }

  SUBCASE("non-scalar outputs are rejected") {
    auto x = Tensor<double>::from_data({1, 1, 1, 2}, {1.0, 2.0});
    CHECK_THROWS_AS(finite_difference_check([](const Tensor<double>& xv) { return relu(xv); }, x), Error);
  }

  SUBCASE("relu kink at exactly zero is flagged as skipped") {
    auto x = Tensor<double>::from_data({1, 1, 1, 3}, {1.0, 0.0, -1.0});
    FdOptions opt;
    opt.skip = [](double v) { return v == 0.0; };
    auto report = finite_difference_check(
        [](const Tensor<double>& xv) { return weighted_sum(relu(xv), {1.0, 1.0, 1.0}); }, x, opt);
    CHECK(report.skipped == 1);
    CHECK(report.checked == 2);
    CHECK(report.pass);
  }
}

TEST_CASE("non-finite forward values raise numeric errors") {
  auto x = Tensor<float>::from_data({1, 1, 1, 1}, {1e30f});
  auto w = Tensor<float>::from_data({1, 1, 1, 1}, {1e30f});
  auto b = Tensor<float>::zeros({1, 1, 1, 1});
  try {
    conv2d(x, w, b, 0);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
  }
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<float>::from_data({1, 1, 2, 2}, {1.0f}), Error);
  auto t = Tensor<float>::zeros({2, 3, 4, 5});
  CHECK(t.numel() == 120);
  CHECK_THROWS_AS(t.grad(), Error);  // not populated yet
}
