#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <functional>
#include <limits>

#include "fingerdiff/nn.hpp"
#include "fingerdiff/rng.hpp"

using namespace fingerdiff;

namespace {

Tensor<double> random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, scale);
  return t;
}

// Central finite differences of a scalar function w.r.t. one tensor.
double max_fd_rel_error(Tensor<double>& x, const Tensor<double>& analytic,
                        const std::function<double()>& loss_fn, double h = 1e-6) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double lp = loss_fn();
    x[i] = saved - h;
    const double lm = loss_fn();
    x[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::int64_t i = 0; i < y.numel(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d: matches a naive convolution oracle") {
  Rng rng(1);
  Conv2d<double> conv;
  conv.init(3, 5, 3, 2, 1, rng);
  const auto x = random_tensor({2, 3, 9, 9}, rng);
  const auto y = conv.forward(x, nullptr);

  const int ho = conv_out_extent(9, 3, 2, 1);
  REQUIRE(y.shape == std::vector<std::int64_t>{2, 5, ho, ho});

  // independent 7-loop reference
  for (int f = 0; f < 2; ++f)
    for (int co = 0; co < 5; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < ho; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < 3; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = oy * 2 - 1 + ky;
                const int ix = ox * 2 - 1 + kx;
                if (iy < 0 || iy >= 9 || ix < 0 || ix >= 9) continue;
                acc += conv.w[(co * 3 + ci) * 9 + ky * 3 + kx] *
                       x[((f * 3 + ci) * 9 + iy) * 9 + ix];
              }
          CHECK(y[((f * 5 + co) * ho + oy) * ho + ox] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv2d: backward matches finite differences") {
  Rng rng(2);
  Conv2d<double> conv;
  conv.init(2, 3, 2, 2, 0, rng);
  auto x = random_tensor({1, 2, 6, 6}, rng);
  const auto probe = random_tensor({1, 3, 3, 3}, rng);

  auto loss_fn = [&] { return weighted_sum(conv.forward(x, nullptr), probe); };

  typename Conv2d<double>::Cache cache;
  conv.forward(x, &cache);
  Tensor<double> gx, gw(conv.w.shape);
  gw.zero();
  conv.backward(cache, probe, &gx, gw);

  CHECK(max_fd_rel_error(x, gx, loss_fn) < 1e-6);
  CHECK(max_fd_rel_error(conv.w, gw, loss_fn) < 1e-6);
}

TEST_CASE("conv3d: matches a naive spatio-temporal oracle with temporal padding") {
  Rng rng(3);
  Conv3d<double> conv;
  conv.init(2, 4, rng);
  const auto x = random_tensor({5, 2, 8, 6}, rng);
  const auto y = conv.forward(x, nullptr);
  REQUIRE(y.shape == std::vector<std::int64_t>{5, 4, 4, 6});

  for (int fo = 0; fo < 5; ++fo)
    for (int co = 0; co < 4; ++co)
      for (int oy = 0; oy < 4; ++oy)
        for (int ox = 0; ox < 6; ++ox) {
          double acc = 0.0;
          for (int kt = 0; kt < 3; ++kt) {
            const int fi = fo + kt - 1;
            if (fi < 0 || fi >= 5) continue;
            for (int ci = 0; ci < 2; ++ci)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const int iy = oy * 2 - 1 + ky;
                  const int ix = ox - 1 + kx;
                  if (iy < 0 || iy >= 8 || ix < 0 || ix >= 6) continue;
                  acc += conv.w[(kt * 4 + co) * 18 + (ci * 3 + ky) * 3 + kx] *
                         x[((fi * 2 + ci) * 8 + iy) * 6 + ix];
                }
          }
          CHECK(y[((fo * 4 + co) * 4 + oy) * 6 + ox] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv3d: backward matches finite differences") {
  Rng rng(4);
  Conv3d<double> conv;
  conv.init(2, 2, rng);
  auto x = random_tensor({3, 2, 4, 4}, rng);
  const auto probe = random_tensor({3, 2, 2, 4}, rng);

  auto loss_fn = [&] { return weighted_sum(conv.forward(x, nullptr), probe); };

  typename Conv3d<double>::Cache cache;
  conv.forward(x, &cache);
  Tensor<double> gx, gw(conv.w.shape);
  gw.zero();
  conv.backward(cache, probe, &gx, gw);

  CHECK(max_fd_rel_error(x, gx, loss_fn) < 1e-6);
  CHECK(max_fd_rel_error(conv.w, gw, loss_fn) < 1e-6);
}

TEST_CASE("batchnorm: train mode normalizes per channel over frames and space") {
  Rng rng(5);
  BatchNorm<double> bn;
  bn.init(3);
  const auto x = random_tensor({4, 3, 10}, rng, 2.5);
  typename BatchNorm<double>::Cache cache;
  const auto y = bn.forward(x, /*train=*/true, &cache);

  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int f = 0; f < 4; ++f)
      for (int s = 0; s < 10; ++s) mean += y[(f * 3 + c) * 10 + s];
    mean /= 40.0;
    for (int f = 0; f < 4; ++f)
      for (int s = 0; s < 10; ++s) {
        const double d = y[(f * 3 + c) * 10 + s] - mean;
        var += d * d;
      }
    var /= 40.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
  }
}

TEST_CASE("batchnorm: eval mode uses running statistics and fold updates them") {
  Rng rng(6);
  BatchNorm<double> bn;
  bn.init(2);
  const auto x = random_tensor({3, 2, 8}, rng, 1.5);
  typename BatchNorm<double>::Cache cache;
  bn.forward(x, true, &cache);
  bn.fold_stats(cache);
  for (int c = 0; c < 2; ++c) {
    CHECK(bn.running_mean[c] ==
          doctest::Approx(0.1 * cache.mean[static_cast<std::size_t>(c)]));
    CHECK(bn.running_var[c] ==
          doctest::Approx(0.9 + 0.1 * cache.var[static_cast<std::size_t>(c)]));
  }

  const auto y = bn.forward(x, false, nullptr);
  const double istd0 = 1.0 / std::sqrt(bn.running_var[0] + bn.eps);
  CHECK(y[0] == doctest::Approx((x[0] - bn.running_mean[0]) * istd0));
}

TEST_CASE("batchnorm: backward matches finite differences (train stats)") {
  Rng rng(7);
  BatchNorm<double> bn;
  bn.init(2);
  for (auto& v : bn.gamma.data) v = rng.normal(1.0, 0.2);
  for (auto& v : bn.beta.data) v = rng.normal(0.0, 0.2);
  auto x = random_tensor({2, 2, 6}, rng, 1.3);
  const auto probe = random_tensor({2, 2, 6}, rng);

  auto loss_fn = [&] { return weighted_sum(bn.forward(x, true, nullptr), probe); };

  typename BatchNorm<double>::Cache cache;
  bn.forward(x, true, &cache);
  Tensor<double> gx, gg(bn.gamma.shape), gb(bn.beta.shape);
  gg.zero();
  gb.zero();
  bn.backward(cache, probe, &gx, gg, gb);

  CHECK(max_fd_rel_error(x, gx, loss_fn) < 1e-5);
  CHECK(max_fd_rel_error(bn.gamma, gg, loss_fn) < 1e-6);
  CHECK(max_fd_rel_error(bn.beta, gb, loss_fn) < 1e-6);
}

TEST_CASE("adaptive pool: collapses time and averages spatial bins") {
  AdaptivePool<double> pool;
  Tensor<double> x({2, 1, 8, 8});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i % 7);
  typename AdaptivePool<double>::Cache cache;
  const auto y = pool.forward(x, &cache);
  REQUIRE(y.shape == std::vector<std::int64_t>{1, 4, 4});

  // bin (0,0) averages rows 0-1, cols 0-1 over both frames
  double expect = 0.0;
  for (int f = 0; f < 2; ++f)
    for (int yy = 0; yy < 2; ++yy)
      for (int xx = 0; xx < 2; ++xx) expect += x[(f * 8 + yy) * 8 + xx];
  CHECK(y[0] == doctest::Approx(expect / 8.0));

  Rng rng(8);
  auto x2 = random_tensor({2, 1, 8, 8}, rng);
  const auto probe = random_tensor({1, 4, 4}, rng);
  auto loss_fn = [&] { return weighted_sum(pool.forward(x2, nullptr), probe); };
  typename AdaptivePool<double>::Cache c2;
  pool.forward(x2, &c2);
  const auto gx = pool.backward(c2, probe);
  CHECK(max_fd_rel_error(x2, gx, loss_fn) < 1e-7);
}

TEST_CASE("adaptive pool: extents smaller than the output duplicate bins") {
  AdaptivePool<double> pool;
  Tensor<double> x({1, 2, 1, 2});
  x.data = {1.0, 2.0, 3.0, 4.0};
  const auto y = pool.forward(x, nullptr);
  REQUIRE(y.shape == std::vector<std::int64_t>{2, 4, 4});
  CHECK(y[0] == doctest::Approx(1.0));   // channel 0, bin (0,0) <- col 0
  CHECK(y[3] == doctest::Approx(2.0));   // channel 0, bin (0,3) <- col 1
  CHECK(y[16] == doctest::Approx(3.0));  // channel 1
}

TEST_CASE("linear + l2norm: unit output norm and FD backward") {
  Rng rng(9);
  Linear<double> fc;
  fc.init(6, 4, rng);
  auto x = random_tensor({6}, rng);
  const auto probe = random_tensor({4}, rng);

  auto loss_fn = [&] {
    return weighted_sum(l2_normalize(fc.forward(x, nullptr),
                                     static_cast<L2NormCache<double>*>(nullptr)),
                        probe);
  };

  typename Linear<double>::Cache cache;
  L2NormCache<double> ncache;
  const auto z = fc.forward(x, &cache);
  const auto y = l2_normalize(z, &ncache);

  double norm = 0.0;
  for (const double v : y.data) norm += v * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));

  const auto gz = l2_normalize_backward(ncache, probe);
  Tensor<double> gx, gw(fc.w.shape), gb(fc.b.shape);
  gw.zero();
  gb.zero();
  fc.backward(cache, gz, &gx, gw, gb);

  CHECK(max_fd_rel_error(x, gx, loss_fn) < 1e-6);
  CHECK(max_fd_rel_error(fc.w, gw, loss_fn) < 1e-6);
  CHECK(max_fd_rel_error(fc.b, gb, loss_fn) < 1e-6);
}

TEST_CASE("dropout: eval identity, train mask determinism and inverted scaling") {
  Dropout<double> drop;
  drop.p = 0.3;
  Rng rng(10);
  const auto x = random_tensor({1000}, rng, 1.0);

  CHECK(drop.forward(x, false, nullptr, nullptr).data == x.data);

  Rng r1(5), r2(5);
  const auto y1 = drop.forward(x, true, &r1, nullptr);
  const auto y2 = drop.forward(x, true, &r2, nullptr);
  CHECK(y1.data == y2.data);

  int kept = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (y1[i] != 0.0) {
      ++kept;
      CHECK(y1[i] == doctest::Approx(x[i] / 0.7));
    }
  }
  CHECK(kept > 600);
  CHECK(kept < 800);
}

TEST_CASE("half rounding: known values and idempotency") {
  CHECK(round_to_half(1.0f) == 1.0f);
  CHECK(round_to_half(0.0f) == 0.0f);
  CHECK(round_to_half(-2.5f) == -2.5f);
  CHECK(round_to_half(0.1f) == doctest::Approx(0.0999755859375).epsilon(1e-12));
  CHECK(round_to_half(100000.0f) == std::numeric_limits<float>::infinity());
  CHECK(round_to_half(1e-12f) == 0.0f);  // below half subnormal range

  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const float v = static_cast<float>(rng.normal(0.0, 10.0));
    const float once = round_to_half(v);
    CHECK(round_to_half(once) == once);
    if (v != 0.0f) CHECK(std::abs(once - v) / std::abs(v) < 1.5e-3);  // ~11 mantissa bits
  }
}
