#include <doctest.h>

#include <cmath>
#include <random>

#include "dynbit/quant.hpp"

using namespace dynbit;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

Tensor random_tensor(std::mt19937_64& rng, int64_t n, double lo, double hi) {
  Tensor t({n});
  for (int64_t i = 0; i < n; ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

}  // namespace

TEST_CASE("compute_params: scale equals (max-min)/(2^k-1)") {
  Tensor t({3}, {-1.0, 0.25, 1.0});
  QuantParams p = compute_params(t, 8);
  CHECK(p.scale == 2.0 / 255.0);
  CHECK(p.scale == doctest::Approx(0.0078431).epsilon(1e-4));
  CHECK_FALSE(p.degenerate_range);

  QuantParams p16 = compute_params(t, 16);
  CHECK(p16.scale == 2.0 / 65535.0);
}

TEST_CASE("compute_params: zero range substitutes the scale floor") {
  Tensor t({4}, {0.5, 0.5, 0.5, 0.5});
  QuantParams p = compute_params(t, 8);
  CHECK(p.scale == kScaleFloor);
  CHECK(p.degenerate_range);
  // The grid still hits 0.5 exactly.
  Rounding nearest = Rounding::nearest();
  QuantizedTensor qt = quantize(t, p, nearest);
  Tensor back = dequantize(qt);
  for (int64_t i = 0; i < back.numel(); ++i) CHECK(back[i] == 0.5);
}

TEST_CASE("compute_params: identity grid on [0,15] at k=4") {
  Tensor t({16});
  for (int64_t i = 0; i < 16; ++i) t[i] = static_cast<double>(i);
  QuantParams p = compute_params(t, 4);
  CHECK(p.scale == 1.0);
  Rounding nearest = Rounding::nearest();
  QuantizedTensor qt = quantize(t, p, nearest);
  for (int64_t i = 0; i < 16; ++i) {
    CHECK(qt.codes()[static_cast<size_t>(i)] == static_cast<uint32_t>(i));
  }
  Tensor back = dequantize(qt);
  for (int64_t i = 0; i < 16; ++i) CHECK(back[i] == static_cast<double>(i));
}

TEST_CASE("compute_params: error paths") {
  Tensor nan({2}, {0.0, std::nan("")});
  CHECK_THROWS_AS(compute_params(nan, 8), std::invalid_argument);
  Tensor ok({2}, {0.0, 1.0});
  CHECK_THROWS_AS(compute_params(ok, 1), std::domain_error);
  CHECK_THROWS_AS(compute_params(ok, 33), std::domain_error);
  CHECK_THROWS_AS(compute_params(Tensor({0}), 8), std::invalid_argument);
}

TEST_CASE("quantize: exact grid point and saturation") {
  QuantParams p{0.1, 128, 8, false};
  Rounding nearest = Rounding::nearest();

  Tensor v({1}, {0.2});
  CHECK(quantize(v, p, nearest).codes()[0] == 130);

  Tensor big({1}, {1e9});
  CHECK(quantize(big, p, nearest).codes()[0] == 255);
  Tensor small({1}, {-1e9});
  CHECK(quantize(small, p, nearest).codes()[0] == 0);

  Tensor bad({1}, {std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(quantize(bad, p, nearest), std::invalid_argument);
}

TEST_CASE("quantize: stochastic rounding splits a midpoint 50/50") {
  // v/S = 0.5 exactly; Monte-Carlo mean of dequantized values vs 0.05.
  constexpr int64_t kDraws = 100000;
  QuantParams p{0.1, 0, 8, false};
  Tensor v = Tensor::full({kDraws}, 0.05);
  Rounding sr = Rounding::stochastic(20260810);
  QuantizedTensor qt = quantize(v, p, sr);
  int64_t ones = 0;
  for (uint32_t c : qt.codes()) {
    CHECK(c <= 1);
    ones += c;
  }
  Tensor back = dequantize(qt);
  double mean = 0.0;
  for (int64_t i = 0; i < back.numel(); ++i) mean += back[i];
  mean /= static_cast<double>(kDraws);
  double se = 0.1 * 0.5 / std::sqrt(static_cast<double>(kDraws));
  CHECK(std::abs(mean - 0.05) < 3.0 * se);
  // both outcomes actually occur
  CHECK(ones > kDraws / 4);
  CHECK(ones < 3 * kDraws / 4);
}

TEST_CASE("dequantize: affine evaluation and zero point") {
  QuantParams p{0.1, 128, 8, false};
  QuantizedTensor qt({2}, {130, 128}, p);
  Tensor r = dequantize(qt);
  CHECK(r[0] == 0.2);
  CHECK(r[1] == 0.0);
}

TEST_CASE("dequantize/quantize: grid fixed point") {
  std::mt19937_64 rng(7);
  Rounding nearest = Rounding::nearest();
  for (int k : {2, 5, 8, 16, 32}) {
    Tensor t = random_tensor(rng, 257, -3.0, 5.0);
    QuantParams p = compute_params(t, k);
    QuantizedTensor qt = quantize(t, p, nearest);
    QuantizedTensor again = quantize(dequantize(qt), p, nearest);
    for (size_t i = 0; i < qt.codes().size(); ++i) {
      REQUIRE(qt.codes()[i] == again.codes()[i]);
    }
  }
}

TEST_CASE("epsilon: equals scale and shrinks with one more bit") {
  Tensor t({2}, {-1.0, 1.0});
  Rounding nearest = Rounding::nearest();
  for (int k = 2; k < 32; ++k) {
    QuantParams p = compute_params(t, k);
    QuantizedTensor qt = quantize(t, p, nearest);
    CHECK(epsilon(qt) == p.scale);
    QuantParams p1 = compute_params(t, k + 1);
    double levels_k = std::ldexp(1.0, k) - 1.0;
    double levels_k1 = std::ldexp(1.0, k + 1) - 1.0;
    CHECK(p1.scale < p.scale);  // strictly decreasing in k
    CHECK(p1.scale / p.scale == doctest::Approx(levels_k / levels_k1).epsilon(1e-12));
  }
  QuantParams p8 = compute_params(t, 8);
  QuantParams p16 = compute_params(t, 16);
  CHECK(p8.scale == 2.0 / 255.0);
  CHECK(p16.scale == 2.0 / 65535.0);
}

TEST_CASE("requantize: same bitwidth is the identity under Nearest") {
  std::mt19937_64 rng(11);
  Rounding nearest = Rounding::nearest();
  for (int k : {2, 3, 8, 16, 32}) {
    Tensor t = random_tensor(rng, 101, -0.7, 1.3);
    QuantizedTensor qt = quantize(t, compute_params(t, k), nearest);
    QuantizedTensor rq = requantize(qt, k, nearest);
    CHECK(rq.params().bitwidth == k);
    for (size_t i = 0; i < qt.codes().size(); ++i) {
      REQUIRE(qt.codes()[i] == rq.codes()[i]);
    }
  }
}

TEST_CASE("requantize: k 2->8 over [0,3] keeps every value exactly") {
  // Brute force over all four 2-bit codes. The old grid points {0,1,2,3}
  // land on new codes {0,85,170,255} since 85 * (3/255) = 1.
  QuantParams p2{1.0, 0, 2, false};
  QuantizedTensor qt({4}, {0, 1, 2, 3}, p2);
  Rounding nearest = Rounding::nearest();
  QuantizedTensor rq = requantize(qt, 8, nearest);
  const uint32_t expected[4] = {0, 85, 170, 255};
  Tensor old_vals = dequantize(qt);
  Tensor new_vals = dequantize(rq);
  for (int i = 0; i < 4; ++i) {
    CHECK(rq.codes()[static_cast<size_t>(i)] == expected[i]);
    CHECK(new_vals[i] == doctest::Approx(old_vals[i]).epsilon(1e-12));
  }
}

TEST_CASE("requantize: drift bounded by max(old step, new step)") {
  std::mt19937_64 rng(13);
  Rounding nearest = Rounding::nearest();
  for (int trial = 0; trial < 50; ++trial) {
    int k_old = 2 + static_cast<int>(rng() % 14);
    int k_new = 2 + static_cast<int>(rng() % 14);
    Tensor t = random_tensor(rng, 64, -2.0, 2.0);
    QuantizedTensor qt = quantize(t, compute_params(t, k_old), nearest);
    QuantizedTensor rq = requantize(qt, k_new, nearest);
    double bound = std::max(qt.params().scale, rq.params().scale) * (1.0 + 1e-9);
    Tensor a = dequantize(qt), b = dequantize(rq);
    for (int64_t i = 0; i < a.numel(); ++i) {
      REQUIRE(std::abs(a[i] - b[i]) <= bound);
    }
  }
}

TEST_CASE("apply_update: sub-step floor updates underflow to nothing") {
  QuantParams p{0.1, 0, 8, false};
  QuantizedTensor qt({3}, {10, 20, 30}, p);
  Tensor g = Tensor::full({3}, 0.5 * p.scale);  // lr*g = eps/2
  Rounding fl = Rounding::floor();
  QuantizedTensor out = apply_update(qt, g, 1.0, fl);
  for (size_t i = 0; i < 3; ++i) CHECK(out.codes()[i] == qt.codes()[i]);
}

TEST_CASE("apply_update: exact multiples step in every mode") {
  QuantParams p{0.25, 0, 8, false};
  Tensor g = Tensor::full({3}, 2.0 * p.scale);
  for (auto mode : {Rounding::nearest(), Rounding::floor(), Rounding::stochastic(1)}) {
    QuantizedTensor qt({3}, {10, 20, 30}, p);
    Rounding m = mode;
    QuantizedTensor out = apply_update(qt, g, 1.0, m);
    CHECK(out.codes()[0] == 8);
    CHECK(out.codes()[1] == 18);
    CHECK(out.codes()[2] == 28);
    // params untouched by the update
    CHECK(out.params().scale == p.scale);
    CHECK(out.params().zero_point == p.zero_point);
  }
}

TEST_CASE("apply_update: stochastic half-step moves half the codes") {
  constexpr int64_t kDraws = 100000;
  QuantParams p{0.1, 0, 8, false};
  QuantizedTensor qt({kDraws}, std::vector<uint32_t>(kDraws, 100), p);
  Tensor g = Tensor::full({kDraws}, 0.5 * p.scale);
  Rounding sr = Rounding::stochastic(99);
  QuantizedTensor out = apply_update(qt, g, 1.0, sr);
  double mean_change = 0.0;
  for (uint32_t c : out.codes()) {
    mean_change += static_cast<double>(c) - 100.0;
  }
  mean_change /= static_cast<double>(kDraws);
  double se = 0.5 / std::sqrt(static_cast<double>(kDraws));
  CHECK(std::abs(mean_change - (-0.5)) < 3.0 * se);
}

TEST_CASE("apply_update: error paths, saturation, null update") {
  QuantParams p{0.1, 0, 4, false};
  QuantizedTensor qt({2}, {0, 15}, p);
  Rounding nearest = Rounding::nearest();
  CHECK_THROWS_AS(apply_update(qt, Tensor({3}), 0.1, nearest), std::domain_error);
  CHECK_THROWS_AS(apply_update(qt, Tensor({2}), -1.0, nearest), std::domain_error);
  Tensor bad({2}, {std::nan(""), 0.0});
  CHECK_THROWS_AS(apply_update(qt, bad, 1.0, nearest), std::invalid_argument);
  // Huge positive gradient drives codes to 0; huge negative to max.
  Tensor g({2}, {1e18, -1e18});
  QuantizedTensor out = apply_update(qt, g, 1.0, nearest);
  CHECK(out.codes()[0] == 0);
  CHECK(out.codes()[1] == 15);
  // lr = 0 is the null update
  QuantizedTensor same = apply_update(qt, g, 0.0, nearest);
  CHECK(same.codes()[0] == qt.codes()[0]);
  CHECK(same.codes()[1] == qt.codes()[1]);
}

TEST_CASE("invariant: nearest roundtrip within scale/2, stochastic within scale") {
  std::mt19937_64 rng(17);
  for (int k : {2, 4, 8, 16, 32}) {
    for (int trial = 0; trial < 20; ++trial) {
      double lo = uniform(rng, -10.0, 9.0);
      double hi = lo + uniform(rng, 1e-6, 10.0);
      Tensor t = random_tensor(rng, 100, lo, hi);
      QuantParams p = compute_params(t, k);
      Rounding nearest = Rounding::nearest();
      Tensor rn = dequantize(quantize(t, p, nearest));
      Rounding sr = Rounding::stochastic(rng());
      Tensor rs = dequantize(quantize(t, p, sr));
      double slop = 1e-12 * std::max(std::abs(lo), std::abs(hi));
      for (int64_t i = 0; i < t.numel(); ++i) {
        REQUIRE(std::abs(rn[i] - t[i]) <= 0.5 * p.scale + slop);
        REQUIRE(std::abs(rs[i] - t[i]) <= p.scale + slop);
      }
    }
  }
}

TEST_CASE("invariant: all-positive ranges still roundtrip within scale/2") {
  // min > 0 pushes the zero point outside the code range.
  std::mt19937_64 rng(19);
  Tensor t = random_tensor(rng, 200, 1000.0, 1001.0);
  QuantParams p = compute_params(t, 8);
  Rounding nearest = Rounding::nearest();
  Tensor r = dequantize(quantize(t, p, nearest));
  for (int64_t i = 0; i < t.numel(); ++i) {
    REQUIRE(std::abs(r[i] - t[i]) <= 0.5 * p.scale + 1e-9);
  }
}

TEST_CASE("invariant: stochastic rounding is unbiased (4 SE at N=1e5)") {
  constexpr int64_t kDraws = 100000;
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    double target = uniform(rng, 0.02, 0.98);
    Rounding sr = Rounding::stochastic(rng());
    double sum = 0.0;
    for (int64_t i = 0; i < kDraws; ++i) {
      sum += static_cast<double>(sr.round(target));
    }
    double mean = sum / static_cast<double>(kDraws);
    double se = std::sqrt(target * (1.0 - target) / static_cast<double>(kDraws));
    CHECK(std::abs(mean - target) < 4.0 * se);
  }
}

TEST_CASE("invariant: floor-mode update equals the brute-force integer oracle") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    int k = 2 + static_cast<int>(rng() % 31);
    int64_t n = 1 + static_cast<int64_t>(rng() % 64);
    Tensor vals = random_tensor(rng, n, -1.0, 1.0);
    QuantParams p = compute_params(vals, k);
    Rounding nearest = Rounding::nearest();
    QuantizedTensor qt = quantize(vals, p, nearest);
    Tensor g = random_tensor(rng, n, -0.3, 0.3);
    double lr = uniform(rng, 0.0, 2.0);

    Rounding fl = Rounding::floor();
    QuantizedTensor out = apply_update(qt, g, lr, fl);

    // Element-wise transcription of the regulated update: the floored step
    // count in units of the resolution, then the saturating code move.
    for (int64_t i = 0; i < n; ++i) {
      double eps = p.scale;
      int64_t steps = static_cast<int64_t>(std::floor(lr * g[i] / eps));
      int64_t expected = static_cast<int64_t>(qt.codes()[static_cast<size_t>(i)]) - steps;
      int64_t mc = static_cast<int64_t>(p.max_code());
      expected = std::max<int64_t>(0, std::min(expected, mc));
      REQUIRE(static_cast<int64_t>(out.codes()[static_cast<size_t>(i)]) == expected);
    }
  }
}

TEST_CASE("invariant: stochastic streams are reproducible and caller-owned") {
  Rounding a = Rounding::stochastic(42);
  Rounding b = Rounding::stochastic(42);
  for (int i = 0; i < 1000; ++i) {
    double x = 0.25 + 0.5 * (i % 3);
    REQUIRE(a.round(x) == b.round(x));
  }
}

TEST_CASE("invariant: codes never leave [0, 2^k - 1]") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    int k = 2 + static_cast<int>(rng() % 31);
    Tensor vals = random_tensor(rng, 32, -5.0, 5.0);
    QuantParams p = compute_params(vals, k);
    Rounding sr = Rounding::stochastic(rng());
    QuantizedTensor qt = quantize(vals, p, sr);
    Tensor g = random_tensor(rng, 32, -100.0, 100.0);
    QuantizedTensor out = apply_update(qt, g, 10.0, sr);
    QuantizedTensor rq = requantize(out, 2 + static_cast<int>(rng() % 31), sr);
    for (uint32_t c : qt.codes()) REQUIRE(c <= p.max_code());
    for (uint32_t c : out.codes()) REQUIRE(c <= p.max_code());
    for (uint32_t c : rq.codes()) REQUIRE(c <= rq.params().max_code());
  }
}
