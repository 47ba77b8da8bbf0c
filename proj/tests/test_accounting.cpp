#include <doctest.h>

#include <cmath>

#include "dynbit/accounting.hpp"

using namespace dynbit;

namespace {

Model model_with_two_tensors(int64_t in_a, int64_t out_a, int k_a, int64_t in_b,
                             int64_t out_b, int k_b) {
  Model m;
  Rounding nearest = Rounding::nearest();
  int idx = 0;
  for (auto [in, out, k] : {std::tuple{in_a, out_a, k_a}, std::tuple{in_b, out_b, k_b}}) {
    LayerSpec spec{LayerKind::Dense, "dense" + std::to_string(idx++)};
    spec.in = static_cast<int>(in);
    spec.out = static_cast<int>(out);
    Layer l;
    l.spec = spec;
    Tensor w(spec.weight_shape());
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<double>(i % 17) - 8.0;
    Tensor b(spec.bias_shape());
    for (int64_t i = 0; i < b.numel(); ++i) b[i] = static_cast<double>(i % 5) - 2.0;
    l.weights = quantize(w, compute_params(w, k), nearest);
    l.bias = quantize(b, compute_params(b, k), nearest);
    m.layers.push_back(std::move(l));
  }
  return m;
}

}  // namespace

TEST_CASE("gemm_energy: quadratic anchors") {
  CHECK(gemm_energy(1000, 16, 16) == 250.0);
  CHECK(gemm_energy(1000, 32, 32) == 1000.0);
  CHECK(gemm_energy(1000, 8, 8) == 62.5);  // 1/16 of fp32
  for (int64_t m : {1LL, 7LL, 123456LL}) {
    REQUIRE(gemm_energy(m, 16, 16) / gemm_energy(m, 32, 32) == 0.25);
  }
  CHECK(gemm_energy(0, 8, 8) == 0.0);
  CHECK_THROWS_AS(gemm_energy(-1, 8, 8), std::domain_error);
  CHECK_THROWS_AS(gemm_energy(10, 1, 8), std::domain_error);
  CHECK_THROWS_AS(gemm_energy(10, 8, 33), std::domain_error);
}

TEST_CASE("movement_energy: fp32 copy is the unit") {
  const int64_t params = 1234;
  CHECK(movement_energy(32.0 * params, params) == 1.0);
  CHECK(movement_energy(8.0 * params, params) == 0.25);
  CHECK(movement_energy(0.0, params) == 0.0);
  CHECK_THROWS_AS(movement_energy(-1.0, params), std::domain_error);
  CHECK_THROWS_AS(movement_energy(10.0, 0), std::domain_error);
}

TEST_CASE("movement_energy: QAT vs single-copy ratios") {
  const int64_t params = 100000;
  // Table-style footprint ratio: (32+8)-bit two-copy scheme over a
  // 12.8-bit single copy.
  double qat = movement_energy((32.0 + 8.0) * params, params);
  double single_copy = movement_energy(12.8 * params, params);
  CHECK(std::abs(qat / single_copy - 3.125) <= 1e-9);

  // Step-trace comparison: per step the two-copy scheme reads the fp32
  // model, writes the quantized copy, and writes back fp32; the single-copy
  // scheme reads and writes its quantized codes only.
  double avg_k = 8.0;
  double qat_step = movement_energy(32.0 * params, params) +
                    movement_energy(8.0 * params, params) +
                    movement_energy(32.0 * params, params);
  double single_copy_step = movement_energy(avg_k * params, params) +
                    movement_energy(avg_k * params, params);
  CHECK(qat_step / single_copy_step == doctest::Approx((32.0 + 8.0 + 32.0) / (2.0 * avg_k))
                                   .epsilon(1e-12));
}

TEST_CASE("param_memory: weighted average bitwidth") {
  SUBCASE("uniform 8-bit") {
    Model m = model_with_two_tensors(9, 10, 8, 29, 10, 8);
    MemoryReport r = param_memory(m);
    CHECK(r.weighted_avg_bitwidth == 8.0);
    CHECK(r.normalized_vs_fp32 == 0.25);
    CHECK(r.total_param_bits == (100 + 300) * 8);
  }
  SUBCASE("100 params at k=10 and 300 at k=14") {
    Model m = model_with_two_tensors(9, 10, 10, 29, 10, 14);
    MemoryReport r = param_memory(m);
    CHECK(r.total_param_bits == 100 * 10 + 300 * 14);
    CHECK(r.weighted_avg_bitwidth == 13.0);
    CHECK(r.normalized_vs_fp32 == 13.0 / 32.0);
  }
}

TEST_CASE("param_memory: doubling parameter count keeps the average") {
  Model a = model_with_two_tensors(9, 10, 10, 29, 10, 14);
  Model b = model_with_two_tensors(9, 20, 10, 29, 20, 14);  // twice the params
  MemoryReport ra = param_memory(a);
  MemoryReport rb = param_memory(b);
  CHECK(rb.total_param_bits == 2 * ra.total_param_bits);
  CHECK(rb.weighted_avg_bitwidth == ra.weighted_avg_bitwidth);
}

TEST_CASE("EnergyLedger: breakdown sums to totals") {
  EnergyLedger ledger;
  for (int step = 0; step < 100; ++step) {
    ledger.add_gemm("dense0", 1000 + step, 8, 7 + step % 5, true);
    ledger.add_gemm("dense1", 2000 + step, 8, 9, true);
    ledger.add_gemm("dense0", 1000 + step, 8, 32, false);
    ledger.add_movement("dense0.weight", 800.0 + step, 500);
    ledger.add_movement("dense1.bias", 60.0, 500);
  }
  double gemm_sum = 0.0;
  for (const auto& [name, units] : ledger.per_layer_gemm) gemm_sum += units;
  CHECK(std::abs(gemm_sum - ledger.gemm_units) <= 1e-9 * ledger.gemm_units);
  double move_sum = 0.0;
  for (const auto& [name, units] : ledger.per_layer_movement) move_sum += units;
  CHECK(std::abs(move_sum - ledger.movement_units) <= 1e-9 * ledger.movement_units);
  CHECK(ledger.forward_gemm_units < ledger.gemm_units);
}
