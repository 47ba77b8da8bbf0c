#include <doctest.h>

// Multi-seed trend behavior of the training loop: these are statistical
// assertions over medians and rank correlations, kept at desk scale.

#include <map>
#include <vector>

#include "dynbit/harness.hpp"
#include "support/float_trainer.hpp"
#include "support/stats.hpp"

using namespace dynbit;
using namespace dynbit::testsupport;

namespace {

TrainConfig toy_config(int64_t epochs) {
  TrainConfig cfg;
  cfg.blobs = {4, 2, 2000, 1.0, 7};
  LayerSpec d0{LayerKind::Dense, "dense0"};
  d0.in = 2;
  d0.out = 16;
  LayerSpec r1{LayerKind::ReLU, "relu1"};
  LayerSpec d2{LayerKind::Dense, "dense2"};
  d2.in = 16;
  d2.out = 4;
  cfg.model = {d0, r1, d2};
  cfg.lr = 0.002;
  cfg.batch_size = 32;
  cfg.epochs = epochs;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("float SGD: loss decreases on a separable task within 100 steps") {
  TrainConfig cfg;
  cfg.blobs = {4, 3, 250, 0.0, 5};
  LayerSpec d{LayerKind::Dense, "dense0"};
  d.in = 3;
  d.out = 4;
  cfg.model = {d};
  cfg.seed = 2;

  Dataset ds = make_dataset(cfg);
  FloatParams params = initial_float_params(cfg.model, cfg.seed);
  std::vector<LayerSpec> specs = cfg.model;
  Tensor batch = ds.train_x;
  std::vector<int> targets = ds.train_y;

  auto loss_now = [&] {
    auto [logits, cache] = forward_eval(specs, params, batch, 0);
    return cross_entropy(logits, targets);
  };
  double initial = loss_now();
  for (int step = 0; step < 100; ++step) {
    auto [logits, cache] = forward_eval(specs, params, batch, 0);
    Gradients g = backward_eval(specs, params, cache, targets);
    for (int64_t j = 0; j < params.layers[0].weights.numel(); ++j) {
      params.layers[0].weights[j] -= 0.001 * g.layers[0].weights[j];
    }
    for (int64_t j = 0; j < params.layers[0].bias.numel(); ++j) {
      params.layers[0].bias[j] -= 0.001 * g.layers[0].bias[j];
    }
  }
  CHECK(loss_now() < 0.5 * initial);
}

TEST_CASE("quantized training: 200 steps on a 2-class blob task clears 90%") {
  // Learnability gate: the float oracle must master the task first, then the
  // quantized run is held near it.
  TrainConfig cfg;
  cfg.blobs = {2, 2, 500, 0.8, 3};
  LayerSpec d0{LayerKind::Dense, "dense0"};
  d0.in = 2;
  d0.out = 8;
  LayerSpec r1{LayerKind::ReLU, "relu1"};
  LayerSpec d2{LayerKind::Dense, "dense2"};
  d2.in = 8;
  d2.out = 2;
  cfg.model = {d0, r1, d2};
  cfg.lr = 0.002;
  cfg.batch_size = 20;   // 400 train samples -> 20 steps/epoch
  cfg.epochs = 10;       // 200 steps total
  cfg.initial_bitwidth = 8;
  cfg.rounding = RoundingKind::Stochastic;
  cfg.seed = 4;

  auto oracle = train_float_baseline(cfg);
  REQUIRE(oracle.train_accuracy > 90.0);
  RunReport r = run(cfg);
  CHECK(r.train_accuracy > 90.0);
  CHECK(r.train_accuracy >= oracle.train_accuracy - 5.0);
}

TEST_CASE("fixed low precision: Gavg trends downward over ticks" *
          doctest::timeout(300)) {
  // Policy disabled at a fixed 4-bit width: as the loss falls, gradients
  // shrink while the step size stays coarse, so Gavg should decline for at
  // least 80% of the (tensor, seed) pairs.
  int negative = 0, total = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig cfg = toy_config(3);
    cfg.lr = 0.001;
    cfg.seed = seed;
    cfg.initial_bitwidth = 4;
    cfg.policy.t_min = 0.0;
    cfg.policy.t_max = 1e308;
    RunReport r = run(cfg);
    std::map<std::string, std::vector<double>> gavg_series, step_series;
    for (const auto& rec : r.history.records) {
      gavg_series[rec.layer].push_back(rec.gavg);
      step_series[rec.layer].push_back(static_cast<double>(rec.step));
    }
    for (const auto& [name, series] : gavg_series) {
      ++total;
      if (spearman(step_series[name], series) < 0.0) ++negative;
    }
  }
  CHECK(total == 20);
  CHECK(negative >= (total * 8) / 10);
}

TEST_CASE("policy on: Gavg rarely falls below half the lower threshold" *
          doctest::timeout(300)) {
  // After the first epoch, the adjustment policy should hold every tensor
  // above the underflow cliff on > 90% of ticks.
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig cfg = toy_config(15);
    cfg.seed = seed;
    RunReport r = run(cfg);
    int64_t steps_per_epoch = (1600 + cfg.batch_size - 1) / cfg.batch_size;
    std::map<int64_t, bool> tick_has_underflow;
    for (const auto& rec : r.history.records) {
      if (rec.step < steps_per_epoch) continue;
      auto [it, inserted] = tick_has_underflow.emplace(rec.step, false);
      if (rec.gavg < cfg.policy.t_min / 2.0) it->second = true;
    }
    REQUIRE(!tick_has_underflow.empty());
    int bad = 0;
    for (const auto& [step, has] : tick_has_underflow) bad += has ? 1 : 0;
    double fraction =
        static_cast<double>(bad) / static_cast<double>(tick_has_underflow.size());
    CHECK(fraction < 0.10);
  }
}

TEST_CASE("paired runs: t_min raises both accuracy and memory" *
          doctest::timeout(600)) {
  TrainConfig cfg = toy_config(15);
  std::vector<double> values = {0.1, 1.0, 10.0};
  auto rows = sweep_tmin(cfg, values, 3, 2);
  std::vector<double> t, acc, mem;
  for (const auto& row : rows) {
    t.push_back(row.t_min);
    acc.push_back(row.accuracy);
    mem.push_back(row.memory);
  }
  CHECK(spearman(t, acc) >= 0.0);
  CHECK(spearman(t, mem) >= 0.0);
  // stricter t_min never lowers the final memory footprint
  CHECK(rows.front().memory <= rows.back().memory);
}

TEST_CASE("paired runs: k_init = 32 behaves as near-float" * doctest::timeout(600)) {
  TrainConfig cfg = toy_config(15);
  std::vector<int> values = {8, 32};
  auto sweep = sweep_init_bitwidth(cfg, values, 3, 2);
  double acc8 = sweep.rows[0].second;
  double acc32 = sweep.rows[1].second;
  CHECK(acc32 >= acc8 - 1.0);
}

TEST_CASE("paired runs: full-batch training ends at the lowest bitwidth" *
          doctest::timeout(600)) {
  TrainConfig cfg = toy_config(8);
  // batch == training-set size gives full-batch gradients
  std::vector<int64_t> values = {16, 1600};
  auto rows = sweep_batch_size(cfg, values, 3, 2);
  CHECK(rows[1].final_avg_bitwidth <= rows[0].final_avg_bitwidth);
}
