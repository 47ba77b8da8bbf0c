// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace dynbit {

namespace {

constexpr double kDriftRefreshThreshold = 0.1;

// Re-grid a tensor from its live values. Nearest keeps the representation
// change free of extra noise; stochastic rounding stays an update-time tool.
void refit_tensor(QuantizedTensor& qt, int bitwidth, RunCounters* counters) {
  Tensor live = dequantize(qt);
  QuantParams p = compute_params(live, bitwidth);
  if (p.degenerate_range && counters) counters->zero_range_events += 1;
  Rounding nearest = Rounding::nearest();
  qt = quantize(live, p, nearest);
}

bool live_range_drifted(const QuantizedTensor& qt) {
  const QuantParams& p = qt.params();
  double width = p.range_max() - p.range_min();
  if (!(width > 0.0)) return false;
  Tensor live = dequantize(qt);
  double lo = live.min(), hi = live.max();
  return std::abs(lo - p.range_min()) > kDriftRefreshThreshold * width ||
         std::abs(hi - p.range_max()) > kDriftRefreshThreshold * width;
}

struct TensorRef {
  QuantizedTensor* tensor;
  const Tensor* grad;
  std::string name;
};

std::vector<TensorRef> param_tensors(Model& model, const Gradients& grads) {
  if (grads.layers.size() != model.layers.size()) {
    throw std::domain_error("policy_tick: gradients do not match model");
  }
  std::vector<TensorRef> refs;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    Layer& l = model.layers[i];
    if (!l.spec.has_params()) continue;
    if (!grads.layers[i].present) {
      throw std::domain_error("policy_tick: missing gradient for layer " + l.spec.name);
    }
    refs.push_back({&l.weights, &grads.layers[i].weights, l.spec.name + ".weight"});
    refs.push_back({&l.bias, &grads.layers[i].bias, l.spec.name + ".bias"});
  }
  return refs;
}

}  // namespace

std::vector<LayerStats> policy_tick(Model& model, const Gradients& grads,
                                    BitwidthHistory& history,
                                    const PolicyConfig& cfg, int64_t step,
                                    RunCounters* counters) {
  if (!cfg.valid()) throw std::domain_error("policy_tick: invalid policy config");
  auto refs = param_tensors(model, grads);

  std::vector<LayerStats> stats;
  stats.reserve(refs.size());
  for (const auto& r : refs) {
    LayerStats s;
    s.layer_name = r.name;
    s.epsilon = epsilon(*r.tensor);
    s.gavg = compute_gavg(*r.grad, s.epsilon);
    s.bitwidth = r.tensor->params().bitwidth;
    s.n_params = r.tensor->numel();
    if (s.gavg == 0.0 && counters) counters->zero_gavg_events += 1;
    stats.push_back(std::move(s));
  }

  std::vector<int> new_ks = adjust_bitwidth(stats, cfg);
  for (size_t i = 0; i < refs.size(); ++i) {
    if (new_ks[i] != stats[i].bitwidth) {
      refit_tensor(*refs[i].tensor, new_ks[i], counters);
    } else if (live_range_drifted(*refs[i].tensor)) {
      refit_tensor(*refs[i].tensor, new_ks[i], counters);
    }
    history.append(step, refs[i].name, new_ks[i], stats[i].gavg);
  }
  model.revision += 1;
  return stats;
}

double train_step(Model& model, const Tensor& batch, std::span<const int> targets,
                  int64_t step, const StepOptions& opt, Rounding& update_rounding,
                  BitwidthHistory& history, EnergyLedger* ledger,
                  RunCounters* counters) {
  if (opt.interval < 1) throw std::domain_error("train_step: interval must be >= 1");
  int act_k = opt.activation_bits > 0 ? opt.activation_bits : 32;
  int64_t n = batch.dim(0);

  std::vector<LayerSpec> specs;
  specs.reserve(model.layers.size());
  for (const auto& l : model.layers) specs.push_back(l.spec);
  std::vector<int64_t> sample_shape(batch.shape().begin() + 1, batch.shape().end());

  auto [logits, cache] = forward(model, batch, opt.activation_bits);
  if (ledger) {
    auto macs = per_sample_macs(specs, sample_shape);
    for (size_t i = 0; i < specs.size(); ++i) {
      if (!specs[i].has_params()) continue;
      ledger->add_gemm(specs[i].name, macs[i] * n, act_k,
                       model.layers[i].weights.params().bitwidth, true);
    }
  }

  double loss = cross_entropy(logits, targets);
  Gradients grads = backward(model, cache, targets);
  if (ledger) {
    // Backward GEMMs: dX at activation x weight bitwidth, dW at activation x
    // working precision. The first layer computes no dX.
    auto macs = per_sample_macs(specs, sample_shape);
    for (size_t i = 0; i < specs.size(); ++i) {
      if (!specs[i].has_params()) continue;
      if (i > 0) {
        ledger->add_gemm(specs[i].name, macs[i] * n, act_k,
                         model.layers[i].weights.params().bitwidth, false);
      }
      ledger->add_gemm(specs[i].name, macs[i] * n, act_k, 32, false);
    }
  }

  bool tick = (step % opt.interval) == 0;
  auto apply_all_updates = [&] {
    for (size_t i = 0; i < model.layers.size(); ++i) {
      Layer& l = model.layers[i];
      if (!l.spec.has_params()) continue;
      l.weights = apply_update(l.weights, grads.layers[i].weights, opt.lr,
                               update_rounding);
      l.bias = apply_update(l.bias, grads.layers[i].bias, opt.lr, update_rounding);
    }
    model.revision += 1;
  };

  if (tick && !opt.update_before_adjust) {
    policy_tick(model, grads, history, opt.policy, step, counters);
    apply_all_updates();
  } else if (tick) {
    apply_all_updates();
    policy_tick(model, grads, history, opt.policy, step, counters);
  } else {
    apply_all_updates();
  }

  if (ledger) {
    int64_t total_params = model.param_count();
    for (const auto& l : model.layers) {
      if (!l.spec.has_params()) continue;
      ledger->add_movement(
          l.spec.name + ".weight",
          static_cast<double>(l.weights.numel() * l.weights.params().bitwidth),
          total_params);
      ledger->add_movement(
          l.spec.name + ".bias",
          static_cast<double>(l.bias.numel() * l.bias.params().bitwidth),
          total_params);
    }
  }
  return loss;
}

}  // namespace dynbit
