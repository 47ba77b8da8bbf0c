// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynbit/tensor.hpp"

namespace dynbit {

struct PolicyConfig {
  double t_min = 1.0;
  double t_max = 100.0;
  int k_min = 2;
  int k_max = 32;
  /// Steps between evaluation ticks; 0 selects ceil(steps_per_epoch / 10).
  int64_t interval = 0;

  bool valid() const {
    return t_min >= 0.0 && t_min < t_max && k_min >= 2 && k_min <= k_max &&
           k_max <= 32 && interval >= 0;
  }
};

/// One parameter tensor's view at a tick. Drives the adjustment policy.
struct LayerStats {
  std::string layer_name;
  double gavg = 0.0;
  int bitwidth = 8;
  int64_t n_params = 0;
  double epsilon = 0.0;
};

struct BitwidthRecord {
  int64_t step = 0;
  std::string layer;
  int bitwidth = 0;
  double gavg = 0.0;
};

/// Tick-by-tick bitwidth/Gavg log; one record per (tick, tensor).
struct BitwidthHistory {
  std::vector<BitwidthRecord> records;

  void append(int64_t step, std::string layer, int bitwidth, double gavg) {
    records.push_back({step, std::move(layer), bitwidth, gavg});
  }
};

/// Mean of |g / eps| over the tensor: how many grid steps the average
/// gradient is worth. Values near zero mean updates mostly underflow.
double compute_gavg(const Tensor& grads, double eps);

/// One policy pass: per tensor, +1 bit when gavg < t_min (below k_max),
/// -1 bit when gavg > t_max (above k_min), at most one step per tick.
std::vector<int> adjust_bitwidth(const std::vector<LayerStats>& stats,
                                 const PolicyConfig& cfg);

}  // namespace dynbit
