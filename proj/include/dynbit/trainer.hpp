// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dynbit/accounting.hpp"
#include "dynbit/nn.hpp"
#include "dynbit/policy.hpp"
#include "dynbit/quant.hpp"

namespace dynbit {

/// Events worth surfacing in the run report.
struct RunCounters {
  int64_t zero_range_events = 0;  // scale floor substituted for a zero-range grid
  int64_t zero_gavg_events = 0;   // a tensor measured Gavg == 0 at a tick
};

/// One evaluation + adjustment pass over every parameter tensor:
///   1. Gavg from this batch's gradients at the tensor's current step size.
///   2. Bitwidth adjustment (at most +-1 per tensor).
///   3. Changed tensors are re-gridded at the new bitwidth over their live
///      value range; unchanged tensors are re-gridded at the same bitwidth
///      when their live range has pulled away from the grid's coverage by
///      more than 10% of its width.
///   4. One history record per tensor (post-adjustment bitwidth, measured
///      Gavg).
/// Returns the pre-adjustment stats.
std::vector<LayerStats> policy_tick(Model& model, const Gradients& grads,
                                    BitwidthHistory& history,
                                    const PolicyConfig& cfg, int64_t step,
                                    RunCounters* counters = nullptr);

struct StepOptions {
  double lr = 0.01;
  PolicyConfig policy;
  int64_t interval = 1;  // resolved tick interval, >= 1
  int activation_bits = 8;
  /// When set, the tick's parameter update is regulated by the
  /// pre-adjustment step sizes (re-gridding happens after the update).
  bool update_before_adjust = false;
};

/// Forward, backward, policy tick (when step % interval == 0), regulated
/// update of every weight and bias tensor. Returns the batch loss.
double train_step(Model& model, const Tensor& batch, std::span<const int> targets,
                  int64_t step, const StepOptions& opt, Rounding& update_rounding,
                  BitwidthHistory& history, EnergyLedger* ledger = nullptr,
                  RunCounters* counters = nullptr);

}  // namespace dynbit
