// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dynbit/nn.hpp"

namespace dynbit {

/// Energy of `macs` multiply-accumulates with k_a x k_b-bit operands, in
/// fp32-MAC equivalents: macs * (k_a * k_b) / (32 * 32). The quadratic form
/// is pinned by the 16-bit = 25% anchor.
double gemm_energy(int64_t macs, int k_a, int k_b);

/// Energy of moving `bits_moved` parameter bits, normalized so that moving
/// one full fp32 copy of a `total_params`-parameter model costs 1.0.
double movement_energy(double bits_moved, int64_t total_params);

struct MemoryReport {
  int64_t total_param_bits = 0;
  double weighted_avg_bitwidth = 0.0;  // parameter-count weighted
  double normalized_vs_fp32 = 0.0;     // weighted_avg / 32
};

/// Logical parameter-memory footprint: codes are charged at their bitwidth,
/// not their storage width.
MemoryReport param_memory(const Model& model);

/// Accumulated training costs. GEMM energy (fp32-MAC equivalents) and
/// movement energy (fp32 model-copy equivalents) are separate units and are
/// never summed. Events fold in step order with a fixed per-layer order, so
/// totals are reproducible bit-for-bit.
struct EnergyLedger {
  double gemm_units = 0.0;          // forward + backward GEMMs
  double forward_gemm_units = 0.0;  // forward GEMMs only
  double movement_units = 0.0;
  double total_gemm_macs = 0.0;  // same MACs costed at fp32 (ratio denominator)
  std::map<std::string, double> per_layer_gemm;
  std::map<std::string, double> per_layer_movement;

  void add_gemm(const std::string& layer, int64_t macs, int k_a, int k_b,
                bool forward_pass) {
    double e = gemm_energy(macs, k_a, k_b);
    gemm_units += e;
    if (forward_pass) forward_gemm_units += e;
    total_gemm_macs += static_cast<double>(macs);
    per_layer_gemm[layer] += e;
  }

  void add_movement(const std::string& layer, double bits_moved,
                    int64_t total_params) {
    double e = movement_energy(bits_moved, total_params);
    movement_units += e;
    per_layer_movement[layer] += e;
  }
};

}  // namespace dynbit
