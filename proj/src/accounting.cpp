// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/accounting.hpp"

#include <stdexcept>

namespace dynbit {

double gemm_energy(int64_t macs, int k_a, int k_b) {
  if (macs < 0) throw std::domain_error("gemm_energy: negative MAC count");
  if (k_a < kMinBitwidth || k_a > kMaxBitwidth || k_b < kMinBitwidth ||
      k_b > kMaxBitwidth) {
    throw std::domain_error("gemm_energy: bitwidth outside [2, 32]");
  }
  return static_cast<double>(macs) *
         (static_cast<double>(k_a) * static_cast<double>(k_b)) / 1024.0;
}

double movement_energy(double bits_moved, int64_t total_params) {
  if (bits_moved < 0) throw std::domain_error("movement_energy: negative bits");
  if (total_params <= 0) {
    throw std::domain_error("movement_energy: model has no parameters");
  }
  return bits_moved / (32.0 * static_cast<double>(total_params));
}

MemoryReport param_memory(const Model& model) {
  int64_t total_bits = 0;
  int64_t total_params = 0;
  for (const auto& l : model.layers) {
    if (!l.spec.has_params()) continue;
    total_bits += l.weights.numel() * l.weights.params().bitwidth;
    total_bits += l.bias.numel() * l.bias.params().bitwidth;
    total_params += l.weights.numel() + l.bias.numel();
  }
  if (total_params == 0) {
    throw std::domain_error("param_memory: model has no parameterized layers");
  }
  MemoryReport r;
  r.total_param_bits = total_bits;
  r.weighted_avg_bitwidth =
      static_cast<double>(total_bits) / static_cast<double>(total_params);
  r.normalized_vs_fp32 = r.weighted_avg_bitwidth / 32.0;
  return r;
}

}  // namespace dynbit
