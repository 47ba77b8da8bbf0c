// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace dynbit {

double compute_gavg(const Tensor& grads, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw std::domain_error("compute_gavg: eps must be a positive real");
  }
  if (grads.numel() == 0) {
    throw std::domain_error("compute_gavg: empty gradient tensor");
  }
  double acc = 0.0;
  for (double g : grads.data()) {
    if (!std::isfinite(g)) {
      throw std::invalid_argument("compute_gavg: non-finite gradient");
    }
    acc += std::abs(g / eps);
  }
  return acc / static_cast<double>(grads.numel());
}

std::vector<int> adjust_bitwidth(const std::vector<LayerStats>& stats,
                                 const PolicyConfig& cfg) {
  if (stats.empty()) throw std::domain_error("adjust_bitwidth: no layer stats");
  std::vector<int> out;
  out.reserve(stats.size());
  for (const auto& s : stats) {
    int k = s.bitwidth;
    if (s.gavg < cfg.t_min && k < cfg.k_max) {
      k += 1;
    } else if (s.gavg > cfg.t_max && k > cfg.k_min) {
      k -= 1;
    }
    out.push_back(k);
  }
  return out;
}

}  // namespace dynbit
