// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "dynbit/tensor.hpp"

namespace dynbit {

inline constexpr int kMinBitwidth = 2;
inline constexpr int kMaxBitwidth = 32;

/// Substituted for the step size when a tensor has zero value range; keeps
/// the grid finite and the tensor updatable.
inline constexpr double kScaleFloor = 0x1p-24;

/// Affine grid r = scale * (code - zero_point) for one tensor.
///
/// `scale` is exactly the tensor's minimum resolution: with params computed
/// from the tensor's own min/max it equals (max - min)/(2^k - 1).
/// `zero_point` is the integer grid anchor; it may lie outside the code
/// range, so real zero need not be representable.
struct QuantParams {
  double scale = 1.0;
  int64_t zero_point = 0;
  int bitwidth = 8;
  bool degenerate_range = false;  // scale floor was substituted (zero range)

  uint32_t max_code() const {
    return bitwidth >= 32 ? 0xFFFFFFFFu : ((1u << bitwidth) - 1u);
  }
  double code_to_real(uint32_t code) const {
    return scale * (static_cast<double>(code) - static_cast<double>(zero_point));
  }
  /// Representable endpoints (codes 0 and 2^k - 1).
  double range_min() const { return code_to_real(0); }
  double range_max() const { return code_to_real(max_code()); }

  bool valid() const {
    return bitwidth >= kMinBitwidth && bitwidth <= kMaxBitwidth && scale > 0.0 &&
           std::isfinite(scale);
  }
};

enum class RoundingKind { Nearest, Floor, Stochastic };

/// Rounding mode, carrying the generator for the stochastic variant.
/// A stochastic rounder is fully determined by its seed and call sequence;
/// concurrent users need one instance each.
class Rounding {
 public:
  static Rounding nearest() { return Rounding(RoundingKind::Nearest, 0); }
  static Rounding floor() { return Rounding(RoundingKind::Floor, 0); }
  static Rounding stochastic(uint64_t seed) {
    return Rounding(RoundingKind::Stochastic, seed);
  }

  RoundingKind kind() const { return kind_; }

  /// Rounds x to an integer step count. Stochastic mode draws once per call
  /// regardless of the fractional part.
  int64_t round(double x) {
    switch (kind_) {
      case RoundingKind::Nearest:
        return std::llround(x);
      case RoundingKind::Floor:
        return static_cast<int64_t>(std::floor(x));
      case RoundingKind::Stochastic: {
        double f = std::floor(x);
        double frac = x - f;
        return static_cast<int64_t>(f) + (uniform01() < frac ? 1 : 0);
      }
    }
    return 0;  // unreachable
  }

 private:
  Rounding(RoundingKind kind, uint64_t seed) : kind_(kind), rng_(seed) {}

  // 53-bit uniform in [0,1); independent of distribution internals so the
  // stream is stable across standard libraries.
  double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  RoundingKind kind_;
  std::mt19937_64 rng_;
};

/// Integer codes plus their grid. The only persistent form of parameters.
class QuantizedTensor {
 public:
  QuantizedTensor() = default;
  QuantizedTensor(std::vector<int64_t> shape, std::vector<uint32_t> codes,
                  QuantParams params);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(codes_.size()); }
  std::span<const uint32_t> codes() const { return codes_; }
  const QuantParams& params() const { return params_; }

 private:
  std::vector<int64_t> shape_;
  std::vector<uint32_t> codes_;
  QuantParams params_;
};

/// Grid over [min(values), max(values)] at bitwidth k: scale is
/// (max-min)/(2^k-1), zero_point anchors code 0 at the value nearest min.
/// Zero range substitutes the scale floor and sets `degenerate_range`.
QuantParams compute_params(const Tensor& values, int bitwidth);

/// Grid over an explicit real interval [lo, hi].
QuantParams params_for_range(double lo, double hi, int bitwidth);

QuantizedTensor quantize(const Tensor& values, const QuantParams& params,
                         Rounding& mode);

Tensor dequantize(const QuantizedTensor& qt);

/// The tensor's minimum representable change (its grid step).
double epsilon(const QuantizedTensor& qt);

/// Re-grids the tensor at new_bitwidth over the same representable range.
/// Per-element drift is bounded by max(old step, new step).
QuantizedTensor requantize(const QuantizedTensor& qt, int new_bitwidth,
                           Rounding& mode);

/// Parameter update regulated by the grid step: codes move by
/// -round(lr*g/step) and saturate at the range ends. (S, Z) are unchanged;
/// re-gridding happens at policy ticks, not here.
QuantizedTensor apply_update(const QuantizedTensor& qt, const Tensor& grads,
                             double lr, Rounding& mode);

}  // namespace dynbit
