// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dynbit {

namespace {

void check_bitwidth(int k, const char* who) {
  if (k < kMinBitwidth || k > kMaxBitwidth) {
    throw std::domain_error(std::string(who) + ": bitwidth " + std::to_string(k) +
                            " outside [" + std::to_string(kMinBitwidth) + ", " +
                            std::to_string(kMaxBitwidth) + "]");
  }
}

// llround with the argument pre-clamped so huge magnitudes saturate instead
// of hitting undefined behaviour.
int64_t safe_llround(double x) {
  constexpr double kLimit = 4.0e18;
  return std::llround(std::clamp(x, -kLimit, kLimit));
}

uint32_t clamp_code(int64_t c, uint32_t max_code) {
  if (c < 0) return 0;
  if (c > static_cast<int64_t>(max_code)) return max_code;
  return static_cast<uint32_t>(c);
}

}  // namespace

QuantizedTensor::QuantizedTensor(std::vector<int64_t> shape,
                                 std::vector<uint32_t> codes, QuantParams params)
    : shape_(std::move(shape)), codes_(std::move(codes)), params_(params) {
  int64_t n = 1;
  for (int64_t d : shape_) n *= d;
  if (n != static_cast<int64_t>(codes_.size())) {
    throw std::invalid_argument("QuantizedTensor: code count does not match shape");
  }
  if (!params_.valid()) {
    throw std::invalid_argument("QuantizedTensor: invalid params");
  }
  uint32_t mc = params_.max_code();
  for (uint32_t c : codes_) {
    if (c > mc) throw std::invalid_argument("QuantizedTensor: code exceeds 2^k - 1");
  }
}

QuantParams params_for_range(double lo, double hi, int bitwidth) {
  check_bitwidth(bitwidth, "params_for_range");
  if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
    throw std::invalid_argument("params_for_range: bad interval");
  }
  QuantParams p;
  p.bitwidth = bitwidth;
  double levels = std::ldexp(1.0, bitwidth) - 1.0;  // 2^k - 1
  double range = hi - lo;
  if (range > 0.0 && std::isfinite(range)) {
    p.scale = range / levels;
    p.degenerate_range = false;
  } else {
    if (!std::isfinite(range)) {
      throw std::invalid_argument("params_for_range: value range overflows");
    }
    p.scale = kScaleFloor;
    p.degenerate_range = true;
  }
  p.zero_point = safe_llround(-lo / p.scale);
  return p;
}

QuantParams compute_params(const Tensor& values, int bitwidth) {
  check_bitwidth(bitwidth, "compute_params");
  if (values.numel() == 0) {
    throw std::invalid_argument("compute_params: empty tensor");
  }
  if (!values.all_finite()) {
    throw std::invalid_argument("compute_params: non-finite value in input");
  }
  return params_for_range(values.min(), values.max(), bitwidth);
}

QuantizedTensor quantize(const Tensor& values, const QuantParams& params,
                         Rounding& mode) {
  if (!params.valid()) throw std::invalid_argument("quantize: invalid params");
  uint32_t mc = params.max_code();
  double inv_scale = 1.0 / params.scale;
  double zp = static_cast<double>(params.zero_point);
  std::vector<uint32_t> codes(static_cast<size_t>(values.numel()));
  auto src = values.data();
  for (size_t i = 0; i < codes.size(); ++i) {
    double v = src[i];
    if (!std::isfinite(v)) {
      throw std::invalid_argument("quantize: non-finite value at index " +
                                  std::to_string(i));
    }
    // Clamp in real space first so the rounding step cannot overflow.
    double x = std::clamp(v * inv_scale + zp, -2.0, static_cast<double>(mc) + 2.0);
    codes[i] = clamp_code(mode.round(x), mc);
  }
  return QuantizedTensor(values.shape(), std::move(codes), params);
}

Tensor dequantize(const QuantizedTensor& qt) {
  const QuantParams& p = qt.params();
  std::vector<double> out(static_cast<size_t>(qt.numel()));
  auto codes = qt.codes();
  double zp = static_cast<double>(p.zero_point);
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = p.scale * (static_cast<double>(codes[i]) - zp);
  }
  return Tensor(qt.shape(), std::move(out));
}

double epsilon(const QuantizedTensor& qt) { return qt.params().scale; }

QuantizedTensor requantize(const QuantizedTensor& qt, int new_bitwidth,
                           Rounding& mode) {
  check_bitwidth(new_bitwidth, "requantize");
  QuantParams np = params_for_range(qt.params().range_min(),
                                    qt.params().range_max(), new_bitwidth);
  // Degenerate grids keep their floor step instead of shrinking further.
  if (qt.params().degenerate_range) {
    np.scale = kScaleFloor;
    np.degenerate_range = true;
    np.zero_point = safe_llround(-qt.params().range_min() / np.scale);
  }
  return quantize(dequantize(qt), np, mode);
}

QuantizedTensor apply_update(const QuantizedTensor& qt, const Tensor& grads,
                             double lr, Rounding& mode) {
  if (grads.shape() != qt.shape()) {
    throw std::domain_error("apply_update: gradient shape " + grads.shape_str() +
                            " does not match parameter shape");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::domain_error("apply_update: learning rate must be finite and >= 0");
  }
  const QuantParams& p = qt.params();
  uint32_t mc = p.max_code();
  double inv_eps = 1.0 / p.scale;
  auto g = grads.data();
  std::vector<uint32_t> codes(qt.codes().begin(), qt.codes().end());
  for (size_t i = 0; i < codes.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw std::invalid_argument("apply_update: non-finite gradient at index " +
                                  std::to_string(i));
    }
    // Step count of the regulated update; saturate far-out quotients.
    double q = std::clamp(lr * g[i] * inv_eps, -4.0e18, 4.0e18);
    int64_t steps = mode.round(q);
    codes[i] = clamp_code(static_cast<int64_t>(codes[i]) - steps, mc);
  }
  return QuantizedTensor(qt.shape(), std::move(codes), p);
}

}  // namespace dynbit
