// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynbit/quant.hpp"
#include "dynbit/tensor.hpp"

namespace dynbit {

enum class LayerKind { Dense, Conv2D, ReLU, Flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::string name;
  // Dense
  int in = 0, out = 0;
  // Conv2D
  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, padding = 0;

  bool has_params() const {
    return kind == LayerKind::Dense || kind == LayerKind::Conv2D;
  }
  std::vector<int64_t> weight_shape() const;
  std::vector<int64_t> bias_shape() const;
  int64_t fan_in() const;
  int64_t param_count() const;  // weights + bias elements; 0 for unparameterized
};

/// A layer's parameters exist only in quantized form.
struct Layer {
  LayerSpec spec;
  QuantizedTensor weights;  // empty for ReLU/Flatten
  QuantizedTensor bias;
};

struct Model {
  std::vector<Layer> layers;
  /// Bumped on every parameter mutation; forward caches pin the revision.
  uint64_t revision = 0;

  int64_t param_count() const;
  /// Ordered names of all parameter tensors ("<layer>.weight", "<layer>.bias").
  std::vector<std::string> param_tensor_names() const;
};

/// Throws std::domain_error unless the layer stack composes over the given
/// input shape and layer names are unique. Returns the output (logits) shape.
std::vector<int64_t> validate_model(const std::vector<LayerSpec>& specs,
                                    const std::vector<int64_t>& input_shape);

/// Transient float view of a model's parameters. Never stored by the
/// training loop; oracles and the forward/backward internals use it.
struct FloatParams {
  struct Entry {
    Tensor weights, bias;
  };
  std::vector<Entry> layers;
};

FloatParams dequantize_params(const Model& model);

struct ForwardCache {
  uint64_t model_revision = 0;
  int activation_bits = 0;
  std::vector<Tensor> inputs;                  // input seen by each layer
  std::vector<std::vector<uint8_t>> ste_mask;  // per fake-quantized layer output
  Tensor logits;
};

struct Gradients {
  struct Entry {
    Tensor weights, bias;
    bool present = false;
  };
  std::vector<Entry> layers;  // parallel to model.layers
};

/// Quantize-then-dequantize with per-tensor params from the input's own
/// min/max (Nearest). Grid-aligned inputs pass through unchanged.
Tensor fake_quant_activation(const Tensor& x, int bits);

/// Runs the stack with transiently dequantized weights. Every layer output
/// except the last is fake-quantized to activation_bits (0 disables).
std::pair<Tensor, ForwardCache> forward(const Model& model, const Tensor& batch,
                                        int activation_bits = 8);

/// Softmax cross-entropy summed over the batch.
double cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Working-precision gradients for every weight and bias tensor. Gradients
/// pass straight through fake-quantized activations inside the clamp range.
/// Throws std::logic_error if the model changed since the forward pass.
Gradients backward(const Model& model, const ForwardCache& cache,
                   std::span<const int> targets);

/// Same stack evaluated on explicit float parameters (finite-difference
/// oracles and float baselines plug in here).
std::pair<Tensor, ForwardCache> forward_eval(const std::vector<LayerSpec>& specs,
                                             const FloatParams& params,
                                             const Tensor& batch,
                                             int activation_bits);

Gradients backward_eval(const std::vector<LayerSpec>& specs,
                        const FloatParams& params, const ForwardCache& cache,
                        std::span<const int> targets);

/// Per-layer forward-GEMM multiply-accumulate counts for ONE sample of the
/// given shape (batch dimension excluded); scale by batch size for a step.
/// The dX and dW backward GEMMs each cost the same count as the forward one.
/// ReLU/Flatten cost zero.
std::vector<int64_t> per_sample_macs(const std::vector<LayerSpec>& specs,
                                     const std::vector<int64_t>& sample_shape);

}  // namespace dynbit
