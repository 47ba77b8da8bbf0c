// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace dynbit {

namespace {

std::vector<int64_t> conv_out_shape(const LayerSpec& s,
                                    const std::vector<int64_t>& in) {
  if (in.size() != 4) {
    throw std::domain_error("layer " + s.name + ": Conv2D expects [N,C,H,W], got " +
                            std::to_string(in.size()) + "-d input");
  }
  if (in[1] != s.in_ch) {
    throw std::domain_error("layer " + s.name + ": expected " +
                            std::to_string(s.in_ch) + " input channels, got " +
                            std::to_string(in[1]));
  }
  int64_t oh = (in[2] + 2 * s.padding - s.kernel) / s.stride + 1;
  int64_t ow = (in[3] + 2 * s.padding - s.kernel) / s.stride + 1;
  if (oh < 1 || ow < 1) {
    throw std::domain_error("layer " + s.name + ": kernel does not fit input");
  }
  return {in[0], s.out_ch, oh, ow};
}

std::vector<int64_t> output_shape(const LayerSpec& s,
                                  const std::vector<int64_t>& in) {
  switch (s.kind) {
    case LayerKind::Dense:
      if (in.size() != 2 || in[1] != s.in) {
        throw std::domain_error("layer " + s.name + ": Dense(" + std::to_string(s.in) +
                                "," + std::to_string(s.out) + ") cannot take input of that shape");
      }
      return {in[0], s.out};
    case LayerKind::Conv2D:
      return conv_out_shape(s, in);
    case LayerKind::ReLU:
      return in;
    case LayerKind::Flatten: {
      if (in.size() < 2) throw std::domain_error("layer " + s.name + ": Flatten expects rank >= 2");
      int64_t rest = 1;
      for (size_t i = 1; i < in.size(); ++i) rest *= in[i];
      return {in[0], rest};
    }
  }
  throw std::domain_error("unknown layer kind");
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                     const LayerSpec& s) {
  int64_t n = x.dim(0), fin = s.in, fout = s.out;
  Tensor y({n, fout});
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t o = 0; o < fout; ++o) {
      double acc = b[o];
      for (int64_t i = 0; i < fin; ++i) {
        acc += x[r * fin + i] * w[o * fin + i];
      }
      y[r * fout + o] = acc;
    }
  }
  return y;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                    const LayerSpec& s, bool need_dx, Tensor& dx, Tensor& dw,
                    Tensor& db) {
  int64_t n = x.dim(0), fin = s.in, fout = s.out;
  dw = Tensor({fout, fin});
  db = Tensor({fout});
  if (need_dx) dx = Tensor({n, fin});
  for (int64_t r = 0; r < n; ++r) {
    for (int64_t o = 0; o < fout; ++o) {
      double g = dy[r * fout + o];
      db[o] += g;
      for (int64_t i = 0; i < fin; ++i) {
        dw[o * fin + i] += g * x[r * fin + i];
        if (need_dx) dx[r * fin + i] += g * w[o * fin + i];
      }
    }
  }
}

Tensor conv_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    const LayerSpec& s) {
  auto os = conv_out_shape(s, x.shape());
  int64_t n = x.dim(0), ic = s.in_ch, h = x.dim(2), wd = x.dim(3);
  int64_t oc = s.out_ch, oh = os[2], ow = os[3], k = s.kernel;
  Tensor y(os);
  for (int64_t bi = 0; bi < n; ++bi) {
    for (int64_t o = 0; o < oc; ++o) {
      for (int64_t r = 0; r < oh; ++r) {
        for (int64_t c = 0; c < ow; ++c) {
          double acc = b[o];
          for (int64_t ci = 0; ci < ic; ++ci) {
            for (int64_t kr = 0; kr < k; ++kr) {
              int64_t ir = r * s.stride + kr - s.padding;
              if (ir < 0 || ir >= h) continue;
              for (int64_t kc = 0; kc < k; ++kc) {
                int64_t icol = c * s.stride + kc - s.padding;
                if (icol < 0 || icol >= wd) continue;
                acc += x[((bi * ic + ci) * h + ir) * wd + icol] *
                       w[((o * ic + ci) * k + kr) * k + kc];
              }
            }
          }
          y[((bi * oc + o) * oh + r) * ow + c] = acc;
        }
      }
    }
  }
  return y;
}

void conv_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                   const LayerSpec& s, bool need_dx, Tensor& dx, Tensor& dw,
                   Tensor& db) {
  auto os = conv_out_shape(s, x.shape());
  int64_t n = x.dim(0), ic = s.in_ch, h = x.dim(2), wd = x.dim(3);
  int64_t oc = s.out_ch, oh = os[2], ow = os[3], k = s.kernel;
  dw = Tensor(w.shape());
  db = Tensor({oc});
  if (need_dx) dx = Tensor(x.shape());
  for (int64_t bi = 0; bi < n; ++bi) {
    for (int64_t o = 0; o < oc; ++o) {
      for (int64_t r = 0; r < oh; ++r) {
        for (int64_t c = 0; c < ow; ++c) {
          double g = dy[((bi * oc + o) * oh + r) * ow + c];
          db[o] += g;
          for (int64_t ci = 0; ci < ic; ++ci) {
            for (int64_t kr = 0; kr < k; ++kr) {
              int64_t ir = r * s.stride + kr - s.padding;
              if (ir < 0 || ir >= h) continue;
              for (int64_t kc = 0; kc < k; ++kc) {
                int64_t icol = c * s.stride + kc - s.padding;
                if (icol < 0 || icol >= wd) continue;
                int64_t xi = ((bi * ic + ci) * h + ir) * wd + icol;
                int64_t wi = ((o * ic + ci) * k + kr) * k + kc;
                dw[wi] += g * x[xi];
                if (need_dx) dx[xi] += g * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

Tensor fake_quant_with_mask(const Tensor& x, int bits,
                            std::vector<uint8_t>* mask) {
  QuantParams p = compute_params(x, bits);
  Rounding nearest = Rounding::nearest();
  Tensor y = dequantize(quantize(x, p, nearest));
  if (mask) {
    mask->assign(static_cast<size_t>(x.numel()), 1);
    // Gradient is blocked only where the value saturated the grid.
    double lo = p.range_min() - 0.5 * p.scale;
    double hi = p.range_max() + 0.5 * p.scale;
    auto src = x.data();
    for (size_t i = 0; i < mask->size(); ++i) {
      if (src[i] < lo || src[i] > hi) (*mask)[i] = 0;
    }
  }
  return y;
}

void check_params_shape(const LayerSpec& s, const Tensor& w, const Tensor& b) {
  if (w.shape() != s.weight_shape() || b.shape() != s.bias_shape()) {
    throw std::domain_error("layer " + s.name + ": parameter shapes do not match spec");
  }
}

}  // namespace

std::vector<int64_t> LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::Dense:
      return {out, in};
    case LayerKind::Conv2D:
      return {out_ch, in_ch, kernel, kernel};
    default:
      return {};
  }
}

std::vector<int64_t> LayerSpec::bias_shape() const {
  switch (kind) {
    case LayerKind::Dense:
      return {out};
    case LayerKind::Conv2D:
      return {out_ch};
    default:
      return {};
  }
}

int64_t LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::Dense:
      return in;
    case LayerKind::Conv2D:
      return static_cast<int64_t>(in_ch) * kernel * kernel;
    default:
      return 0;
  }
}

int64_t LayerSpec::param_count() const {
  if (!has_params()) return 0;
  int64_t w = 1;
  for (int64_t d : weight_shape()) w *= d;
  int64_t b = 1;
  for (int64_t d : bias_shape()) b *= d;
  return w + b;
}

int64_t Model::param_count() const {
  int64_t n = 0;
  for (const auto& l : layers) n += l.spec.param_count();
  return n;
}

std::vector<std::string> Model::param_tensor_names() const {
  std::vector<std::string> names;
  for (const auto& l : layers) {
    if (!l.spec.has_params()) continue;
    names.push_back(l.spec.name + ".weight");
    names.push_back(l.spec.name + ".bias");
  }
  return names;
}

std::vector<int64_t> validate_model(const std::vector<LayerSpec>& specs,
                                    const std::vector<int64_t>& input_shape) {
  if (specs.empty()) throw std::domain_error("model has no layers");
  std::set<std::string> names;
  std::vector<int64_t> shape = input_shape;
  for (const auto& s : specs) {
    if (s.name.empty() || !names.insert(s.name).second) {
      throw std::domain_error("layer names must be unique and non-empty");
    }
    shape = output_shape(s, shape);
  }
  return shape;
}

FloatParams dequantize_params(const Model& model) {
  FloatParams fp;
  fp.layers.resize(model.layers.size());
  for (size_t i = 0; i < model.layers.size(); ++i) {
    if (!model.layers[i].spec.has_params()) continue;
    fp.layers[i].weights = dequantize(model.layers[i].weights);
    fp.layers[i].bias = dequantize(model.layers[i].bias);
  }
  return fp;
}

Tensor fake_quant_activation(const Tensor& x, int bits) {
  return fake_quant_with_mask(x, bits, nullptr);
}

std::pair<Tensor, ForwardCache> forward_eval(const std::vector<LayerSpec>& specs,
                                             const FloatParams& params,
                                             const Tensor& batch,
                                             int activation_bits) {
  if (specs.size() != params.layers.size()) {
    throw std::domain_error("forward_eval: spec/parameter count mismatch");
  }
  validate_model(specs, batch.shape());
  ForwardCache cache;
  cache.activation_bits = activation_bits;
  cache.inputs.reserve(specs.size());
  cache.ste_mask.resize(specs.size());
  Tensor x = batch;
  for (size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    cache.inputs.push_back(x);
    switch (s.kind) {
      case LayerKind::Dense: {
        check_params_shape(s, params.layers[i].weights, params.layers[i].bias);
        x = dense_forward(x, params.layers[i].weights, params.layers[i].bias, s);
        break;
      }
      case LayerKind::Conv2D: {
        check_params_shape(s, params.layers[i].weights, params.layers[i].bias);
        x = conv_forward(x, params.layers[i].weights, params.layers[i].bias, s);
        break;
      }
      case LayerKind::ReLU: {
        Tensor y(x.shape());
        for (int64_t j = 0; j < x.numel(); ++j) y[j] = x[j] > 0.0 ? x[j] : 0.0;
        x = std::move(y);
        break;
      }
      case LayerKind::Flatten:
        x = x.reshaped(output_shape(s, x.shape()));
        break;
    }
    // The classifier output stays in working precision.
    if (activation_bits > 0 && i + 1 < specs.size()) {
      x = fake_quant_with_mask(x, activation_bits, &cache.ste_mask[i]);
    }
  }
  cache.logits = x;
  return {std::move(x), std::move(cache)};
}

std::pair<Tensor, ForwardCache> forward(const Model& model, const Tensor& batch,
                                        int activation_bits) {
  std::vector<LayerSpec> specs;
  specs.reserve(model.layers.size());
  for (const auto& l : model.layers) specs.push_back(l.spec);
  auto [logits, cache] = forward_eval(specs, dequantize_params(model), batch,
                                      activation_bits);
  cache.model_revision = model.revision;
  return {std::move(logits), std::move(cache)};
}

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw std::domain_error("cross_entropy: logits must be [N,C]");
  int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    throw std::domain_error("cross_entropy: target count mismatch");
  }
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    if (targets[r] < 0 || targets[r] >= c) {
      throw std::domain_error("cross_entropy: target class out of range");
    }
    double m = logits[r * c];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, logits[r * c + j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(logits[r * c + j] - m);
    loss += std::log(sum) - (logits[r * c + targets[r]] - m);
  }
  return loss;
}

Gradients backward_eval(const std::vector<LayerSpec>& specs,
                        const FloatParams& params, const ForwardCache& cache,
                        std::span<const int> targets) {
  if (cache.inputs.size() != specs.size()) {
    throw std::logic_error("backward: cache does not match model");
  }
  const Tensor& logits = cache.logits;
  int64_t n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    throw std::domain_error("backward: target count mismatch");
  }
  // d(sum-CE)/dlogits = softmax - onehot
  Tensor dy(logits.shape());
  for (int64_t r = 0; r < n; ++r) {
    double m = logits[r * c];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, logits[r * c + j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) sum += std::exp(logits[r * c + j] - m);
    for (int64_t j = 0; j < c; ++j) {
      dy[r * c + j] = std::exp(logits[r * c + j] - m) / sum -
                      (targets[r] == j ? 1.0 : 0.0);
    }
  }

  Gradients grads;
  grads.layers.resize(specs.size());
  for (int64_t li = static_cast<int64_t>(specs.size()) - 1; li >= 0; --li) {
    const LayerSpec& s = specs[static_cast<size_t>(li)];
    const Tensor& x = cache.inputs[static_cast<size_t>(li)];
    const auto& mask = cache.ste_mask[static_cast<size_t>(li)];
    if (!mask.empty()) {
      for (int64_t j = 0; j < dy.numel(); ++j) {
        if (!mask[static_cast<size_t>(j)]) dy[j] = 0.0;
      }
    }
    bool need_dx = li > 0;
    Tensor dx;
    switch (s.kind) {
      case LayerKind::Dense: {
        auto& e = grads.layers[static_cast<size_t>(li)];
        dense_backward(x, params.layers[static_cast<size_t>(li)].weights, dy, s,
                       need_dx, dx, e.weights, e.bias);
        e.present = true;
        break;
      }
      case LayerKind::Conv2D: {
        auto& e = grads.layers[static_cast<size_t>(li)];
        conv_backward(x, params.layers[static_cast<size_t>(li)].weights, dy, s,
                      need_dx, dx, e.weights, e.bias);
        e.present = true;
        break;
      }
      case LayerKind::ReLU: {
        if (need_dx) {
          dx = Tensor(x.shape());
          for (int64_t j = 0; j < x.numel(); ++j) dx[j] = x[j] > 0.0 ? dy[j] : 0.0;
        }
        break;
      }
      case LayerKind::Flatten: {
        if (need_dx) dx = dy.reshaped(x.shape());
        break;
      }
    }
    if (need_dx) dy = std::move(dx);
  }
  return grads;
}

Gradients backward(const Model& model, const ForwardCache& cache,
                   std::span<const int> targets) {
  if (cache.model_revision != model.revision) {
    throw std::logic_error("backward: stale activation cache (model changed since forward)");
  }
  std::vector<LayerSpec> specs;
  specs.reserve(model.layers.size());
  for (const auto& l : model.layers) specs.push_back(l.spec);
  return backward_eval(specs, dequantize_params(model), cache, targets);
}

std::vector<int64_t> per_sample_macs(const std::vector<LayerSpec>& specs,
                                     const std::vector<int64_t>& sample_shape) {
  std::vector<int64_t> shape;
  shape.push_back(1);
  for (int64_t d : sample_shape) shape.push_back(d);
  std::vector<int64_t> macs;
  macs.reserve(specs.size());
  for (const auto& s : specs) {
    auto out = output_shape(s, shape);
    switch (s.kind) {
      case LayerKind::Dense:
        macs.push_back(static_cast<int64_t>(s.in) * s.out);
        break;
      case LayerKind::Conv2D:
        macs.push_back(out[1] * out[2] * out[3] * s.in_ch * s.kernel * s.kernel);
        break;
      default:
        macs.push_back(0);
        break;
    }
    shape = out;
  }
  return macs;
}

}  // namespace dynbit
