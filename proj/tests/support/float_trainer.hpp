#pragma once

// Float-precision SGD reference trainer. Same architecture, initial values,
// and batch order as the quantized engine on the same seed; parameters stay
// in working precision and nothing is quantized anywhere.

#include <span>
#include <vector>

#include "dynbit/dataset.hpp"
#include "dynbit/harness.hpp"
#include "dynbit/nn.hpp"

namespace dynbit::testsupport {

inline double float_accuracy_percent(const std::vector<LayerSpec>& specs,
                                     const FloatParams& params, const Tensor& x,
                                     std::span<const int> y) {
  int64_t n = x.dim(0);
  if (n == 0) return 0.0;
  auto [logits, cache] = forward_eval(specs, params, x, 0);
  int64_t classes = logits.dim(1);
  int64_t correct = 0;
  for (int64_t r = 0; r < n; ++r) {
    int64_t best = 0;
    for (int64_t c = 1; c < classes; ++c) {
      if (logits[r * classes + c] > logits[r * classes + best]) best = c;
    }
    if (best == y[static_cast<size_t>(r)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

struct FloatRunResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  FloatParams params;
};

inline FloatRunResult train_float_baseline(const TrainConfig& cfg) {
  Dataset ds = make_dataset(cfg);
  FloatParams params = initial_float_params(cfg.model, cfg.seed);
  std::vector<LayerSpec> specs = cfg.model;

  std::mt19937_64 order_rng(cfg.seed ^ kOrderStreamSalt);
  int64_t n_train = ds.train_size();
  int64_t sample_numel = 1;
  for (int64_t d : ds.sample_shape) sample_numel *= d;
  std::vector<int64_t> order(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, order_rng);
    for (int64_t begin = 0; begin < n_train; begin += cfg.batch_size) {
      int64_t end = std::min(n_train, begin + cfg.batch_size);
      std::vector<int64_t> shape = {end - begin};
      shape.insert(shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
      Tensor bx(shape);
      std::vector<int> by(static_cast<size_t>(end - begin));
      for (int64_t r = begin; r < end; ++r) {
        int64_t src = order[static_cast<size_t>(r)];
        for (int64_t j = 0; j < sample_numel; ++j) {
          bx[(r - begin) * sample_numel + j] = ds.train_x[src * sample_numel + j];
        }
        by[static_cast<size_t>(r - begin)] = ds.train_y[static_cast<size_t>(src)];
      }
      auto [logits, cache] = forward_eval(specs, params, bx, 0);
      Gradients grads = backward_eval(specs, params, cache, by);
      for (size_t li = 0; li < specs.size(); ++li) {
        if (!specs[li].has_params()) continue;
        auto& w = params.layers[li].weights;
        auto& b = params.layers[li].bias;
        for (int64_t j = 0; j < w.numel(); ++j) {
          w[j] -= cfg.lr * grads.layers[li].weights[j];
        }
        for (int64_t j = 0; j < b.numel(); ++j) {
          b[j] -= cfg.lr * grads.layers[li].bias[j];
        }
      }
    }
  }

  FloatRunResult result;
  result.train_accuracy = float_accuracy_percent(specs, params, ds.train_x, ds.train_y);
  result.test_accuracy = float_accuracy_percent(specs, params, ds.test_x, ds.test_y);
  result.params = std::move(params);
  return result;
}

}  // namespace dynbit::testsupport
