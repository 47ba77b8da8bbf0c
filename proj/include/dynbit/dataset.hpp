// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynbit/tensor.hpp"

namespace dynbit {

/// Parse failure with the byte offset where it was detected.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  int64_t offset() const { return offset_; }

 private:
  int64_t offset_;
};

struct BlobsSpec {
  int n_classes = 2;
  int n_features = 2;
  int64_t n_samples = 100;
  double noise = 0.1;
  uint64_t seed = 0;
};

struct Dataset {
  Tensor train_x, test_x;        // [N, features...] rows
  std::vector<int> train_y, test_y;
  int n_classes = 0;
  std::vector<int64_t> sample_shape;  // shape of one sample (no batch dim)

  int64_t train_size() const { return train_x.dim(0); }
  int64_t test_size() const { return test_x.dim(0); }
};

/// Seeded Gaussian class blobs with well-separated centers, split 80/20
/// train/test by a seeded shuffle. Deterministic given the parameters.
Dataset generate_synthetic(const BlobsSpec& spec);

/// Big-endian IDX image/label pair (magics 0x00000803 / 0x00000801).
/// Pixels are scaled to [0, 1]; samples are [1, rows, cols]. Split 80/20 by
/// seeded shuffle.
Dataset load_idx(const std::string& image_path, const std::string& label_path,
                 uint64_t split_seed);

namespace detail {
/// 53-bit uniform in [0, 1); stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
double gaussian(std::mt19937_64& rng);
/// Fisher-Yates with explicit rejection-free bounded draws.
void shuffle_indices(std::vector<int64_t>& idx, std::mt19937_64& rng);
}  // namespace detail

}  // namespace dynbit
