// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace dynbit {

namespace detail {

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; one draw per call, second half discarded for a simple
  // one-value-per-call stream.
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void shuffle_indices(std::vector<int64_t>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    // Draw uniformly in [0, i) by rejection on the top multiple.
    uint64_t bound = i;
    uint64_t limit = std::numeric_limits<uint64_t>::max() -
                     (std::numeric_limits<uint64_t>::max() % bound + 1) % bound;
    uint64_t r = rng();
    while (r > limit) r = rng();
    std::swap(idx[i - 1], idx[r % bound]);
  }
}

}  // namespace detail

namespace {

struct SplitInput {
  Tensor x;
  std::vector<int> y;
  std::vector<int64_t> sample_shape;
  int n_classes;
};

Dataset split_80_20(SplitInput in, uint64_t seed) {
  int64_t n = in.x.dim(0);
  int64_t sample_numel = 1;
  for (int64_t d : in.sample_shape) sample_numel *= d;

  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  std::mt19937_64 rng(seed ^ 0x5914a375c0e7ULL);
  detail::shuffle_indices(idx, rng);

  int64_t n_train = (n * 8) / 10;
  auto gather = [&](int64_t begin, int64_t end, Tensor& gx, std::vector<int>& gy) {
    std::vector<int64_t> shape = {end - begin};
    shape.insert(shape.end(), in.sample_shape.begin(), in.sample_shape.end());
    gx = Tensor(shape);
    gy.resize(static_cast<size_t>(end - begin));
    for (int64_t r = begin; r < end; ++r) {
      int64_t src = idx[static_cast<size_t>(r)];
      for (int64_t j = 0; j < sample_numel; ++j) {
        gx[(r - begin) * sample_numel + j] = in.x[src * sample_numel + j];
      }
      gy[static_cast<size_t>(r - begin)] = in.y[static_cast<size_t>(src)];
    }
  };

  Dataset ds;
  ds.n_classes = in.n_classes;
  ds.sample_shape = in.sample_shape;
  gather(0, n_train, ds.train_x, ds.train_y);
  gather(n_train, n, ds.test_x, ds.test_y);
  return ds;
}

}  // namespace

Dataset generate_synthetic(const BlobsSpec& spec) {
  if (spec.n_classes < 2 || spec.n_features < 1 || spec.noise < 0.0 ||
      spec.n_samples < 2 * spec.n_classes) {
    throw std::domain_error("generate_synthetic: degenerate blob spec");
  }
  std::mt19937_64 rng(spec.seed);

  // Centers uniform in [-5,5]^d, re-drawn until pairwise distance >= 3 so a
  // small float model can always separate the classes.
  std::vector<std::vector<double>> centers;
  constexpr double kMinDist = 3.0;
  for (int c = 0; c < spec.n_classes; ++c) {
    std::vector<double> center(static_cast<size_t>(spec.n_features));
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (auto& v : center) v = detail::uniform01(rng) * 10.0 - 5.0;
      bool ok = true;
      for (const auto& other : centers) {
        double d2 = 0.0;
        for (size_t j = 0; j < center.size(); ++j) {
          double diff = center[j] - other[j];
          d2 += diff * diff;
        }
        if (d2 < kMinDist * kMinDist) {
          ok = false;
          break;
        }
      }
      if (ok) break;
      if (attempt == 999) {
        throw std::domain_error("generate_synthetic: could not place separated centers");
      }
    }
    centers.push_back(center);
  }

  SplitInput in;
  in.n_classes = spec.n_classes;
  in.sample_shape = {spec.n_features};
  in.x = Tensor({spec.n_samples, spec.n_features});
  in.y.resize(static_cast<size_t>(spec.n_samples));
  for (int64_t i = 0; i < spec.n_samples; ++i) {
    int c = static_cast<int>(i % spec.n_classes);
    in.y[static_cast<size_t>(i)] = c;
    for (int j = 0; j < spec.n_features; ++j) {
      in.x[i * spec.n_features + j] =
          centers[static_cast<size_t>(c)][static_cast<size_t>(j)] +
          spec.noise * detail::gaussian(rng);
    }
  }
  return split_80_20(std::move(in), spec.seed);
}

namespace {

class IdxReader {
 public:
  explicit IdxReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ParseError("cannot open " + path, 0);
  }

  uint32_t read_u32() {
    unsigned char b[4];
    in_.read(reinterpret_cast<char*>(b), 4);
    if (in_.gcount() != 4) {
      throw ParseError("truncated IDX file " + path_, offset_);
    }
    offset_ += 4;
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
  }

  void read_bytes(std::vector<unsigned char>& out, int64_t n) {
    out.resize(static_cast<size_t>(n));
    in_.read(reinterpret_cast<char*>(out.data()), n);
    if (in_.gcount() != n) {
      throw ParseError("truncated IDX payload in " + path_, offset_ + in_.gcount());
    }
    offset_ += n;
  }

  int64_t offset() const { return offset_; }

 private:
  std::string path_;
  std::ifstream in_;
  int64_t offset_ = 0;
};

}  // namespace

Dataset load_idx(const std::string& image_path, const std::string& label_path,
                 uint64_t split_seed) {
  IdxReader img(image_path);
  uint32_t magic = img.read_u32();
  if (magic != 0x00000803u) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad image magic 0x%08x (expected 0x00000803)", magic);
    throw ParseError(std::string(buf) + " in " + image_path, 0);
  }
  int64_t count = img.read_u32();
  int64_t rows = img.read_u32();
  int64_t cols = img.read_u32();
  if (count < 1 || rows < 1 || cols < 1) {
    throw ParseError("empty IDX image file " + image_path, 4);
  }
  std::vector<unsigned char> pixels;
  img.read_bytes(pixels, count * rows * cols);

  IdxReader lbl(label_path);
  uint32_t lmagic = lbl.read_u32();
  if (lmagic != 0x00000801u) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad label magic 0x%08x (expected 0x00000801)", lmagic);
    throw ParseError(std::string(buf) + " in " + label_path, 0);
  }
  int64_t lcount = lbl.read_u32();
  if (lcount != count) {
    throw ParseError("label count " + std::to_string(lcount) + " != image count " +
                         std::to_string(count) + " in " + label_path,
                     4);
  }
  std::vector<unsigned char> labels;
  lbl.read_bytes(labels, lcount);

  SplitInput in;
  in.sample_shape = {1, rows, cols};
  in.x = Tensor({count, 1, rows, cols});
  in.y.resize(static_cast<size_t>(count));
  int max_label = 0;
  for (int64_t i = 0; i < count; ++i) {
    in.y[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)];
    max_label = std::max(max_label, static_cast<int>(labels[static_cast<size_t>(i)]));
  }
  in.n_classes = max_label + 1;
  for (int64_t i = 0; i < count * rows * cols; ++i) {
    in.x[i] = static_cast<double>(pixels[static_cast<size_t>(i)]) / 255.0;
  }
  return split_80_20(std::move(in), split_seed);
}

}  // namespace dynbit
