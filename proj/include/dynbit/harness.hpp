// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dynbit/accounting.hpp"
#include "dynbit/dataset.hpp"
#include "dynbit/nn.hpp"
#include "dynbit/policy.hpp"
#include "dynbit/trainer.hpp"

namespace dynbit {

enum class DatasetKind { Blobs, Idx };

/// Seed-stream salts: each consumer of randomness draws from its own stream
/// so paired runs (e.g. a float baseline on the same seed) can reproduce the
/// exact init/batch-order/rounding sequences.
inline constexpr uint64_t kInitStreamSalt = 0x9e3779b97f4a7c15ULL;
inline constexpr uint64_t kOrderStreamSalt = 0xc2b2ae3d27d4eb4fULL;
inline constexpr uint64_t kRoundStreamSalt = 0x165667b19e3779f9ULL;

struct TrainConfig {
  DatasetKind dataset_kind = DatasetKind::Blobs;
  BlobsSpec blobs;
  std::string idx_images, idx_labels;

  std::vector<LayerSpec> model;

  double lr = 0.01;
  int64_t batch_size = 32;
  int64_t epochs = 10;
  int initial_bitwidth = 8;
  int activation_bits = 8;  // 0 disables activation fake-quantization
  RoundingKind rounding = RoundingKind::Stochastic;
  PolicyConfig policy;
  uint64_t seed = 0;
  bool update_before_adjust = false;
};

/// Parses a config JSON document; unknown keys are rejected.
TrainConfig config_from_json(const std::string& text);
TrainConfig config_from_file(const std::string& path);
/// Canonical serialization (all fields materialized); byte-stable.
std::string config_to_json(const TrainConfig& cfg);

/// Structural validation that does not need the dataset. Throws on failure.
void validate_config(const TrainConfig& cfg);

struct RunReport {
  TrainConfig config;
  double train_accuracy = 0.0;  // percent
  double test_accuracy = 0.0;   // percent
  double final_loss = 0.0;      // mean training loss over the last epoch
  std::vector<std::pair<std::string, int>> per_layer_bitwidth;  // model order
  double weighted_avg_bitwidth = 0.0;
  EnergyLedger energy;
  MemoryReport memory;
  BitwidthHistory history;
  RunCounters events;
  uint64_t seed = 0;
  double wall_clock_seconds = 0.0;  // never serialized

  /// GEMM energy relative to the same MACs at fp32 (0 for an empty run).
  double gemm_vs_fp32() const {
    return energy.total_gemm_macs > 0.0 ? energy.gemm_units / energy.total_gemm_macs
                                        : 0.0;
  }
};

Dataset make_dataset(const TrainConfig& cfg);

/// Seeded working-precision initialization (He-uniform weights, uniform
/// +-1/sqrt(fan_in) biases). The float baseline starts from the same values.
FloatParams initial_float_params(const std::vector<LayerSpec>& specs, uint64_t seed);

/// Quantizes the initial parameters at `bitwidth` (Nearest); the result is
/// the run's single parameter copy.
Model build_model(const std::vector<LayerSpec>& specs, const FloatParams& init,
                  int bitwidth, RunCounters* counters = nullptr);

double accuracy_percent(const Model& model, const Tensor& x,
                        std::span<const int> y, int activation_bits);

/// Executes the full training loop and in-memory reporting. Deterministic:
/// identical (config, seed) gives identical reports apart from wall clock.
/// With a non-empty artifact_dir, report.json and bitwidth_history.csv are
/// written there on success; on a mid-run failure the partial history CSV is
/// still flushed before the error propagates.
RunReport run(const TrainConfig& cfg, const std::string& artifact_dir = "");

std::string report_to_json(const RunReport& report);
std::string history_to_csv(const BitwidthHistory& history);
/// Writes report.json and bitwidth_history.csv under out_dir (created if
/// missing).
void write_run_artifacts(const RunReport& report, const std::string& out_dir);

/// Max relative error of analytic vs central finite-difference gradients on
/// the config's model over one small batch. Runs with activation
/// fake-quantization off (the quantization stair is not differentiable).
double gradcheck_max_rel_error(const TrainConfig& cfg);

/// Human-readable summary of a finished run directory (reads report.json).
std::string summarize_run_dir(const std::string& run_dir);

// --- Sweeps: one run per (value, seed), seeds = base seed + 0..n_seeds-1,
// --- per-value medians across seeds. Runs may execute in parallel.

struct TminRow {
  double t_min = 0.0;
  double accuracy = 0.0;  // median test accuracy, percent
  double energy = 0.0;    // median GEMM energy vs fp32
  double memory = 0.0;    // median final parameter memory vs fp32
};
std::vector<TminRow> sweep_tmin(const TrainConfig& base, std::span<const double> values,
                                int n_seeds, int jobs);
std::string tmin_sweep_csv(const std::vector<TminRow>& rows);

struct InitBitwidthSweep {
  std::vector<std::pair<int, double>> rows;  // (k_init, median final accuracy)
  double spread = 0.0;                       // max - min of the medians
};
InitBitwidthSweep sweep_init_bitwidth(const TrainConfig& base,
                                      std::span<const int> values, int n_seeds,
                                      int jobs);
std::string init_sweep_csv(const InitBitwidthSweep& sweep);

struct BatchRow {
  int64_t batch_size = 0;
  double final_avg_bitwidth = 0.0;  // median across seeds
};
std::vector<BatchRow> sweep_batch_size(const TrainConfig& base,
                                       std::span<const int64_t> values, int n_seeds,
                                       int jobs);
std::string batch_sweep_csv(const std::vector<BatchRow>& rows);

double median(std::vector<double> values);

}  // namespace dynbit
