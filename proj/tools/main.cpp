// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0
//
// Command-line front end. Everything goes through the C API.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dynbit.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // I/O failure, failed gradcheck
constexpr int kExitUsage = 2;    // bad arguments or invalid config

int status_to_exit(dynbit_status st) {
  switch (st) {
    case DYNBIT_OK:
      return kExitOk;
    case DYNBIT_ERR_PARSE:
    case DYNBIT_ERR_INVALID_ARG:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

int report_error(dynbit_status st) {
  std::fprintf(stderr, "error: %s\n", dynbit_last_error());
  return status_to_exit(st);
}

struct ConfigHandle {
  dynbit_config* cfg = nullptr;
  ~ConfigHandle() { dynbit_config_free(cfg); }
};

int load_config(const std::string& path, bool has_seed, uint64_t seed,
                bool policy_off, ConfigHandle& handle) {
  dynbit_status st = dynbit_config_from_file(path.c_str(), &handle.cfg);
  if (st != DYNBIT_OK) return report_error(st);
  if (has_seed) dynbit_config_set_seed(handle.cfg, seed);
  if (policy_off) dynbit_config_disable_policy(handle.cfg);
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              bool has_seed, uint64_t seed, bool policy_off) {
  ConfigHandle handle;
  if (int rc = load_config(config_path, has_seed, seed, policy_off, handle)) return rc;
  dynbit_report* report = nullptr;
  dynbit_status st = dynbit_train(handle.cfg, out_dir.c_str(), &report);
  if (st != DYNBIT_OK) return report_error(st);
  std::printf("test accuracy        : %.2f %%\n", dynbit_report_test_accuracy(report));
  std::printf("train accuracy       : %.2f %%\n", dynbit_report_train_accuracy(report));
  std::printf("avg bitwidth (final) : %.3f\n", dynbit_report_weighted_avg_bitwidth(report));
  std::printf("wall clock           : %.2f s\n", dynbit_report_wall_clock_seconds(report));
  std::printf("artifacts            : %s/report.json, %s/bitwidth_history.csv\n",
              out_dir.c_str(), out_dir.c_str());
  dynbit_report_free(report);
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, bool has_seed, uint64_t seed) {
  ConfigHandle handle;
  if (int rc = load_config(config_path, has_seed, seed, false, handle)) return rc;
  double err = 0.0;
  dynbit_status st = dynbit_gradcheck(handle.cfg, &err);
  if (st != DYNBIT_OK) return report_error(st);
  std::printf("max relative gradient error: %.3e\n", err);
  if (err > 1e-3) {
    std::fprintf(stderr, "gradcheck FAILED (threshold 1e-3)\n");
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_report(const std::string& run_dir) {
  char* text = nullptr;
  dynbit_status st = dynbit_run_summary(run_dir.c_str(), &text);
  if (st != DYNBIT_OK) return report_error(st);
  std::fputs(text, stdout);
  dynbit_string_free(text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynbit: quantized training with dynamic per-layer bitwidth"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dynbit_version());

  std::string config_path, out_dir = "out", run_dir;
  uint64_t seed = 0;
  bool policy_off = false;
  int jobs = 1, seeds = 5;
  std::vector<double> tmin_values;
  std::vector<int> init_values;
  std::vector<int64_t> batch_values;

  auto add_run_flags = [&](CLI::App* cmd, bool with_output) {
    cmd->add_option("config", config_path, "config JSON path")->required();
    if (with_output) {
      cmd->add_option("-o,--output", out_dir, "output directory")->required();
    }
    cmd->add_option("--seed", seed, "override the config seed");
    return cmd;
  };

  auto* train = add_run_flags(app.add_subcommand("train", "run one training"), true);
  train->add_flag("--policy-off", policy_off,
                  "freeze bitwidths at initial_bitwidth (fixed-precision mode)");

  auto* sweep_tmin =
      add_run_flags(app.add_subcommand("sweep-tmin", "t_min trade-off sweep"), true);
  sweep_tmin->add_option("--values", tmin_values, "comma-separated t_min values")
      ->required()
      ->delimiter(',');
  sweep_tmin->add_option("--seeds", seeds, "seeds per value (default 5)");
  sweep_tmin->add_option("--jobs", jobs, "parallel runs");

  auto* sweep_init = add_run_flags(
      app.add_subcommand("sweep-init", "initial-bitwidth sensitivity sweep"), true);
  sweep_init->add_option("--values", init_values, "comma-separated initial bitwidths")
      ->required()
      ->delimiter(',');
  sweep_init->add_option("--seeds", seeds, "seeds per value (default 5)");
  sweep_init->add_option("--jobs", jobs, "parallel runs");

  auto* sweep_batch =
      add_run_flags(app.add_subcommand("sweep-batch", "batch-size vs bitwidth sweep"), true);
  sweep_batch->add_option("--values", batch_values, "comma-separated batch sizes")
      ->required()
      ->delimiter(',');
  sweep_batch->add_option("--seeds", seeds, "seeds per value (default 5)");
  sweep_batch->add_option("--jobs", jobs, "parallel runs");

  auto* gradcheck =
      add_run_flags(app.add_subcommand("gradcheck", "finite-difference gradient check"), false);

  auto* report = app.add_subcommand("report", "summarize a finished run directory");
  report->add_option("run_dir", run_dir, "directory containing report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fprintf(stderr, "%s", app.help().c_str());
    return kExitUsage;
  }

  auto sub_has_seed = [&](CLI::App* cmd) { return cmd->count("--seed") > 0; };

  if (train->parsed()) {
    return cmd_train(config_path, out_dir, sub_has_seed(train), seed, policy_off);
  }
  if (gradcheck->parsed()) {
    return cmd_gradcheck(config_path, sub_has_seed(gradcheck), seed);
  }
  if (report->parsed()) {
    return cmd_report(run_dir);
  }

  ConfigHandle handle;
  dynbit_status st = DYNBIT_OK;
  if (sweep_tmin->parsed()) {
    if (int rc = load_config(config_path, sub_has_seed(sweep_tmin), seed, false, handle)) {
      return rc;
    }
    st = dynbit_sweep_tmin(handle.cfg, tmin_values.data(), tmin_values.size(), seeds,
                           jobs, out_dir.c_str());
  } else if (sweep_init->parsed()) {
    if (int rc = load_config(config_path, sub_has_seed(sweep_init), seed, false, handle)) {
      return rc;
    }
    st = dynbit_sweep_init_bitwidth(handle.cfg, init_values.data(), init_values.size(),
                                    seeds, jobs, out_dir.c_str());
  } else if (sweep_batch->parsed()) {
    if (int rc = load_config(config_path, sub_has_seed(sweep_batch), seed, false, handle)) {
      return rc;
    }
    st = dynbit_sweep_batch_size(handle.cfg, batch_values.data(), batch_values.size(),
                                 seeds, jobs, out_dir.c_str());
  }
  if (st != DYNBIT_OK) return report_error(st);
  std::printf("wrote %s/sweep.csv\n", out_dir.c_str());
  return kExitOk;
}
