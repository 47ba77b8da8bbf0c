// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "dynbit/harness.hpp"

struct dynbit_config {
  dynbit::TrainConfig cfg;
};

struct dynbit_report {
  dynbit::RunReport report;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
dynbit_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const dynbit::ParseError& e) {
    g_last_error = e.what();
    return DYNBIT_ERR_PARSE;
  } catch (const std::domain_error& e) {
    g_last_error = e.what();
    return DYNBIT_ERR_INVALID_ARG;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return DYNBIT_ERR_INVALID_ARG;
  } catch (const std::logic_error& e) {
    g_last_error = e.what();
    return DYNBIT_ERR_INVALID_ARG;
  } catch (const std::runtime_error& e) {
    g_last_error = e.what();
    return DYNBIT_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DYNBIT_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DYNBIT_ERR_INTERNAL;
  }
}

dynbit_status fail_arg(const char* message) {
  g_last_error = message;
  return DYNBIT_ERR_INVALID_ARG;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_sweep_csv(const std::string& out_dir, const std::string& content) {
  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "sweep.csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "sweep.csv").string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + (dir / "sweep.csv").string());
}

}  // namespace

extern "C" {

const char* dynbit_version(void) { return "0.1.0"; }

const char* dynbit_last_error(void) { return g_last_error.c_str(); }

dynbit_status dynbit_config_from_json(const char* json_text, dynbit_config** out) {
  if (!json_text || !out) return fail_arg("null argument");
  return guarded([&] {
    auto cfg = std::make_unique<dynbit_config>();
    cfg->cfg = dynbit::config_from_json(json_text);
    *out = cfg.release();
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_config_from_file(const char* path, dynbit_config** out) {
  if (!path || !out) return fail_arg("null argument");
  return guarded([&] {
    std::ifstream in(path);
    if (!in) throw dynbit::ParseError("cannot open config file " + std::string(path), 0);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    auto cfg = std::make_unique<dynbit_config>();
    cfg->cfg = dynbit::config_from_json(text);
    *out = cfg.release();
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_config_set_seed(dynbit_config* cfg, uint64_t seed) {
  if (!cfg) return fail_arg("null config");
  cfg->cfg.seed = seed;
  return DYNBIT_OK;
}

dynbit_status dynbit_config_disable_policy(dynbit_config* cfg) {
  if (!cfg) return fail_arg("null config");
  cfg->cfg.policy.t_min = 0.0;
  cfg->cfg.policy.t_max = 1e308;
  return DYNBIT_OK;
}

void dynbit_config_free(dynbit_config* cfg) { delete cfg; }

dynbit_status dynbit_train(const dynbit_config* cfg, const char* out_dir,
                           dynbit_report** out_report) {
  if (!cfg || !out_dir) return fail_arg("null argument");
  return guarded([&] {
    dynbit::RunReport report = dynbit::run(cfg->cfg, out_dir);
    if (out_report) {
      auto wrapped = std::make_unique<dynbit_report>();
      wrapped->report = std::move(report);
      *out_report = wrapped.release();
    }
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_report_to_json(const dynbit_report* report, char** out_json) {
  if (!report || !out_json) return fail_arg("null argument");
  return guarded([&] {
    *out_json = dup_string(dynbit::report_to_json(report->report));
    return *out_json ? DYNBIT_OK : DYNBIT_ERR_INTERNAL;
  });
}

double dynbit_report_test_accuracy(const dynbit_report* report) {
  return report ? report->report.test_accuracy : -1.0;
}

double dynbit_report_train_accuracy(const dynbit_report* report) {
  return report ? report->report.train_accuracy : -1.0;
}

double dynbit_report_weighted_avg_bitwidth(const dynbit_report* report) {
  return report ? report->report.weighted_avg_bitwidth : -1.0;
}

double dynbit_report_wall_clock_seconds(const dynbit_report* report) {
  return report ? report->report.wall_clock_seconds : -1.0;
}

void dynbit_report_free(dynbit_report* report) { delete report; }

void dynbit_string_free(char* s) { std::free(s); }

dynbit_status dynbit_sweep_tmin(const dynbit_config* cfg, const double* values,
                                size_t n_values, int n_seeds, int jobs,
                                const char* out_dir) {
  if (!cfg || !values || !out_dir) return fail_arg("null argument");
  if (n_values == 0) return fail_arg("sweep needs at least one value");
  return guarded([&] {
    auto rows = dynbit::sweep_tmin(cfg->cfg, {values, n_values}, n_seeds, jobs);
    write_sweep_csv(out_dir, dynbit::tmin_sweep_csv(rows));
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_sweep_init_bitwidth(const dynbit_config* cfg, const int* values,
                                         size_t n_values, int n_seeds, int jobs,
                                         const char* out_dir) {
  if (!cfg || !values || !out_dir) return fail_arg("null argument");
  if (n_values == 0) return fail_arg("sweep needs at least one value");
  return guarded([&] {
    auto sweep =
        dynbit::sweep_init_bitwidth(cfg->cfg, {values, n_values}, n_seeds, jobs);
    write_sweep_csv(out_dir, dynbit::init_sweep_csv(sweep));
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_sweep_batch_size(const dynbit_config* cfg, const int64_t* values,
                                      size_t n_values, int n_seeds, int jobs,
                                      const char* out_dir) {
  if (!cfg || !values || !out_dir) return fail_arg("null argument");
  if (n_values == 0) return fail_arg("sweep needs at least one value");
  return guarded([&] {
    auto rows = dynbit::sweep_batch_size(cfg->cfg, {values, n_values}, n_seeds, jobs);
    write_sweep_csv(out_dir, dynbit::batch_sweep_csv(rows));
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_gradcheck(const dynbit_config* cfg, double* max_rel_error) {
  if (!cfg || !max_rel_error) return fail_arg("null argument");
  return guarded([&] {
    *max_rel_error = dynbit::gradcheck_max_rel_error(cfg->cfg);
    return DYNBIT_OK;
  });
}

dynbit_status dynbit_run_summary(const char* run_dir, char** out_text) {
  if (!run_dir || !out_text) return fail_arg("null argument");
  return guarded([&] {
    *out_text = dup_string(dynbit::summarize_run_dir(run_dir));
    return *out_text ? DYNBIT_OK : DYNBIT_ERR_INTERNAL;
  });
}

}  // extern "C"
