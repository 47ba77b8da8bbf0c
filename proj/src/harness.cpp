// Copyright 2026 The dynbit Authors
// Licensed under the Apache License, Version 2.0

#include "dynbit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace dynbit {

namespace {

using ordered_json = nlohmann::ordered_json;

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::domain_error("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

LayerSpec layer_from_json(const ordered_json& j, size_t index) {
  if (!j.is_object() || !j.contains("type")) {
    throw std::domain_error("config: each model entry needs a \"type\"");
  }
  std::string type = j.at("type").get<std::string>();
  LayerSpec s;
  if (type == "dense") {
    reject_unknown_keys(j, {"type", "name", "in", "out"}, "dense layer");
    s.kind = LayerKind::Dense;
    s.in = j.at("in").get<int>();
    s.out = j.at("out").get<int>();
    if (s.in < 1 || s.out < 1) throw std::domain_error("config: dense dims must be >= 1");
  } else if (type == "conv2d") {
    reject_unknown_keys(j, {"type", "name", "in_ch", "out_ch", "kernel", "stride", "padding"},
                        "conv2d layer");
    s.kind = LayerKind::Conv2D;
    s.in_ch = j.at("in_ch").get<int>();
    s.out_ch = j.at("out_ch").get<int>();
    s.kernel = j.at("kernel").get<int>();
    s.stride = j.value("stride", 1);
    s.padding = j.value("padding", 0);
    if (s.in_ch < 1 || s.out_ch < 1 || s.kernel < 1 || s.stride < 1 || s.padding < 0) {
      throw std::domain_error("config: bad conv2d geometry");
    }
  } else if (type == "relu") {
    reject_unknown_keys(j, {"type", "name"}, "relu layer");
    s.kind = LayerKind::ReLU;
  } else if (type == "flatten") {
    reject_unknown_keys(j, {"type", "name"}, "flatten layer");
    s.kind = LayerKind::Flatten;
  } else {
    throw std::domain_error("config: unknown layer type '" + type + "'");
  }
  std::string default_name = type + std::to_string(index);
  s.name = j.value("name", default_name);
  return s;
}

ordered_json layer_to_json(const LayerSpec& s) {
  ordered_json j;
  switch (s.kind) {
    case LayerKind::Dense:
      j["type"] = "dense";
      j["name"] = s.name;
      j["in"] = s.in;
      j["out"] = s.out;
      break;
    case LayerKind::Conv2D:
      j["type"] = "conv2d";
      j["name"] = s.name;
      j["in_ch"] = s.in_ch;
      j["out_ch"] = s.out_ch;
      j["kernel"] = s.kernel;
      j["stride"] = s.stride;
      j["padding"] = s.padding;
      break;
    case LayerKind::ReLU:
      j["type"] = "relu";
      j["name"] = s.name;
      break;
    case LayerKind::Flatten:
      j["type"] = "flatten";
      j["name"] = s.name;
      break;
  }
  return j;
}

ordered_json config_to_ordered_json(const TrainConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  ordered_json ds;
  if (cfg.dataset_kind == DatasetKind::Blobs) {
    ds["type"] = "blobs";
    ds["n_classes"] = cfg.blobs.n_classes;
    ds["n_features"] = cfg.blobs.n_features;
    ds["n_samples"] = cfg.blobs.n_samples;
    ds["noise"] = cfg.blobs.noise;
    ds["seed"] = cfg.blobs.seed;
  } else {
    ds["type"] = "idx";
    ds["images"] = cfg.idx_images;
    ds["labels"] = cfg.idx_labels;
  }
  j["dataset"] = ds;
  ordered_json model = ordered_json::array();
  for (const auto& s : cfg.model) model.push_back(layer_to_json(s));
  j["model"] = model;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["initial_bitwidth"] = cfg.initial_bitwidth;
  j["activation_bits"] = cfg.activation_bits;
  switch (cfg.rounding) {
    case RoundingKind::Nearest:
      j["rounding"] = "nearest";
      break;
    case RoundingKind::Floor:
      j["rounding"] = "floor";
      break;
    case RoundingKind::Stochastic:
      j["rounding"] = "stochastic";
      break;
  }
  j["update_before_adjust"] = cfg.update_before_adjust;
  ordered_json pol;
  pol["t_min"] = cfg.policy.t_min;
  pol["t_max"] = cfg.policy.t_max;
  pol["k_min"] = cfg.policy.k_min;
  pol["k_max"] = cfg.policy.k_max;
  pol["interval"] = cfg.policy.interval;
  j["policy"] = pol;
  return j;
}

double uniform_sym(std::mt19937_64& rng, double limit) {
  return (detail::uniform01(rng) * 2.0 - 1.0) * limit;
}

struct BatchView {
  Tensor x;
  std::vector<int> y;
};

BatchView gather_batch(const Tensor& xs, std::span<const int> ys,
                       std::span<const int64_t> idx,
                       const std::vector<int64_t>& sample_shape) {
  int64_t sample_numel = 1;
  for (int64_t d : sample_shape) sample_numel *= d;
  std::vector<int64_t> shape = {static_cast<int64_t>(idx.size())};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  BatchView b{Tensor(shape), {}};
  b.y.resize(idx.size());
  for (size_t r = 0; r < idx.size(); ++r) {
    for (int64_t j = 0; j < sample_numel; ++j) {
      b.x[static_cast<int64_t>(r) * sample_numel + j] = xs[idx[r] * sample_numel + j];
    }
    b.y[r] = ys[static_cast<size_t>(idx[r])];
  }
  return b;
}

void parallel_for(int jobs, int64_t n, const std::function<void(int64_t)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  int nthreads = static_cast<int>(std::min<int64_t>(jobs, n));
  threads.reserve(static_cast<size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TrainConfig config_from_parsed(const ordered_json& j) {
  if (!j.is_object()) throw std::domain_error("config: top level must be an object");
  reject_unknown_keys(j,
                      {"seed", "dataset", "model", "lr", "batch_size", "epochs",
                       "initial_bitwidth", "activation_bits", "rounding",
                       "update_before_adjust", "policy"},
                      "config");
  TrainConfig cfg;
  cfg.seed = j.value("seed", static_cast<uint64_t>(0));
  if (j.contains("dataset")) {
    const auto& ds = j.at("dataset");
    std::string type = ds.value("type", "blobs");
    if (type == "blobs") {
      reject_unknown_keys(ds, {"type", "n_classes", "n_features", "n_samples", "noise", "seed"},
                          "dataset");
      cfg.dataset_kind = DatasetKind::Blobs;
      cfg.blobs.n_classes = ds.value("n_classes", 2);
      cfg.blobs.n_features = ds.value("n_features", 2);
      cfg.blobs.n_samples = ds.value("n_samples", static_cast<int64_t>(100));
      cfg.blobs.noise = ds.value("noise", 0.1);
      cfg.blobs.seed = ds.value("seed", static_cast<uint64_t>(0));
    } else if (type == "idx") {
      reject_unknown_keys(ds, {"type", "images", "labels"}, "dataset");
      cfg.dataset_kind = DatasetKind::Idx;
      cfg.idx_images = ds.at("images").get<std::string>();
      cfg.idx_labels = ds.at("labels").get<std::string>();
    } else {
      throw std::domain_error("config: unknown dataset type '" + type + "'");
    }
  }
  if (!j.contains("model") || !j.at("model").is_array() || j.at("model").empty()) {
    throw std::domain_error("config: \"model\" must be a non-empty layer list");
  }
  size_t index = 0;
  for (const auto& lj : j.at("model")) {
    cfg.model.push_back(layer_from_json(lj, index));
    ++index;
  }
  cfg.lr = j.value("lr", 0.01);
  cfg.batch_size = j.value("batch_size", static_cast<int64_t>(32));
  cfg.epochs = j.value("epochs", static_cast<int64_t>(10));
  cfg.initial_bitwidth = j.value("initial_bitwidth", 8);
  cfg.activation_bits = j.value("activation_bits", 8);
  std::string rounding = j.value("rounding", "stochastic");
  if (rounding == "nearest") {
    cfg.rounding = RoundingKind::Nearest;
  } else if (rounding == "floor") {
    cfg.rounding = RoundingKind::Floor;
  } else if (rounding == "stochastic") {
    cfg.rounding = RoundingKind::Stochastic;
  } else {
    throw std::domain_error("config: unknown rounding '" + rounding + "'");
  }
  cfg.update_before_adjust = j.value("update_before_adjust", false);
  if (j.contains("policy")) {
    const auto& p = j.at("policy");
    reject_unknown_keys(p, {"t_min", "t_max", "k_min", "k_max", "interval"}, "policy");
    cfg.policy.t_min = p.value("t_min", 1.0);
    cfg.policy.t_max = p.value("t_max", 100.0);
    cfg.policy.k_min = p.value("k_min", 2);
    cfg.policy.k_max = p.value("k_max", 32);
    cfg.policy.interval = p.value("interval", static_cast<int64_t>(0));
  }
  validate_config(cfg);
  return cfg;
}

}  // namespace

TrainConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config JSON: ") + e.what(),
                     static_cast<int64_t>(e.byte));
  }
  try {
    return config_from_parsed(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::domain_error(std::string("config: ") + e.what());
  }
}

TrainConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const TrainConfig& cfg) {
  return config_to_ordered_json(cfg).dump(2) + "\n";
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.model.empty()) throw std::domain_error("config: empty model");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) {
    throw std::domain_error("config: lr must be finite and >= 0");
  }
  if (cfg.batch_size < 1) throw std::domain_error("config: batch_size must be >= 1");
  if (cfg.epochs < 0) throw std::domain_error("config: epochs must be >= 0");
  if (cfg.initial_bitwidth < kMinBitwidth || cfg.initial_bitwidth > kMaxBitwidth) {
    throw std::domain_error("config: initial_bitwidth outside [2, 32]");
  }
  if (cfg.activation_bits != 0 &&
      (cfg.activation_bits < kMinBitwidth || cfg.activation_bits > kMaxBitwidth)) {
    throw std::domain_error("config: activation_bits must be 0 or in [2, 32]");
  }
  if (!cfg.policy.valid()) throw std::domain_error("config: invalid policy block");
  std::set<std::string> names;
  for (const auto& s : cfg.model) {
    if (s.name.empty() || !names.insert(s.name).second) {
      throw std::domain_error("config: duplicate layer name '" + s.name + "'");
    }
  }
}

Dataset make_dataset(const TrainConfig& cfg) {
  if (cfg.dataset_kind == DatasetKind::Blobs) return generate_synthetic(cfg.blobs);
  return load_idx(cfg.idx_images, cfg.idx_labels, cfg.seed);
}

FloatParams initial_float_params(const std::vector<LayerSpec>& specs, uint64_t seed) {
  std::mt19937_64 rng(seed ^ kInitStreamSalt);
  FloatParams fp;
  fp.layers.resize(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    if (!s.has_params()) continue;
    double fan_in = static_cast<double>(s.fan_in());
    double w_limit = std::sqrt(6.0 / fan_in);
    double b_limit = 1.0 / std::sqrt(fan_in);
    Tensor w(s.weight_shape());
    for (int64_t j = 0; j < w.numel(); ++j) w[j] = uniform_sym(rng, w_limit);
    Tensor b(s.bias_shape());
    for (int64_t j = 0; j < b.numel(); ++j) b[j] = uniform_sym(rng, b_limit);
    fp.layers[i].weights = std::move(w);
    fp.layers[i].bias = std::move(b);
  }
  return fp;
}

Model build_model(const std::vector<LayerSpec>& specs, const FloatParams& init,
                  int bitwidth, RunCounters* counters) {
  Model model;
  Rounding nearest = Rounding::nearest();
  for (size_t i = 0; i < specs.size(); ++i) {
    Layer l;
    l.spec = specs[i];
    if (l.spec.has_params()) {
      QuantParams wp = compute_params(init.layers[i].weights, bitwidth);
      QuantParams bp = compute_params(init.layers[i].bias, bitwidth);
      if (counters) {
        counters->zero_range_events += (wp.degenerate_range ? 1 : 0);
        counters->zero_range_events += (bp.degenerate_range ? 1 : 0);
      }
      l.weights = quantize(init.layers[i].weights, wp, nearest);
      l.bias = quantize(init.layers[i].bias, bp, nearest);
    }
    model.layers.push_back(std::move(l));
  }
  return model;
}

double accuracy_percent(const Model& model, const Tensor& x, std::span<const int> y,
                        int activation_bits) {
  int64_t n = x.dim(0);
  if (n == 0) return 0.0;
  std::vector<int64_t> sample_shape(x.shape().begin() + 1, x.shape().end());
  int64_t sample_numel = 1;
  for (int64_t d : sample_shape) sample_numel *= d;
  int64_t correct = 0;
  constexpr int64_t kChunk = 512;
  for (int64_t begin = 0; begin < n; begin += kChunk) {
    int64_t end = std::min(n, begin + kChunk);
    std::vector<int64_t> shape = {end - begin};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor chunk(shape);
    for (int64_t r = begin; r < end; ++r) {
      for (int64_t j = 0; j < sample_numel; ++j) {
        chunk[(r - begin) * sample_numel + j] = x[r * sample_numel + j];
      }
    }
    auto [logits, cache] = forward(model, chunk, activation_bits);
    int64_t classes = logits.dim(1);
    for (int64_t r = 0; r < end - begin; ++r) {
      int64_t best = 0;
      for (int64_t c = 1; c < classes; ++c) {
        if (logits[r * classes + c] > logits[r * classes + best]) best = c;
      }
      if (best == y[static_cast<size_t>(begin + r)]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

RunReport run(const TrainConfig& cfg, const std::string& artifact_dir) {
  validate_config(cfg);
  auto t0 = std::chrono::steady_clock::now();

  Dataset ds = make_dataset(cfg);
  if (cfg.batch_size > ds.train_size()) {
    throw std::domain_error("config: batch_size exceeds the training split");
  }
  std::vector<int64_t> batch_shape = {cfg.batch_size};
  batch_shape.insert(batch_shape.end(), ds.sample_shape.begin(), ds.sample_shape.end());
  validate_model(cfg.model, batch_shape);

  RunCounters counters;
  FloatParams init = initial_float_params(cfg.model, cfg.seed);
  Model model = build_model(cfg.model, init, cfg.initial_bitwidth, &counters);

  int64_t n_train = ds.train_size();
  int64_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  StepOptions opt;
  opt.lr = cfg.lr;
  opt.policy = cfg.policy;
  opt.interval = cfg.policy.interval > 0
                     ? cfg.policy.interval
                     : std::max<int64_t>(1, (steps_per_epoch + 9) / 10);
  opt.activation_bits = cfg.activation_bits;
  opt.update_before_adjust = cfg.update_before_adjust;

  Rounding update_rounding = cfg.rounding == RoundingKind::Stochastic
                                 ? Rounding::stochastic(cfg.seed ^ kRoundStreamSalt)
                             : cfg.rounding == RoundingKind::Floor ? Rounding::floor()
                                                                   : Rounding::nearest();
  std::mt19937_64 order_rng(cfg.seed ^ kOrderStreamSalt);

  EnergyLedger ledger;
  BitwidthHistory history;
  std::vector<int64_t> order(static_cast<size_t>(n_train));
  for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;

  int64_t step = 0;
  double last_epoch_loss = 0.0;
  try {
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      detail::shuffle_indices(order, order_rng);
      double epoch_loss = 0.0;
      int64_t epoch_batches = 0;
      for (int64_t begin = 0; begin < n_train; begin += cfg.batch_size) {
        int64_t end = std::min(n_train, begin + cfg.batch_size);
        std::span<const int64_t> idx(order.data() + begin,
                                     static_cast<size_t>(end - begin));
        BatchView b = gather_batch(ds.train_x, ds.train_y, idx, ds.sample_shape);
        epoch_loss += train_step(model, b.x, b.y, step, opt, update_rounding, history,
                                 &ledger, &counters);
        ++epoch_batches;
        ++step;
      }
      if (epoch == cfg.epochs - 1 && epoch_batches > 0) {
        last_epoch_loss = epoch_loss / static_cast<double>(epoch_batches);
      }
    }
  } catch (...) {
    // flush the partial history before propagating
    if (!artifact_dir.empty()) {
      try {
        std::filesystem::path dir(artifact_dir);
        std::filesystem::create_directories(dir);
        write_text_file(dir / "bitwidth_history.csv", history_to_csv(history));
      } catch (...) {
      }
    }
    throw;
  }

  RunReport r;
  r.config = cfg;
  r.train_accuracy = accuracy_percent(model, ds.train_x, ds.train_y, cfg.activation_bits);
  r.test_accuracy = accuracy_percent(model, ds.test_x, ds.test_y, cfg.activation_bits);
  r.final_loss = last_epoch_loss;
  for (const auto& l : model.layers) {
    if (!l.spec.has_params()) continue;
    r.per_layer_bitwidth.emplace_back(l.spec.name + ".weight", l.weights.params().bitwidth);
    r.per_layer_bitwidth.emplace_back(l.spec.name + ".bias", l.bias.params().bitwidth);
  }
  r.memory = param_memory(model);
  r.weighted_avg_bitwidth = r.memory.weighted_avg_bitwidth;
  r.energy = std::move(ledger);
  r.history = std::move(history);
  r.events = counters;
  r.seed = cfg.seed;
  r.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!artifact_dir.empty()) write_run_artifacts(r, artifact_dir);
  return r;
}

std::string report_to_json(const RunReport& report) {
  ordered_json j;
  j["config"] = config_to_ordered_json(report.config);
  j["final_accuracy"] = {{"train", report.train_accuracy}, {"test", report.test_accuracy}};
  ordered_json bits;
  for (const auto& [name, k] : report.per_layer_bitwidth) bits[name] = k;
  j["per_layer_bitwidth"] = bits;
  j["weighted_avg_bitwidth"] = report.weighted_avg_bitwidth;
  ordered_json energy;
  energy["gemm_fp32_mac_equiv"] = report.energy.gemm_units;
  energy["forward_only_gemm"] = report.energy.forward_gemm_units;
  energy["movement_fp32_param_equiv"] = report.energy.movement_units;
  energy["total_gemm_macs"] = report.energy.total_gemm_macs;
  energy["gemm_normalized_vs_fp32"] = report.gemm_vs_fp32();
  energy["backward_costing"] = "dx: act_bits x weight_bits, dw: act_bits x 32";
  ordered_json per_layer_gemm;
  for (const auto& [name, units] : report.energy.per_layer_gemm) per_layer_gemm[name] = units;
  energy["per_layer_gemm"] = per_layer_gemm;
  ordered_json per_layer_movement;
  for (const auto& [name, units] : report.energy.per_layer_movement) {
    per_layer_movement[name] = units;
  }
  energy["per_layer_movement"] = per_layer_movement;
  j["energy"] = energy;
  j["memory"] = {{"total_bits", report.memory.total_param_bits},
                 {"weighted_avg_bitwidth", report.memory.weighted_avg_bitwidth},
                 {"normalized_vs_fp32", report.memory.normalized_vs_fp32}};
  j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

std::string history_to_csv(const BitwidthHistory& history) {
  std::string out = "step,layer,bitwidth,gavg\n";
  char buf[160];
  for (const auto& rec : history.records) {
    std::snprintf(buf, sizeof buf, "%lld,%s,%d,%.17g\n",
                  static_cast<long long>(rec.step), rec.layer.c_str(), rec.bitwidth,
                  rec.gavg);
    out += buf;
  }
  return out;
}

void write_run_artifacts(const RunReport& report, const std::string& out_dir) {
  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.json", report_to_json(report));
  write_text_file(dir / "bitwidth_history.csv", history_to_csv(report.history));
}

double gradcheck_max_rel_error(const TrainConfig& cfg) {
  Dataset ds = make_dataset(cfg);
  int64_t n = std::min<int64_t>(8, ds.train_size());
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  BatchView b = gather_batch(ds.train_x, ds.train_y, idx, ds.sample_shape);

  FloatParams init = initial_float_params(cfg.model, cfg.seed);
  Model model = build_model(cfg.model, init, cfg.initial_bitwidth, nullptr);
  FloatParams params = dequantize_params(model);
  std::vector<LayerSpec> specs = cfg.model;

  auto loss_at = [&](const FloatParams& p) {
    auto [logits, cache] = forward_eval(specs, p, b.x, 0);
    return cross_entropy(logits, b.y);
  };
  auto [logits, cache] = forward_eval(specs, params, b.x, 0);
  Gradients analytic = backward_eval(specs, params, cache, b.y);

  const double h = 1e-4;
  double worst = 0.0;
  int64_t total = 0;
  for (size_t li = 0; li < specs.size(); ++li) {
    if (!specs[li].has_params()) continue;
    total += specs[li].param_count();
  }
  // Probe a deterministic subset when the model is large.
  int64_t stride_target = std::max<int64_t>(1, total / 200);
  for (size_t li = 0; li < specs.size(); ++li) {
    if (!specs[li].has_params()) continue;
    for (int which = 0; which < 2; ++which) {
      Tensor& t = which == 0 ? params.layers[li].weights : params.layers[li].bias;
      const Tensor& g = which == 0 ? analytic.layers[li].weights : analytic.layers[li].bias;
      for (int64_t j = 0; j < t.numel(); j += stride_target) {
        double saved = t[j];
        t[j] = saved + h;
        double up = loss_at(params);
        t[j] = saved - h;
        double down = loss_at(params);
        t[j] = saved;
        double fd = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(fd), std::abs(g[j]), 1e-8});
        worst = std::max(worst, std::abs(fd - g[j]) / denom);
      }
    }
  }
  return worst;
}

std::string summarize_run_dir(const std::string& run_dir) {
  std::filesystem::path path = std::filesystem::path(run_dir) / "report.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ordered_json j;
  try {
    j = ordered_json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("report.json: " + std::string(e.what()), static_cast<int64_t>(e.byte));
  }
  try {
    std::ostringstream out;
    out << "run summary: " << run_dir << "\n";
    out << "  test accuracy      : " << j.at("final_accuracy").at("test").get<double>()
        << " %\n";
    out << "  train accuracy     : " << j.at("final_accuracy").at("train").get<double>()
        << " %\n";
    out << "  avg bitwidth       : " << j.at("weighted_avg_bitwidth").get<double>()
        << " bits (weighted)\n";
    out << "  param memory       : "
        << j.at("memory").at("normalized_vs_fp32").get<double>() << " x fp32\n";
    out << "  GEMM energy        : "
        << j.at("energy").at("gemm_fp32_mac_equiv").get<double>()
        << " fp32-MAC equiv (" << j.at("energy").at("gemm_normalized_vs_fp32").get<double>()
        << " x fp32)\n";
    out << "  forward-only GEMM  : " << j.at("energy").at("forward_only_gemm").get<double>()
        << " fp32-MAC equiv\n";
    out << "  movement energy    : "
        << j.at("energy").at("movement_fp32_param_equiv").get<double>()
        << " fp32-copy equiv\n";
    out << "  per-layer bitwidth :\n";
    for (auto it = j.at("per_layer_bitwidth").begin();
         it != j.at("per_layer_bitwidth").end(); ++it) {
      out << "    " << it.key() << " = " << it.value().get<int>() << "\n";
    }
    return out.str();
  } catch (const nlohmann::json::exception& e) {
    throw std::domain_error("report.json is missing expected fields: " +
                            std::string(e.what()));
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::domain_error("median of empty set");
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

// Runs base with per-task overrides across seeds; med[i][j] = metric j of
// value i's median across seeds.
template <typename Mutate, typename Extract>
std::vector<std::vector<double>> sweep_medians(const TrainConfig& base, int64_t n_values,
                                               int n_seeds, int jobs, Mutate mutate,
                                               Extract extract, int n_metrics) {
  if (n_values < 1) throw std::domain_error("sweep: need at least one value");
  if (n_seeds < 1) throw std::domain_error("sweep: need at least one seed");
  int64_t total = n_values * n_seeds;
  std::vector<std::vector<double>> metrics(static_cast<size_t>(total));
  parallel_for(jobs, total, [&](int64_t task) {
    int64_t vi = task / n_seeds;
    int64_t si = task % n_seeds;
    TrainConfig cfg = base;
    cfg.seed = base.seed + static_cast<uint64_t>(si);
    mutate(cfg, vi);
    RunReport r = run(cfg);
    metrics[static_cast<size_t>(task)] = extract(r);
  });
  std::vector<std::vector<double>> out(static_cast<size_t>(n_values),
                                       std::vector<double>(static_cast<size_t>(n_metrics)));
  for (int64_t vi = 0; vi < n_values; ++vi) {
    for (int m = 0; m < n_metrics; ++m) {
      std::vector<double> column;
      column.reserve(static_cast<size_t>(n_seeds));
      for (int64_t si = 0; si < n_seeds; ++si) {
        column.push_back(metrics[static_cast<size_t>(vi * n_seeds + si)][static_cast<size_t>(m)]);
      }
      out[static_cast<size_t>(vi)][static_cast<size_t>(m)] = median(std::move(column));
    }
  }
  return out;
}

}  // namespace

std::vector<TminRow> sweep_tmin(const TrainConfig& base, std::span<const double> values,
                                int n_seeds, int jobs) {
  auto med = sweep_medians(
      base, static_cast<int64_t>(values.size()), n_seeds, jobs,
      [&](TrainConfig& cfg, int64_t vi) { cfg.policy.t_min = values[static_cast<size_t>(vi)]; },
      [](const RunReport& r) {
        return std::vector<double>{r.test_accuracy, r.gemm_vs_fp32(),
                                   r.memory.normalized_vs_fp32};
      },
      3);
  std::vector<TminRow> rows;
  for (size_t i = 0; i < values.size(); ++i) {
    rows.push_back({values[i], med[i][0], med[i][1], med[i][2]});
  }
  return rows;
}

std::string tmin_sweep_csv(const std::vector<TminRow>& rows) {
  std::string out = "t_min,accuracy,energy,memory\n";
  for (const auto& r : rows) {
    out += format_g17(r.t_min) + "," + format_g17(r.accuracy) + "," +
           format_g17(r.energy) + "," + format_g17(r.memory) + "\n";
  }
  return out;
}

InitBitwidthSweep sweep_init_bitwidth(const TrainConfig& base, std::span<const int> values,
                                      int n_seeds, int jobs) {
  for (int k : values) {
    if (k < kMinBitwidth || k > kMaxBitwidth) {
      throw std::domain_error("sweep-init: bitwidth outside [2, 32]");
    }
  }
  auto med = sweep_medians(
      base, static_cast<int64_t>(values.size()), n_seeds, jobs,
      [&](TrainConfig& cfg, int64_t vi) {
        cfg.initial_bitwidth = values[static_cast<size_t>(vi)];
      },
      [](const RunReport& r) { return std::vector<double>{r.test_accuracy}; }, 1);
  InitBitwidthSweep sweep;
  double lo = med[0][0], hi = med[0][0];
  for (size_t i = 0; i < values.size(); ++i) {
    sweep.rows.emplace_back(values[i], med[i][0]);
    lo = std::min(lo, med[i][0]);
    hi = std::max(hi, med[i][0]);
  }
  sweep.spread = hi - lo;
  return sweep;
}

std::string init_sweep_csv(const InitBitwidthSweep& sweep) {
  std::string out = "k_init,final_accuracy\n";
  for (const auto& [k, acc] : sweep.rows) {
    out += std::to_string(k) + "," + format_g17(acc) + "\n";
  }
  return out;
}

std::vector<BatchRow> sweep_batch_size(const TrainConfig& base,
                                       std::span<const int64_t> values, int n_seeds,
                                       int jobs) {
  for (int64_t b : values) {
    if (b < 1) throw std::domain_error("sweep-batch: batch size must be >= 1");
  }
  auto med = sweep_medians(
      base, static_cast<int64_t>(values.size()), n_seeds, jobs,
      [&](TrainConfig& cfg, int64_t vi) { cfg.batch_size = values[static_cast<size_t>(vi)]; },
      [](const RunReport& r) { return std::vector<double>{r.weighted_avg_bitwidth}; }, 1);
  std::vector<BatchRow> rows;
  for (size_t i = 0; i < values.size(); ++i) {
    rows.push_back({values[i], med[i][0]});
  }
  return rows;
}

std::string batch_sweep_csv(const std::vector<BatchRow>& rows) {
  std::string out = "batch_size,final_avg_bitwidth\n";
  for (const auto& r : rows) {
    out += std::to_string(r.batch_size) + "," + format_g17(r.final_avg_bitwidth) + "\n";
  }
  return out;
}

}  // namespace dynbit
