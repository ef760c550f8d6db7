// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "config_json.hpp"
#include "json.hpp"
#include "tsfo/error.hpp"
#include "tsfo/pruning.hpp"
#include "tsfo/quantization.hpp"

namespace tsfo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Optimization names
// ---------------------------------------------------------------------------

std::string optimization_name(Optimization opt) {
  switch (opt) {
    case Optimization::kStaticQuant:
      return "static-quant";
    case Optimization::kDynamicQuant:
      return "dynamic-quant";
    case Optimization::kL1Prune:
      return "l1-prune";
    case Optimization::kL2Prune:
      return "l2-prune";
    case Optimization::kQat:
      return "qat";
  }
  return "?";
}

Optimization parse_optimization(std::string_view name) {
  for (Optimization o : {Optimization::kStaticQuant, Optimization::kDynamicQuant, Optimization::kL1Prune,
                         Optimization::kL2Prune, Optimization::kQat}) {
    if (optimization_name(o) == name) return o;
  }
  throw ConfigError("unknown optimization '" + std::string(name) +
                    "' (expected static-quant, dynamic-quant, l1-prune, l2-prune or qat)");
}

std::string pipeline_name(const Pipeline& pipeline) {
  if (pipeline.empty()) return "baseline";
  std::string out;
  for (Optimization o : pipeline) {
    if (!out.empty()) out += '+';
    out += optimization_name(o);
  }
  return out;
}

Pipeline parse_pipeline(std::string_view text) {
  Pipeline p;
  while (true) {
    const std::size_t plus = text.find('+');
    p.push_back(parse_optimization(text.substr(0, plus)));
    if (plus == std::string_view::npos) break;
    text.remove_prefix(plus + 1);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError(why); };
  if (runs < 1) fail("runs must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr_max > 0.0f) || !(lr_min > 0.0f) || lr_min > lr_max) fail("learning rates need 0 < lr_min <= lr_max");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) fail("sparsity must be in [0, 1)");
  if (calibration_size < 1) fail("calibration_size must be >= 1");
  if (timing_iterations < 1) fail("timing iterations must be >= 1");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) fail("train_fraction must be in (0, 1)");
  if (data.train_path.empty() && !data.test_path.empty()) fail("a test file needs a train file");
  energy.validate();
  preset_config(preset);
  std::set<std::string> seen;
  for (const Pipeline& p : optimizations) {
    if (p.empty()) fail("empty optimization pipeline");
    if (!seen.insert(pipeline_name(p)).second) fail("optimization '" + pipeline_name(p) + "' listed twice");
  }
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("experiment config is not valid JSON");
  check_keys(j,
             {"data", "preset", "model", "training", "optimizations", "sparsity", "runs", "seed", "calibration_size",
              "timing", "energy", "parallel_training", "out_dir"},
             "experiment config");
  ExperimentConfig c;
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"train", "test", "synthetic", "train_fraction", "resample"}, "data");
    read(d, "train", c.data.train_path);
    read(d, "test", c.data.test_path);
    read(d, "train_fraction", c.data.train_fraction);
    if (d.contains("resample") && !d["resample"].is_null()) {
      std::size_t n = 0;
      read(d, "resample", n);
      c.data.resample_length = n;
    }
    if (d.contains("synthetic")) {
      const json& s = d["synthetic"];
      check_keys(s, {"classes", "per_class", "length", "noise"}, "data.synthetic");
      read(s, "classes", c.data.synth.num_classes);
      read(s, "per_class", c.data.synth.per_class);
      read(s, "length", c.data.synth.length);
      read(s, "noise", c.data.synth.noise);
    }
  }
  read(j, "preset", c.preset);
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, {"patch_size", "patch_stride", "dropout_rate"}, "model");
    read(m, "patch_size", c.patch_size);
    read(m, "patch_stride", c.patch_stride);
    read(m, "dropout_rate", c.dropout_rate);
  }
  if (j.contains("training")) {
    const json& t = j["training"];
    check_keys(t, {"epochs", "batch_size", "lr_max", "lr_min", "clip_norm", "finetune_epochs", "qat_epochs"},
               "training");
    read(t, "epochs", c.epochs);
    read(t, "batch_size", c.batch_size);
    read(t, "lr_max", c.lr_max);
    read(t, "lr_min", c.lr_min);
    read(t, "clip_norm", c.clip_norm);
    read(t, "finetune_epochs", c.finetune_epochs);
    read(t, "qat_epochs", c.qat_epochs);
  }
  if (j.contains("optimizations")) {
    std::vector<std::string> names;
    read(j, "optimizations", names);
    for (const std::string& n : names) c.optimizations.push_back(parse_pipeline(n));
  }
  read(j, "sparsity", c.sparsity);
  read(j, "runs", c.runs);
  read(j, "seed", c.seed);
  read(j, "calibration_size", c.calibration_size);
  if (j.contains("timing")) {
    check_keys(j["timing"], {"warmup", "iterations"}, "timing");
    read(j["timing"], "warmup", c.timing_warmup);
    read(j["timing"], "iterations", c.timing_iterations);
  }
  if (j.contains("energy")) {
    const json& e = j["energy"];
    check_keys(e, {"activity", "capacitance", "voltage", "frequency"}, "energy");
    read(e, "activity", c.energy.activity);
    read(e, "capacitance", c.energy.capacitance);
    read(e, "voltage", c.energy.voltage);
    read(e, "frequency", c.energy.frequency);
  }
  read(j, "parallel_training", c.parallel_training);
  read(j, "out_dir", c.out_dir);
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["data"] = {{"train", data.train_path},
               {"test", data.test_path},
               {"train_fraction", data.train_fraction},
               {"resample", data.resample_length ? json(*data.resample_length) : json(nullptr)},
               {"synthetic",
                {{"classes", data.synth.num_classes},
                 {"per_class", data.synth.per_class},
                 {"length", data.synth.length},
                 {"noise", data.synth.noise}}}};
  j["preset"] = preset;
  j["model"] = {{"patch_size", patch_size}, {"patch_stride", patch_stride}, {"dropout_rate", dropout_rate}};
  j["training"] = {{"epochs", epochs},   {"batch_size", batch_size},       {"lr_max", lr_max},
                   {"lr_min", lr_min},   {"clip_norm", clip_norm},         {"finetune_epochs", finetune_epochs},
                   {"qat_epochs", qat_epochs}};
  std::vector<std::string> names;
  for (const Pipeline& p : optimizations) names.push_back(pipeline_name(p));
  j["optimizations"] = names;
  j["sparsity"] = sparsity;
  j["runs"] = runs;
  j["seed"] = seed;
  j["calibration_size"] = calibration_size;
  j["timing"] = {{"warmup", timing_warmup}, {"iterations", timing_iterations}};
  j["energy"] = {{"activity", energy.activity},
                 {"capacitance", energy.capacitance},
                 {"voltage", energy.voltage},
                 {"frequency", energy.frequency}};
  j["parallel_training"] = parallel_training;
  j["out_dir"] = out_dir;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Data and model setup
// ---------------------------------------------------------------------------

namespace {

TimeSeriesDataset load_any(const std::string& path) {
  if (path.ends_with(".tsfo")) return load_dataset_cache(path);
  return load_ucr_delimited(path);
}

}  // namespace

DatasetSplit load_experiment_data(const ExperimentConfig& config) {
  const DataSource& src = config.data;
  TimeSeriesDataset raw;
  if (src.train_path.empty()) {
    SynthSpec spec = src.synth;
    spec.seed = config.seed;
    raw = synth_generate(spec);
  } else if (!src.test_path.empty()) {
    raw = load_ucr_split(src.train_path, src.test_path);
  } else {
    raw = load_any(src.train_path);
  }
  TimeSeriesDataset ds = preprocess(raw, src.resample_length);
  if (!ds.split.empty() && !ds.has_subjects()) return predefined_split(ds);
  if (!ds.has_subjects()) {
    // A single file without ids: every series is its own subject.
    for (std::size_t i = 0; i < ds.size(); ++i) ds.subjects.push_back("i" + std::to_string(i));
  }
  return subject_wise_split(ds, src.train_fraction, config.seed);
}

ModelConfig experiment_model_config(const ExperimentConfig& config, const TimeSeriesDataset& train) {
  ModelConfig m = preset_config(config.preset);
  m.patch_size = config.patch_size;
  m.patch_stride = config.patch_stride;
  m.dropout_rate = config.dropout_rate;
  m.seq_len = train.length();
  m.input_channels = train.channels();
  m.num_classes = std::max<std::size_t>(2, train.num_classes());
  m.validate();
  return m;
}

TrainConfig experiment_train_config(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = config.epochs;
  t.batch_size = config.batch_size;
  t.lr_max = config.lr_max;
  t.lr_min = config.lr_min;
  t.clip_norm = config.clip_norm;
  t.seed = seed;
  return t;
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

std::vector<double> time_inference(const std::function<void(const Tensor&)>& infer, std::span<const Tensor> inputs,
                                   std::size_t warmup, std::size_t iterations) {
  if (inputs.empty()) throw InputError("timing needs at least one input");
  for (std::size_t i = 0; i < warmup; ++i) infer(inputs[i % inputs.size()]);
  std::vector<double> ms;
  ms.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    const Tensor& x = inputs[i % inputs.size()];
    const auto start = std::chrono::steady_clock::now();
    infer(x);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  return ms;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<long>(mid));
  return 0.5 * (lo + hi);
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("TSFO_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
    throw ConfigError("TSFO_NUM_THREADS must be a positive integer, got '" + std::string(env) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {

std::vector<double> scaled(const std::vector<double>& v, double factor) {
  std::vector<double> out;
  for (double x : v) out.push_back(x * factor);
  return out;
}

}  // namespace

MetricsRow derive_metrics(const ConfigurationResult& r, const ConfigurationResult& base, const EnergyParams& energy) {
  MetricsRow m;
  m.name = r.name;
  m.accuracy_pct = ci95(scaled(r.accuracy, 100.0));
  const RunStats base_acc = ci95(scaled(base.accuracy, 100.0));
  m.accuracy_drop_pts = base_acc.mean - m.accuracy_pct.mean;
  m.inference_ms = ci95(r.inference_ms);
  const RunStats base_ms = ci95(base.inference_ms);
  m.memory_mb = static_cast<double>(r.memory_bytes) / 1e6;
  const double elem = r.quantized ? 1.0 : 4.0;
  m.nonzero_memory_mb = static_cast<double>(r.nonzero_params) * elem / 1e6;
  m.flops_g = static_cast<double>(r.flops) / 1e9;

  const double q = r.quantized ? kQuantFactor : 1.0;
  m.modeled_energy_j = quantized_energy_estimate(modeled_energy(energy, static_cast<double>(r.flops)), q);
  const double base_modeled = modeled_energy(energy, static_cast<double>(base.flops));
  m.estimated_energy_j = quantized_energy_estimate(pruned_energy_estimate(base_modeled, r.removed_fraction), q);
  m.measured_energy_j = energy_model(energy, m.inference_ms.mean / 1e3);
  const double base_measured = energy_model(energy, base_ms.mean / 1e3);

  m.speedup = speedup(base_ms.mean, m.inference_ms.mean);
  m.modeled_energy_saving_pct = energy_saving_pct(base_modeled, m.modeled_energy_j);
  m.measured_energy_saving_pct = energy_saving_pct(base_measured, m.measured_energy_j);
  m.modeled_efficiency = efficiency_score(m.flops_g, m.modeled_energy_j, m.accuracy_pct.mean, base_acc.mean);
  m.measured_efficiency = efficiency_score(m.flops_g, m.measured_energy_j, m.accuracy_pct.mean, base_acc.mean);
  return m;
}

std::vector<MetricsRow> ExperimentReport::metrics() const {
  if (configurations.empty()) throw InputError("report has no configurations");
  std::vector<MetricsRow> rows;
  for (const ConfigurationResult& r : configurations) {
    rows.push_back(derive_metrics(r, configurations.front(), config.energy));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report JSON
// ---------------------------------------------------------------------------

namespace {

json stats_json(const RunStats& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"stddev", s.stddev}, {"half_width", s.half_width},
          {"single_sample", s.single_sample}};
}

json efficiency_json(const EfficiencyScore& e) {
  return {{"energy_efficiency_gflops_per_j", e.energy_efficiency},
          {"accuracy_retention_pct", e.accuracy_retention},
          {"overall_score", e.overall}};
}

json history_json(const TrainHistory& h) {
  json out = json::array();
  for (const EpochRecord& r : h.epochs) {
    out.push_back({{"epoch", r.epoch},
                   {"lr", r.lr},
                   {"train_loss", r.train_loss},
                   {"train_acc", r.train_acc},
                   {"val_acc", r.val_acc ? json(*r.val_acc) : json(nullptr)}});
  }
  return out;
}

TrainHistory history_from_json(const json& j) {
  TrainHistory h;
  for (const json& r : j) {
    EpochRecord e;
    e.epoch = r.at("epoch").get<std::size_t>();
    e.lr = r.at("lr").get<float>();
    e.train_loss = r.at("train_loss").get<double>();
    e.train_acc = r.at("train_acc").get<double>();
    if (!r.at("val_acc").is_null()) e.val_acc = r.at("val_acc").get<double>();
    h.epochs.push_back(e);
  }
  return h;
}

}  // namespace

std::string ExperimentReport::to_json() const {
  json j;
  j["format"] = "tsfo-report";
  j["version"] = 1;
  j["config"] = json::parse(config.to_json());
  j["dataset"] = {{"name", dataset.name},         {"train_size", dataset.train_size},
                  {"test_size", dataset.test_size}, {"length", dataset.length},
                  {"channels", dataset.channels},   {"num_classes", dataset.num_classes}};
  j["model"] = detail::config_to_json(model);
  const std::vector<MetricsRow> rows = metrics();
  json configs = json::array();
  for (std::size_t i = 0; i < configurations.size(); ++i) {
    const ConfigurationResult& r = configurations[i];
    const MetricsRow& m = rows[i];
    std::vector<std::string> steps;
    for (Optimization o : r.steps) steps.push_back(optimization_name(o));
    json c;
    c["name"] = r.name;
    c["steps"] = steps;
    c["quantized"] = r.quantized;
    c["params"] = r.params;
    c["nonzero_params"] = r.nonzero_params;
    c["memory_bytes"] = r.memory_bytes;
    c["scale_table_bytes"] = r.scale_table_bytes;
    c["flops"] = r.flops;
    c["removed_fraction"] = r.removed_fraction;
    c["accuracy_runs"] = r.accuracy;
    c["modeled"] = {{"accuracy_pct", stats_json(m.accuracy_pct)},
                    {"accuracy_drop_pts", m.accuracy_drop_pts},
                    {"memory_mb", m.memory_mb},
                    {"nonzero_memory_mb", m.nonzero_memory_mb},
                    {"flops_g", m.flops_g},
                    {"energy_j", m.modeled_energy_j},
                    {"estimated_energy_j", m.estimated_energy_j},
                    {"energy_saving_pct", m.modeled_energy_saving_pct},
                    {"efficiency", efficiency_json(m.modeled_efficiency)}};
    c["measured"] = {{"inference_ms_runs", r.inference_ms},
                     {"inference_ms", stats_json(m.inference_ms)},
                     {"energy_j", m.measured_energy_j},
                     {"speedup", m.speedup},
                     {"energy_saving_pct", m.measured_energy_saving_pct},
                     {"efficiency", efficiency_json(m.measured_efficiency)}};
    configs.push_back(std::move(c));
  }
  j["configurations"] = std::move(configs);
  json hist = json::array();
  for (const TrainHistory& h : histories) hist.push_back(history_json(h));
  j["training"] = std::move(hist);
  return j.dump(2);
}

ExperimentReport ExperimentReport::from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "tsfo-report") throw ParseError("not a tsfo report");
  ExperimentReport r;
  try {
    r.config = ExperimentConfig::from_json(j.at("config").dump());
    const json& d = j.at("dataset");
    r.dataset = {d.at("name").get<std::string>(),      d.at("train_size").get<std::size_t>(),
                 d.at("test_size").get<std::size_t>(), d.at("length").get<std::size_t>(),
                 d.at("channels").get<std::size_t>(),  d.at("num_classes").get<std::size_t>()};
    r.model = detail::config_from_json(j.at("model"));
    for (const json& c : j.at("configurations")) {
      ConfigurationResult cr;
      cr.name = c.at("name").get<std::string>();
      for (const auto& s : c.at("steps")) cr.steps.push_back(parse_optimization(s.get<std::string>()));
      cr.quantized = c.at("quantized").get<bool>();
      cr.params = c.at("params").get<std::uint64_t>();
      cr.nonzero_params = c.at("nonzero_params").get<std::uint64_t>();
      cr.memory_bytes = c.at("memory_bytes").get<std::uint64_t>();
      cr.scale_table_bytes = c.at("scale_table_bytes").get<std::uint64_t>();
      cr.flops = c.at("flops").get<std::uint64_t>();
      cr.removed_fraction = c.at("removed_fraction").get<double>();
      cr.accuracy = c.at("accuracy_runs").get<std::vector<double>>();
      cr.inference_ms = c.at("measured").at("inference_ms_runs").get<std::vector<double>>();
      r.configurations.push_back(std::move(cr));
    }
    for (const json& h : j.at("training")) r.histories.push_back(history_from_json(h));
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed report: ") + ex.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  TransformerModel model;
  // Weights before any rounding to the int8 grid; parameter and FLOP counts
  // come from here so that quantization alone is not counted as sparsity.
  TransformerModel counted;
  std::optional<QuantizedModel> quantized;
  double accuracy = 0.0;
};

struct RunOutcome {
  TrainHistory history;
  std::vector<Candidate> candidates;  // baseline first, then one per pipeline
};

std::uint64_t nonzero_count(const TransformerModel& m) {
  std::uint64_t n = 0;
  for (const auto& p : parameters(m)) {
    n += static_cast<std::uint64_t>(
        std::count_if(p.tensor->values().begin(), p.tensor->values().end(), [](float v) { return v != 0.0f; }));
  }
  return n;
}

Candidate apply_pipeline(const TransformerModel& baseline, const Pipeline& pipeline, const ExperimentConfig& cfg,
                         const DatasetSplit& data, std::span<const Tensor> calibration, std::uint64_t seed) {
  Candidate c{baseline, baseline, std::nullopt, 0.0};
  std::optional<ActivationQuant> quant;
  std::uint64_t step_seed = seed;
  for (Optimization opt : pipeline) {
    step_seed = splitmix64(step_seed);
    TrainConfig tc = experiment_train_config(cfg, step_seed);
    switch (opt) {
      case Optimization::kL1Prune: {
        PruneSpec spec{PruneMethod::kL1, Granularity::kWeight, PruneScope::kGlobal, cfg.sparsity, std::nullopt};
        PruneResult pr = prune_unstructured(c.model, spec, cfg.energy);
        c.model = std::move(pr.model);
        if (cfg.finetune_epochs > 0) fine_tune(c.model, mask_from_zeros(c.model), data.train, cfg.finetune_epochs, tc);
        c.counted = c.model;
        break;
      }
      case Optimization::kL2Prune: {
        PruneSpec spec{PruneMethod::kL2, Granularity::kNeuron, PruneScope::kLayerwise, cfg.sparsity, std::nullopt};
        c.model = prune_structured(c.model, spec, cfg.energy).model;
        spec.granularity = Granularity::kHead;
        c.model = prune_structured(c.model, spec, cfg.energy).model;
        if (cfg.finetune_epochs > 0) fine_tune(c.model, mask_from_zeros(c.model), data.train, cfg.finetune_epochs, tc);
        c.counted = c.model;
        break;
      }
      case Optimization::kStaticQuant:
      case Optimization::kDynamicQuant:
        quant = opt == Optimization::kStaticQuant ? ActivationQuant::kStatic : ActivationQuant::kDynamic;
        c.counted = c.model;
        c.model = quantize_weights(c.model).dequantize();
        break;
      case Optimization::kQat: {
        QatActivationHook hook(num_activation_sites(c.model.config));
        enable_qat(tc, hook);
        if (cfg.qat_epochs > 0) fine_tune(c.model, mask_from_zeros(c.model), data.train, cfg.qat_epochs, tc);
        quant = ActivationQuant::kStatic;
        c.counted = c.model;
        c.model = quantize_weights(c.model).dequantize();
        break;
      }
    }
  }
  if (quant) {
    c.quantized = *quant == ActivationQuant::kStatic ? quantize_static(c.model, calibrate(c.model, calibration))
                                                     : quantize_weights(c.model);
    c.accuracy = evaluate_quantized_accuracy(*c.quantized, data.test);
  } else {
    c.accuracy = evaluate_accuracy(c.model, data.test);
  }
  return c;
}

RunOutcome execute_run(const ExperimentConfig& cfg, const ModelConfig& mcfg, const DatasetSplit& data,
                       std::size_t run) {
  const std::uint64_t seed = cfg.seed + run;
  SeededRng init(seed);
  RunOutcome out;
  TransformerModel baseline = build_model(mcfg, init);
  out.history = train(baseline, data.train, experiment_train_config(cfg, seed));

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SeededRng pick = SeededRng(seed).fork(7);
  pick.shuffle(order);
  std::vector<Tensor> calibration;
  for (std::size_t i = 0; i < std::min(cfg.calibration_size, order.size()); ++i) {
    calibration.push_back(data.train.instances[order[i]]);
  }

  out.candidates.push_back({baseline, baseline, std::nullopt, evaluate_accuracy(baseline, data.test)});
  for (const Pipeline& p : cfg.optimizations) {
    out.candidates.push_back(apply_pipeline(baseline, p, cfg, data, calibration, seed));
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const std::function<void(const std::string&)>& log) {
  config.validate();
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  const DatasetSplit data = load_experiment_data(config);
  ExperimentReport report;
  report.config = config;
  report.dataset = {data.train.name,    data.train.size(),      data.test.size(),
                    data.train.length(), data.train.channels(), std::max(data.train.num_classes(), data.test.num_classes())};
  report.model = experiment_model_config(config, data.train);
  say("data: " + std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) + " test, length " +
      std::to_string(data.train.length()));

  // Phase 1: training and compression (optionally parallel across runs).
  std::vector<RunOutcome> outcomes(config.runs);
  const std::size_t threads = config.parallel_training ? std::min(worker_threads(), config.runs) : 1;
  if (threads <= 1) {
    for (std::size_t r = 0; r < config.runs; ++r) {
      say("run " + std::to_string(r + 1) + "/" + std::to_string(config.runs) + ": training");
      outcomes[r] = execute_run(config, report.model, data, r);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < config.runs; r = next++) {
          try {
            outcomes[r] = execute_run(config, report.model, data, r);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  // Phase 2: sequential timing in this process.
  std::vector<Pipeline> pipelines{{}};
  pipelines.insert(pipelines.end(), config.optimizations.begin(), config.optimizations.end());
  report.configurations.resize(pipelines.size());
  for (std::size_t i = 0; i < pipelines.size(); ++i) {
    report.configurations[i].name = pipeline_name(pipelines[i]);
    report.configurations[i].steps = pipelines[i];
  }
  const std::uint64_t base_params = param_count(outcomes.front().candidates.front().model);
  for (std::size_t r = 0; r < config.runs; ++r) {
    say("run " + std::to_string(r + 1) + "/" + std::to_string(config.runs) + ": timing");
    report.histories.push_back(outcomes[r].history);
    for (std::size_t i = 0; i < pipelines.size(); ++i) {
      const Candidate& c = outcomes[r].candidates[i];
      ConfigurationResult& res = report.configurations[i];
      std::vector<double> ms;
      if (c.quantized) {
        const QuantizedInference inference(*c.quantized);
        ms = time_inference([&](const Tensor& x) { inference.forward(x); }, data.test.instances,
                            config.timing_warmup, config.timing_iterations);
      } else {
        ms = time_inference([&](const Tensor& x) { forward(c.model, x); }, data.test.instances,
                            config.timing_warmup, config.timing_iterations);
      }
      res.accuracy.push_back(c.accuracy);
      res.inference_ms.push_back(median(ms));
      if (r == 0) {
        res.quantized = c.quantized.has_value();
        res.params = param_count(c.counted);
        res.nonzero_params = nonzero_count(c.counted);
        res.flops = count_effective_flops(c.counted);
        if (c.quantized) {
          const QuantMemory mem = quantized_memory(*c.quantized);
          res.memory_bytes = mem.payload_bytes;
          res.scale_table_bytes = mem.scale_bytes;
        } else {
          res.memory_bytes = float_memory(c.model);
        }
        res.removed_fraction = 1.0 - static_cast<double>(res.nonzero_params) / static_cast<double>(base_params);
        res.removed_fraction = std::clamp(res.removed_fraction, 0.0, 0.999999);
      }
    }
  }
  return report;
}

}  // namespace tsfo
