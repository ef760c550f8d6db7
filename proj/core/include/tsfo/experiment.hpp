// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfo/cost_metrics.hpp"
#include "tsfo/data_io.hpp"
#include "tsfo/model.hpp"
#include "tsfo/training.hpp"

namespace tsfo {

enum class Optimization { kStaticQuant, kDynamicQuant, kL1Prune, kL2Prune, kQat };

/// "static-quant", "dynamic-quant", "l1-prune", "l2-prune", "qat".
std::string optimization_name(Optimization opt);
Optimization parse_optimization(std::string_view name);

/// Ordered steps joined by '+', e.g. "l1-prune+static-quant".
using Pipeline = std::vector<Optimization>;
std::string pipeline_name(const Pipeline& pipeline);
Pipeline parse_pipeline(std::string_view text);

struct DataSource {
  std::string train_path;  // UCR file or dataset cache; empty means synthetic
  std::string test_path;   // optional predefined test file
  SynthSpec synth;
  double train_fraction = 0.7;
  std::optional<std::size_t> resample_length;
};

struct ExperimentConfig {
  DataSource data;
  std::string preset = "tiny";
  std::size_t patch_size = 8;
  std::size_t patch_stride = 8;
  float dropout_rate = 0.1f;

  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  float lr_max = 1e-3f;
  float lr_min = 1e-5f;
  float clip_norm = 1.0f;
  std::size_t finetune_epochs = 5;
  std::size_t qat_epochs = 5;

  std::vector<Pipeline> optimizations;
  double sparsity = 0.4;
  std::size_t runs = 5;
  std::uint64_t seed = 0;
  std::size_t calibration_size = 64;
  std::size_t timing_warmup = 10;
  std::size_t timing_iterations = 100;
  EnergyParams energy;
  bool parallel_training = false;
  std::string out_dir = "tsfo-out";

  /// Throws ConfigError on any invalid field.
  void validate() const;

  /// Strict JSON mapping: unknown keys are configuration errors.
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
};

/// Loads or generates the data, normalizes (and optionally resamples) every
/// series, then splits by subject when ids exist, otherwise by the
/// predefined train/test files. A single file with neither is split per
/// instance.
DatasetSplit load_experiment_data(const ExperimentConfig& config);

/// Model geometry for the data: the preset's widths with seq_len,
/// input_channels and num_classes taken from the dataset.
ModelConfig experiment_model_config(const ExperimentConfig& config, const TimeSeriesDataset& train);

TrainConfig experiment_train_config(const ExperimentConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

/// Single-instance latencies in milliseconds: `warmup` untimed calls, then
/// `iterations` timed calls cycling through `inputs`.
std::vector<double> time_inference(const std::function<void(const Tensor&)>& infer,
                                   std::span<const Tensor> inputs, std::size_t warmup,
                                   std::size_t iterations);

double median(std::vector<double> values);

/// Worker threads for parallel phases: TSFO_NUM_THREADS when set (>= 1),
/// otherwise the hardware concurrency.
std::size_t worker_threads();

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Raw per-run measurements of one configuration.
struct ConfigurationResult {
  std::string name;
  Pipeline steps;
  std::vector<double> accuracy;      // fraction in [0, 1], per run
  std::vector<double> inference_ms;  // median latency, per run
  std::uint64_t params = 0;            // stored parameters
  std::uint64_t nonzero_params = 0;
  std::uint64_t memory_bytes = 0;      // dense weight payload
  std::uint64_t scale_table_bytes = 0;  // quantized models only
  std::uint64_t flops = 0;              // effective FLOPs per inference
  bool quantized = false;
  double removed_fraction = 0.0;  // parameters removed or zeroed vs baseline

  friend bool operator==(const ConfigurationResult&, const ConfigurationResult&) = default;
};

/// Derived, report-ready metrics.
struct MetricsRow {
  std::string name;
  RunStats accuracy_pct;
  double accuracy_drop_pts = 0.0;
  RunStats inference_ms;  // measured
  double memory_mb = 0.0;
  double nonzero_memory_mb = 0.0;
  double flops_g = 0.0;
  double modeled_energy_j = 0.0;    // energy model at one operation per cycle, / Q when quantized
  double estimated_energy_j = 0.0;  // baseline modeled energy * (1 - removed) / Q
  double measured_energy_j = 0.0;   // energy model at the measured mean latency
  double speedup = 0.0;             // measured
  double modeled_energy_saving_pct = 0.0;
  double measured_energy_saving_pct = 0.0;
  EfficiencyScore modeled_efficiency;
  EfficiencyScore measured_efficiency;
};

struct DatasetSummary {
  std::string name;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t num_classes = 0;

  friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

struct ExperimentReport {
  ExperimentConfig config;
  DatasetSummary dataset;
  ModelConfig model;
  std::vector<ConfigurationResult> configurations;  // baseline first
  std::vector<TrainHistory> histories;              // baseline training, per run

  std::vector<MetricsRow> metrics() const;

  /// Wall-time-derived fields live under "measured" keys so that
  /// deterministic comparisons can drop them.
  std::string to_json() const;
  static ExperimentReport from_json(const std::string& text);
};

MetricsRow derive_metrics(const ConfigurationResult& result, const ConfigurationResult& baseline,
                          const EnergyParams& energy);

/// Progress lines go to `log` when set.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::function<void(const std::string&)>& log = {});

}  // namespace tsfo
