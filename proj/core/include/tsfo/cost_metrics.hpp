// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

namespace tsfo {

/// Dynamic-power energy model parameters.
struct EnergyParams {
  double activity = 0.1;        // alpha, dimensionless
  double capacitance = 1e-9;    // farads
  double voltage = 1.2;         // volts
  double frequency = 2e9;       // hertz

  /// Throws ConfigError unless all fields are positive and activity <= 1.
  void validate() const;
};

/// T^2 * d + T * d^2 operations of self-attention over T positions of width d.
std::uint64_t attention_complexity(std::uint64_t seq_len, std::uint64_t dim);

/// alpha * C * V^2 * f * seconds.
double energy_model(const EnergyParams& params, double seconds);

/// Model-based energy of `flops` operations at one operation per cycle:
/// energy_model(params, flops / f).
double modeled_energy(const EnergyParams& params, double flops);

/// E * (1 - p) for a fraction p of parameters removed.
double pruned_energy_estimate(double energy, double sparsity);

/// E / Q for quantization factor Q (4 for 32-bit to 8-bit).
double quantized_energy_estimate(double energy, double factor);

struct RunStats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;      // sample standard deviation (n - 1)
  double half_width = 0.0;  // 1.96 * s / sqrt(n)
  bool single_sample = false;

  friend bool operator==(const RunStats&, const RunStats&) = default;
};

/// Mean with a 95% normal-approximation interval. Throws InputError when
/// empty; a single sample yields half-width 0 and sets single_sample.
RunStats ci95(std::span<const double> samples);

/// baseline / optimized; both must be positive.
double speedup(double baseline, double optimized);

/// 100 * (base - optimized) / base; base must be positive.
double energy_saving_pct(double base, double optimized);

struct EfficiencyScore {
  double energy_efficiency = 0.0;   // GFLOPs per joule
  double accuracy_retention = 0.0;  // percent of baseline accuracy
  double overall = 0.0;             // energy_efficiency * accuracy_retention
};

EfficiencyScore efficiency_score(double gflops, double joules, double accuracy, double baseline_accuracy);

/// Overall score from already-rounded efficiency and retention figures.
double overall_score(double energy_efficiency, double accuracy_retention);

}  // namespace tsfo
