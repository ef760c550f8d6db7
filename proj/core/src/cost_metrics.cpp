// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/cost_metrics.hpp"

#include <cmath>
#include <string>

#include "tsfo/error.hpp"

namespace tsfo {

void EnergyParams::validate() const {
  if (!(activity > 0.0 && activity <= 1.0)) throw ConfigError("activity factor must be in (0, 1]");
  if (!(capacitance > 0.0)) throw ConfigError("capacitance must be positive");
  if (!(voltage > 0.0)) throw ConfigError("voltage must be positive");
  if (!(frequency > 0.0)) throw ConfigError("frequency must be positive");
}

std::uint64_t attention_complexity(std::uint64_t seq_len, std::uint64_t dim) {
  if (seq_len < 1 || dim < 1) throw InputError("sequence length and width must be >= 1");
  return seq_len * seq_len * dim + seq_len * dim * dim;
}

double energy_model(const EnergyParams& p, double seconds) {
  if (!(seconds >= 0.0)) throw InputError("execution time must be >= 0");
  return p.activity * p.capacitance * p.voltage * p.voltage * p.frequency * seconds;
}

double modeled_energy(const EnergyParams& p, double flops) {
  if (!(flops >= 0.0)) throw InputError("operation count must be >= 0");
  return energy_model(p, flops / p.frequency);
}

double pruned_energy_estimate(double energy, double sparsity) {
  if (!(energy >= 0.0)) throw InputError("energy must be >= 0");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw InputError("sparsity must be in [0, 1)");
  return energy * (1.0 - sparsity);
}

double quantized_energy_estimate(double energy, double factor) {
  if (!(energy >= 0.0)) throw InputError("energy must be >= 0");
  if (!(factor > 0.0)) throw InputError("quantization factor must be positive");
  return energy / factor;
}

RunStats ci95(std::span<const double> samples) {
  if (samples.empty()) throw InputError("confidence interval of an empty sample");
  RunStats s;
  s.n = samples.size();
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n == 1) {
    s.single_sample = true;
    return s;
  }
  double ss = 0.0;
  for (double v : samples) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  s.half_width = 1.96 * s.stddev / std::sqrt(static_cast<double>(s.n));
  return s;
}

double speedup(double baseline, double optimized) {
  if (!(baseline > 0.0) || !(optimized > 0.0)) throw InputError("speed-up needs positive times");
  return baseline / optimized;
}

double energy_saving_pct(double base, double optimized) {
  if (!(base > 0.0)) throw InputError("baseline energy must be positive");
  return 100.0 * (base - optimized) / base;
}

double overall_score(double energy_efficiency, double accuracy_retention) {
  return energy_efficiency * accuracy_retention;
}

EfficiencyScore efficiency_score(double gflops, double joules, double accuracy, double baseline_accuracy) {
  if (!(joules > 0.0)) throw InputError("energy must be positive for an efficiency score");
  if (!(baseline_accuracy > 0.0)) throw InputError("baseline accuracy must be positive");
  EfficiencyScore e;
  e.energy_efficiency = gflops / joules;
  e.accuracy_retention = 100.0 * accuracy / baseline_accuracy;
  e.overall = overall_score(e.energy_efficiency, e.accuracy_retention);
  return e;
}

}  // namespace tsfo
