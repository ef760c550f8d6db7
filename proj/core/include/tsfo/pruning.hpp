// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsfo/cost_metrics.hpp"
#include "tsfo/mask.hpp"
#include "tsfo/model.hpp"

namespace tsfo {

enum class PruneMethod { kL1, kL2 };
enum class Granularity { kWeight, kNeuron, kHead };
enum class PruneScope { kGlobal, kLayerwise };

struct PruneSpec {
  PruneMethod method = PruneMethod::kL1;
  Granularity granularity = Granularity::kWeight;
  PruneScope scope = PruneScope::kGlobal;
  double sparsity = 0.0;
  std::optional<std::size_t> layer;  // restrict to one encoder layer

  /// Throws SpecError unless 0 <= sparsity < 1.
  void validate() const;
};

/// Scores of one selection pool: a prunable weight tensor (weight
/// granularity) or the units of one layer (neuron / head granularity).
struct ScorePool {
  std::string name;
  std::size_t layer = SIZE_MAX;
  std::vector<double> scores;
};

struct PruneIndex {
  std::size_t pool = 0;
  std::size_t index = 0;

  friend bool operator==(const PruneIndex&, const PruneIndex&) = default;
  friend auto operator<=>(const PruneIndex&, const PruneIndex&) = default;
};

/// |w| for every weight of every prunable tensor, one pool per tensor in
/// canonical parameter order.
std::vector<ScorePool> score_weights_l1(const TransformerModel& model);

/// Unit norms, one pool per encoder layer. A neuron's group is its W1 row and
/// W2 column; a head's group is its rows of Wq, Wk, Wv and columns of Wo.
/// L2 gives the Euclidean norm, L1 the absolute sum. Throws SpecError for
/// weight granularity.
std::vector<ScorePool> score_units(const TransformerModel& model, Granularity granularity,
                                   PruneMethod method = PruneMethod::kL2);
std::vector<ScorePool> score_units_l2(const TransformerModel& model, Granularity granularity);

/// Scores for `spec` (weight granularity uses |w| under either method),
/// filtered to spec.layer when set.
std::vector<ScorePool> score_for_spec(const TransformerModel& model, const PruneSpec& spec);

/// Number of entries pruned from a pool of n at sparsity p: ceil(p * n),
/// with a 1e-9 guard against products like 0.6 * 10 landing above an integer.
std::size_t prune_count(double sparsity, std::size_t n);

/// Lowest-scoring entries. Global scope ranks all pools together, layerwise
/// scope ranks each pool separately; ties go to the lower (pool, index).
/// Result is sorted by (pool, index). Throws SpecError on an empty pool.
std::vector<PruneIndex> select_prune_set(std::span<const ScorePool> pools, const PruneSpec& spec);

/// Zeroes the selected weights. Pools index the prunable tensors in canonical
/// order (as returned by score_weights_l1 without a layer filter). Returns
/// masks for every prunable tensor.
PruneMask apply_unstructured_mask(TransformerModel& model, std::span<const PruneIndex> indices);

/// Masks derived from the model's current zeros in prunable tensors.
PruneMask mask_from_zeros(const TransformerModel& model);

/// Zeros in prunable tensors over their total size.
double sparsity(const TransformerModel& model);

/// Number of prunable scalars.
std::size_t prunable_count(const TransformerModel& model);

/// Physically removes FFN neurons / attention heads of one layer. Throws
/// SpecError if the layer would lose every unit, InputError on a bad index.
TransformerModel remove_neurons(const TransformerModel& model, std::size_t layer,
                                std::span<const std::size_t> neurons);
TransformerModel remove_heads(const TransformerModel& model, std::size_t layer,
                              std::span<const std::size_t> heads);

struct PruneReport {
  double requested_sparsity = 0.0;
  double achieved_sparsity = 0.0;
  std::uint64_t params_before = 0;
  std::uint64_t params_after = 0;
  std::uint64_t params_removed = 0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  double energy_before = 0.0;  // modeled, joules
  double energy_after = 0.0;   // energy_before * (1 - achieved sparsity)
  double seconds = 0.0;        // wall time of the transform

  std::string to_json() const;
};

struct PruneResult {
  TransformerModel model;
  PruneMask mask;  // empty for structured pruning
  PruneReport report;
};

/// Unstructured magnitude pruning (weight granularity).
PruneResult prune_unstructured(const TransformerModel& model, const PruneSpec& spec,
                               const EnergyParams& energy = {});

/// Structured removal of neurons or heads.
PruneResult prune_structured(const TransformerModel& model, const PruneSpec& spec,
                             const EnergyParams& energy = {});

}  // namespace tsfo
