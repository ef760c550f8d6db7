// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/pruning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"
#include "tsfo/error.hpp"

namespace tsfo {

void PruneSpec::validate() const {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw SpecError("sparsity must be in [0, 1), got " + std::to_string(sparsity));
  }
}

std::vector<ScorePool> score_weights_l1(const TransformerModel& model) {
  std::vector<ScorePool> pools;
  for (const auto& p : parameters(model)) {
    if (!is_prunable(p.role)) continue;
    ScorePool pool{p.name, p.layer, {}};
    pool.scores.reserve(p.tensor->size());
    for (float v : p.tensor->values()) pool.scores.push_back(std::abs(static_cast<double>(v)));
    pools.push_back(std::move(pool));
  }
  return pools;
}

namespace {

struct NormAccumulator {
  PruneMethod method;
  double sum = 0.0;
  void add(float v) {
    const double x = v;
    sum += method == PruneMethod::kL2 ? x * x : std::abs(x);
  }
  double value() const { return method == PruneMethod::kL2 ? std::sqrt(sum) : sum; }
};

std::size_t layer_heads(const EncoderLayer& layer, std::size_t head_dim) { return layer.wq.dim(0) / head_dim; }

}  // namespace

std::vector<ScorePool> score_units(const TransformerModel& model, Granularity granularity, PruneMethod method) {
  if (granularity == Granularity::kWeight) throw SpecError("unit scores need neuron or head granularity");
  std::vector<ScorePool> pools;
  const std::size_t d = model.config.model_dim, hd = model.config.head_dim();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const EncoderLayer& L = model.layers[l];
    ScorePool pool;
    pool.layer = l;
    if (granularity == Granularity::kNeuron) {
      pool.name = "layers." + std::to_string(l) + ".ffn";
      const std::size_t ff = L.w1.dim(0);
      for (std::size_t n = 0; n < ff; ++n) {
        NormAccumulator acc{method};
        for (std::size_t j = 0; j < d; ++j) acc.add(L.w1.at(n, j));
        for (std::size_t j = 0; j < d; ++j) acc.add(L.w2.at(j, n));
        pool.scores.push_back(acc.value());
      }
    } else {
      pool.name = "layers." + std::to_string(l) + ".attn";
      for (std::size_t h = 0; h < layer_heads(L, hd); ++h) {
        NormAccumulator acc{method};
        for (std::size_t r = h * hd; r < (h + 1) * hd; ++r) {
          for (std::size_t j = 0; j < d; ++j) {
            acc.add(L.wq.at(r, j));
            acc.add(L.wk.at(r, j));
            acc.add(L.wv.at(r, j));
            acc.add(L.wo.at(j, r));
          }
        }
        pool.scores.push_back(acc.value());
      }
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

std::vector<ScorePool> score_units_l2(const TransformerModel& model, Granularity granularity) {
  return score_units(model, granularity, PruneMethod::kL2);
}

std::vector<ScorePool> score_for_spec(const TransformerModel& model, const PruneSpec& spec) {
  std::vector<ScorePool> pools = spec.granularity == Granularity::kWeight
                                     ? score_weights_l1(model)
                                     : score_units(model, spec.granularity, spec.method);
  if (spec.layer) {
    if (*spec.layer >= model.layers.size()) throw SpecError("layer filter out of range");
    std::erase_if(pools, [&](const ScorePool& p) { return p.layer != *spec.layer; });
  }
  return pools;
}

std::size_t prune_count(double sparsity, std::size_t n) {
  const double want = std::ceil(sparsity * static_cast<double>(n) - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, want)));
}

std::vector<PruneIndex> select_prune_set(std::span<const ScorePool> pools, const PruneSpec& spec) {
  spec.validate();
  if (pools.empty()) throw SpecError("no pools to prune");
  for (const ScorePool& p : pools) {
    if (p.scores.empty()) throw SpecError("pool '" + p.name + "' is empty");
    for (double s : p.scores) {
      if (!std::isfinite(s)) throw SpecError("pool '" + p.name + "' has a non-finite score");
    }
  }
  struct Entry {
    double score;
    PruneIndex at;
  };
  auto less = [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.at < b.at;
  };
  auto lowest = [&](std::vector<Entry>& entries, std::size_t count, std::vector<PruneIndex>& out) {
    if (count == 0) return;
    std::partial_sort(entries.begin(), entries.begin() + static_cast<long>(count), entries.end(), less);
    for (std::size_t i = 0; i < count; ++i) out.push_back(entries[i].at);
  };

  std::vector<PruneIndex> out;
  if (spec.scope == PruneScope::kGlobal) {
    std::vector<Entry> all;
    for (std::size_t p = 0; p < pools.size(); ++p) {
      for (std::size_t i = 0; i < pools[p].scores.size(); ++i) all.push_back({pools[p].scores[i], {p, i}});
    }
    lowest(all, prune_count(spec.sparsity, all.size()), out);
  } else {
    for (std::size_t p = 0; p < pools.size(); ++p) {
      std::vector<Entry> entries;
      for (std::size_t i = 0; i < pools[p].scores.size(); ++i) entries.push_back({pools[p].scores[i], {p, i}});
      lowest(entries, prune_count(spec.sparsity, entries.size()), out);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PruneMask apply_unstructured_mask(TransformerModel& model, std::span<const PruneIndex> indices) {
  std::vector<ParamRef> prunable;
  for (auto& p : parameters(model)) {
    if (is_prunable(p.role)) prunable.push_back(p);
  }
  PruneMask mask;
  for (const ParamRef& p : prunable) {
    mask.params.push_back({p.name, p.tensor->shape(), std::vector<std::uint8_t>(p.tensor->size(), 1)});
  }
  for (const PruneIndex& idx : indices) {
    if (idx.pool >= prunable.size() || idx.index >= prunable[idx.pool].tensor->size()) {
      throw InputError("prune index (" + std::to_string(idx.pool) + ", " + std::to_string(idx.index) +
                       ") out of range");
    }
    mask.params[idx.pool].keep[idx.index] = 0;
  }
  mask.apply(model);
  return mask;
}

PruneMask mask_from_zeros(const TransformerModel& model) {
  PruneMask mask;
  for (const auto& p : parameters(model)) {
    if (!is_prunable(p.role)) continue;
    ParamMask m{p.name, p.tensor->shape(), {}};
    m.keep.reserve(p.tensor->size());
    for (float v : p.tensor->values()) m.keep.push_back(v != 0.0f ? 1 : 0);
    mask.params.push_back(std::move(m));
  }
  return mask;
}

std::size_t prunable_count(const TransformerModel& model) {
  std::size_t n = 0;
  for (const auto& p : parameters(model)) {
    if (is_prunable(p.role)) n += p.tensor->size();
  }
  return n;
}

double sparsity(const TransformerModel& model) {
  std::size_t zeros = 0, total = 0;
  for (const auto& p : parameters(model)) {
    if (!is_prunable(p.role)) continue;
    total += p.tensor->size();
    zeros += static_cast<std::size_t>(std::count(p.tensor->values().begin(), p.tensor->values().end(), 0.0f));
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Structured removal
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> survivors(std::size_t n, std::span<const std::size_t> removed, std::size_t layer,
                                   const char* unit) {
  std::set<std::size_t> drop;
  for (std::size_t i : removed) {
    if (i >= n) {
      throw InputError(std::string(unit) + " index " + std::to_string(i) + " out of range for layer " +
                       std::to_string(layer));
    }
    drop.insert(i);
  }
  if (drop.size() >= n) {
    throw SpecError("pruning would remove every " + std::string(unit) + " of layer " + std::to_string(layer));
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (!drop.count(i)) keep.push_back(i);
  }
  return keep;
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> rows, std::size_t block = 1) {
  const std::size_t cols = t.rank() == 1 ? 1 : t.dim(1);
  Shape shape = t.shape();
  shape[0] = rows.size() * block;
  Tensor out(shape);
  std::size_t r_out = 0;
  for (std::size_t r : rows) {
    for (std::size_t b = 0; b < block; ++b, ++r_out) {
      std::copy_n(t.data().data() + (r * block + b) * cols, cols, out.data().data() + r_out * cols);
    }
  }
  return out;
}

Tensor take_cols(const Tensor& t, std::span<const std::size_t> cols, std::size_t block = 1) {
  const std::size_t rows = t.dim(0);
  Tensor out({rows, cols.size() * block});
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t c_out = 0;
    for (std::size_t c : cols) {
      for (std::size_t b = 0; b < block; ++b, ++c_out) out.at(r, c_out) = t.at(r, c * block + b);
    }
  }
  return out;
}

void materialize_layers(ModelConfig& cfg) {
  if (cfg.layers.empty()) cfg.layers.assign(cfg.num_layers, LayerShape{cfg.num_heads, cfg.ffn_dim});
}

void check_layer(const TransformerModel& model, std::size_t layer) {
  if (layer >= model.layers.size()) throw InputError("layer " + std::to_string(layer) + " out of range");
}

}  // namespace

TransformerModel remove_neurons(const TransformerModel& model, std::size_t layer,
                                std::span<const std::size_t> neurons) {
  check_layer(model, layer);
  const EncoderLayer& L = model.layers[layer];
  const auto keep = survivors(L.w1.dim(0), neurons, layer, "neuron");
  TransformerModel out = model;
  EncoderLayer& N = out.layers[layer];
  N.w1 = take_rows(L.w1, keep);
  N.b1 = take_rows(L.b1, keep);
  N.w2 = take_cols(L.w2, keep);
  materialize_layers(out.config);
  out.config.layers[layer].ffn_dim = keep.size();
  return out;
}

TransformerModel remove_heads(const TransformerModel& model, std::size_t layer, std::span<const std::size_t> heads) {
  check_layer(model, layer);
  const std::size_t hd = model.config.head_dim();
  const EncoderLayer& L = model.layers[layer];
  const auto keep = survivors(layer_heads(L, hd), heads, layer, "head");
  TransformerModel out = model;
  EncoderLayer& N = out.layers[layer];
  N.wq = take_rows(L.wq, keep, hd);
  N.wk = take_rows(L.wk, keep, hd);
  N.wv = take_rows(L.wv, keep, hd);
  N.bq = take_rows(L.bq, keep, hd);
  N.bk = take_rows(L.bk, keep, hd);
  N.bv = take_rows(L.bv, keep, hd);
  N.wo = take_cols(L.wo, keep, hd);
  materialize_layers(out.config);
  out.config.layers[layer].heads = keep.size();
  return out;
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

std::string PruneReport::to_json() const {
  nlohmann::json j;
  j["requested_sparsity"] = requested_sparsity;
  j["achieved_sparsity"] = achieved_sparsity;
  j["params_before"] = params_before;
  j["params_after"] = params_after;
  j["params_removed"] = params_removed;
  j["flops_before"] = flops_before;
  j["flops_after"] = flops_after;
  j["energy_before_j"] = energy_before;
  j["energy_after_j"] = energy_after;
  j["measured"] = {{"transform_seconds", seconds}};
  return j.dump(2);
}

namespace {

void fill_energy(PruneReport& r, const EnergyParams& energy) {
  r.energy_before = modeled_energy(energy, static_cast<double>(r.flops_before));
  const double removed = r.params_before == 0 ? 0.0
                                              : static_cast<double>(r.params_removed) /
                                                    static_cast<double>(r.params_before);
  r.energy_after = pruned_energy_estimate(r.energy_before, removed);
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

PruneResult prune_unstructured(const TransformerModel& model, const PruneSpec& spec, const EnergyParams& energy) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  if (spec.granularity != Granularity::kWeight) throw SpecError("unstructured pruning needs weight granularity");
  std::vector<ScorePool> all = score_weights_l1(model);
  std::vector<std::size_t> source;
  std::vector<ScorePool> pools;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (spec.layer && all[i].layer != *spec.layer) continue;
    source.push_back(i);
    pools.push_back(std::move(all[i]));
  }
  if (spec.layer && *spec.layer >= model.layers.size()) throw SpecError("layer filter out of range");
  std::vector<PruneIndex> picked = select_prune_set(pools, spec);
  for (PruneIndex& p : picked) p.pool = source[p.pool];

  PruneResult result{model, {}, {}};
  result.mask = apply_unstructured_mask(result.model, picked);
  PruneReport& r = result.report;
  r.requested_sparsity = spec.sparsity;
  std::size_t pool_total = 0;
  for (const ScorePool& p : pools) pool_total += p.scores.size();
  r.achieved_sparsity = static_cast<double>(picked.size()) / static_cast<double>(pool_total);
  r.params_before = param_count(model);
  r.params_removed = picked.size();
  r.params_after = r.params_before - r.params_removed;
  r.flops_before = count_effective_flops(model);
  r.flops_after = count_effective_flops(result.model);
  fill_energy(r, energy);
  r.seconds = elapsed(start);
  return result;
}

PruneResult prune_structured(const TransformerModel& model, const PruneSpec& spec, const EnergyParams& energy) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  if (spec.granularity == Granularity::kWeight) throw SpecError("structured pruning needs neuron or head granularity");
  const std::vector<ScorePool> pools = score_for_spec(model, spec);
  const std::vector<PruneIndex> picked = select_prune_set(pools, spec);

  std::map<std::size_t, std::vector<std::size_t>> by_layer;
  for (const PruneIndex& p : picked) by_layer[pools[p.pool].layer].push_back(p.index);
  std::map<std::size_t, std::size_t> available;
  std::size_t total_units = 0;
  for (const ScorePool& p : pools) {
    available[p.layer] = p.scores.size();
    total_units += p.scores.size();
  }
  for (const auto& [layer, units] : by_layer) {
    if (units.size() >= available[layer]) {
      throw SpecError("sparsity " + std::to_string(spec.sparsity) + " would remove every unit of layer " +
                      std::to_string(layer));
    }
  }

  PruneResult result{model, {}, {}};
  for (const auto& [layer, units] : by_layer) {
    result.model = spec.granularity == Granularity::kNeuron ? remove_neurons(result.model, layer, units)
                                                            : remove_heads(result.model, layer, units);
  }
  PruneReport& r = result.report;
  r.requested_sparsity = spec.sparsity;
  r.achieved_sparsity = static_cast<double>(picked.size()) / static_cast<double>(total_units);
  r.params_before = count_params(model.config);
  r.params_after = count_params(result.model.config);
  r.params_removed = r.params_before - r.params_after;
  r.flops_before = count_effective_flops(model);
  r.flops_after = count_effective_flops(result.model);
  fill_energy(r, energy);
  r.seconds = elapsed(start);
  return result;
}

}  // namespace tsfo
