// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "reference_model.hpp"
#include "tsfo/cost_metrics.hpp"
#include "tsfo/error.hpp"
#include "tsfo/pruning.hpp"

namespace tsfo {
namespace {

ModelConfig two_layer() {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 4;
  c.model_dim = 16;
  c.ffn_dim = 24;
  c.patch_size = 4;
  c.patch_stride = 4;
  c.seq_len = 32;
  c.num_classes = 3;
  c.dropout_rate = 0.0f;
  return c;
}

Tensor random_input(const ModelConfig& cfg, SeededRng& rng) {
  Tensor x({cfg.input_channels, cfg.seq_len});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  return x;
}

// Full sort of (score, pool, index) triples.
std::vector<PruneIndex> sort_oracle(const std::vector<ScorePool>& pools, const PruneSpec& spec) {
  using Entry = std::tuple<double, std::size_t, std::size_t>;
  std::vector<PruneIndex> out;
  auto take = [&](std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end());
    const std::size_t n = static_cast<std::size_t>(std::ceil(spec.sparsity * entries.size() - 1e-9));
    for (std::size_t i = 0; i < n; ++i) out.push_back({std::get<1>(entries[i]), std::get<2>(entries[i])});
  };
  if (spec.scope == PruneScope::kGlobal) {
    std::vector<Entry> all;
    for (std::size_t p = 0; p < pools.size(); ++p)
      for (std::size_t i = 0; i < pools[p].scores.size(); ++i) all.emplace_back(pools[p].scores[i], p, i);
    take(all);
  } else {
    for (std::size_t p = 0; p < pools.size(); ++p) {
      std::vector<Entry> one;
      for (std::size_t i = 0; i < pools[p].scores.size(); ++i) one.emplace_back(pools[p].scores[i], p, i);
      take(one);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

TEST(PruneSpec, SparsityMustBeBelowOne) {
  PruneSpec s;
  s.sparsity = 1.0;
  EXPECT_THROW(s.validate(), SpecError);
  s.sparsity = -0.1;
  EXPECT_THROW(s.validate(), SpecError);
  s.sparsity = 0.0;
  EXPECT_NO_THROW(s.validate());
}

TEST(PruneCount, CeilingWithGuard) {
  EXPECT_EQ(prune_count(0.6, 10), 6u);
  EXPECT_EQ(prune_count(0.3, 10), 3u);
  EXPECT_EQ(prune_count(0.25, 10), 3u);
  EXPECT_EQ(prune_count(0.0, 10), 0u);
  EXPECT_EQ(prune_count(0.01, 10), 1u);
}

TEST(ScoreWeightsL1, AbsoluteValuesOfPrunableWeights) {
  SeededRng rng(1);
  TransformerModel m = build_model(two_layer(), rng);
  const float vals[5] = {-3.0f, 0.5f, 0.0f, -0.25f, 2.0f};
  for (int i = 0; i < 5; ++i) m.embed_w[i] = vals[i];
  const std::vector<ScorePool> pools = score_weights_l1(m);
  ASSERT_EQ(pools.front().name, "embed.weight");
  const std::vector<double> expected{3.0, 0.5, 0.0, 0.25, 2.0};
  for (int i = 0; i < 5; ++i) EXPECT_EQ(pools.front().scores[i], expected[i]);
  for (const ScorePool& p : pools) {
    EXPECT_EQ(p.name.find("bias"), std::string::npos);
    EXPECT_EQ(p.name.find("ln"), std::string::npos);
    EXPECT_EQ(p.name.find("classifier"), std::string::npos);
  }
  std::size_t total = 0;
  for (const ScorePool& p : pools) total += p.scores.size();
  EXPECT_EQ(total, prunable_count(m));
}

TEST(ScoreWeightsL1, EqualWeightsEqualScores) {
  SeededRng rng(2);
  TransformerModel m = build_model(two_layer(), rng);
  m.layers[0].w1.fill(0.7f);
  for (const ScorePool& p : score_weights_l1(m)) {
    if (p.name != "layers.0.ffn.w1") continue;
    for (double s : p.scores) EXPECT_EQ(s, p.scores.front());
  }
}

TEST(ScoreUnits, NeuronHandComputed) {
  ModelConfig c = testing::gradient_check_config();  // d=4, d_ff=6
  SeededRng rng(3);
  TransformerModel m = build_model(c, rng);
  m.layers[0].w1.fill(0.0f);
  m.layers[0].w2.fill(0.0f);
  // Neuron 0: W1 row [1,2,2,0], W2 column [0,0,0,4] -> L2 5, L1 9.
  m.layers[0].w1[0] = 1;
  m.layers[0].w1[1] = 2;
  m.layers[0].w1[2] = 2;
  m.layers[0].w2[3 * 6 + 0] = 4;
  const auto l2 = score_units_l2(m, Granularity::kNeuron);
  ASSERT_EQ(l2.size(), 1u);
  ASSERT_EQ(l2[0].scores.size(), 6u);
  EXPECT_DOUBLE_EQ(l2[0].scores[0], 5.0);
  for (std::size_t j = 1; j < 6; ++j) EXPECT_EQ(l2[0].scores[j], 0.0);
  EXPECT_DOUBLE_EQ(score_units(m, Granularity::kNeuron, PruneMethod::kL1)[0].scores[0], 9.0);
}

TEST(ScoreUnits, HeadScoreIsHomogeneous) {
  SeededRng rng(4);
  TransformerModel m = build_model(two_layer(), rng);
  const auto before = score_units_l2(m, Granularity::kHead);
  EncoderLayer& L = m.layers[1];
  const std::size_t hd = 4, d = 16, inner = 16;
  for (std::size_t r = 0; r < hd; ++r)
    for (std::size_t i = 0; i < d; ++i) {
      L.wq[r * d + i] *= 2.5f;
      L.wk[r * d + i] *= 2.5f;
      L.wv[r * d + i] *= 2.5f;
    }
  for (std::size_t o = 0; o < d; ++o)
    for (std::size_t r = 0; r < hd; ++r) L.wo[o * inner + r] *= 2.5f;
  const auto after = score_units_l2(m, Granularity::kHead);
  EXPECT_NEAR(after[1].scores[0], 2.5 * before[1].scores[0], 1e-5);
  for (std::size_t h = 1; h < 4; ++h) EXPECT_EQ(after[1].scores[h], before[1].scores[h]);
  EXPECT_EQ(after[0].scores, before[0].scores);
}

TEST(ScoreUnits, WeightGranularityIsSpecError) {
  SeededRng rng(5);
  const TransformerModel m = build_model(two_layer(), rng);
  EXPECT_THROW(score_units(m, Granularity::kWeight), SpecError);
}

TEST(SelectPruneSet, GlobalVersusLayerwiseExample) {
  const std::vector<ScorePool> pools{{"A", 0, {0.1, 0.2}}, {"B", 1, {0.5, 0.6}}};
  PruneSpec spec;
  spec.sparsity = 0.5;
  EXPECT_EQ(select_prune_set(pools, spec), (std::vector<PruneIndex>{{0, 0}, {0, 1}}));
  spec.scope = PruneScope::kLayerwise;
  EXPECT_EQ(select_prune_set(pools, spec), (std::vector<PruneIndex>{{0, 0}, {1, 0}}));
}

TEST(SelectPruneSet, ZeroSparsityIsEmpty) {
  const std::vector<ScorePool> pools{{"A", 0, {0.1, 0.2}}};
  EXPECT_TRUE(select_prune_set(pools, PruneSpec{}).empty());
}

TEST(SelectPruneSet, EmptyPoolIsSpecError) {
  const std::vector<ScorePool> pools{{"A", 0, {}}};
  PruneSpec spec;
  spec.sparsity = 0.5;
  EXPECT_THROW(select_prune_set(pools, spec), SpecError);
  EXPECT_THROW(select_prune_set(std::vector<ScorePool>{}, spec), SpecError);
}

TEST(SelectPruneSet, TiesGoToLowerPoolThenIndex) {
  const std::vector<ScorePool> pools{{"A", 0, {1, 1, 1}}, {"B", 1, {1, 1}}};
  PruneSpec spec;
  spec.sparsity = 0.8;
  EXPECT_EQ(select_prune_set(pools, spec), (std::vector<PruneIndex>{{0, 0}, {0, 1}, {0, 2}, {1, 0}}));
}

TEST(SelectPruneSet, MatchesSortOracleOnRandomPools) {
  SeededRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScorePool> pools(1 + rng.index(5));
    for (std::size_t p = 0; p < pools.size(); ++p) {
      pools[p].layer = p;
      const std::size_t n = 1 + rng.index(100);
      // Coarse values force ties.
      for (std::size_t i = 0; i < n; ++i) pools[p].scores.push_back(double(rng.index(20)) / 4.0);
    }
    for (PruneMethod method : {PruneMethod::kL1, PruneMethod::kL2}) {
      for (PruneScope scope : {PruneScope::kGlobal, PruneScope::kLayerwise}) {
        PruneSpec spec{method, Granularity::kWeight, scope, rng.uniform(0.0, 0.99), std::nullopt};
        ASSERT_EQ(select_prune_set(pools, spec), sort_oracle(pools, spec)) << "trial " << trial;
      }
    }
  }
}

TEST(SelectPruneSet, PositiveRescalingDoesNotChangeSelection) {
  SeededRng rng(7);
  std::vector<ScorePool> pools(3);
  for (auto& p : pools)
    for (int i = 0; i < 40; ++i) p.scores.push_back(rng.uniform());
  PruneSpec spec;
  spec.sparsity = 0.35;
  const auto base = select_prune_set(pools, spec);
  for (double c : {2.0, 0.25, 1024.0}) {
    auto scaled = pools;
    for (auto& p : scaled)
      for (double& s : p.scores) s *= c;
    EXPECT_EQ(select_prune_set(scaled, spec), base);
  }
}

TEST(ApplyUnstructuredMask, ExactCountsAndEquivalence) {
  SeededRng rng(8);
  const ModelConfig c = two_layer();
  TransformerModel m = build_model(c, rng);
  const TransformerModel original = m;
  std::vector<ScorePool> pools = score_weights_l1(m);
  PruneSpec spec{PruneMethod::kL1, Granularity::kWeight, PruneScope::kGlobal, 0.6, std::nullopt};
  const auto picked = select_prune_set(pools, spec);
  const PruneMask mask = apply_unstructured_mask(m, picked);
  EXPECT_EQ(mask.pruned_count(), prune_count(0.6, prunable_count(m)));
  EXPECT_EQ(mask.total_count(), prunable_count(m));
  EXPECT_NEAR(sparsity(m), 0.6, 1.0 / prunable_count(m));
  // Manually zero the same coordinates.
  TransformerModel manual = original;
  auto params = parameters(manual);
  std::vector<ParamRef> prunable;
  for (auto& p : params)
    if (is_prunable(p.role)) prunable.push_back(p);
  for (const PruneIndex& i : picked) (*prunable[i.pool].tensor)[i.index] = 0.0f;
  EXPECT_EQ(manual, m);
  const Tensor x = random_input(c, rng);
  EXPECT_EQ(forward(m, x), forward(manual, x));
  EXPECT_EQ(forward(m, x).shape(), (Shape{3}));
}

TEST(ApplyUnstructuredMask, BadIndexIsInputError) {
  SeededRng rng(9);
  TransformerModel m = build_model(two_layer(), rng);
  EXPECT_THROW(apply_unstructured_mask(m, std::vector<PruneIndex>{{0, 1u << 30}}), InputError);
  EXPECT_THROW(apply_unstructured_mask(m, std::vector<PruneIndex>{{99, 0}}), InputError);
}

TEST(Sparsity, FreshModelIsDenseAndMatchesZeroCount) {
  SeededRng rng(10);
  TransformerModel m = build_model(two_layer(), rng);
  EXPECT_EQ(sparsity(m), 0.0);
  std::size_t zeros = 0, total = 0;
  for (auto& p : parameters(m)) {
    if (!is_prunable(p.role)) continue;
    for (std::size_t i = 0; i < p.tensor->size(); i += 3) (*p.tensor)[i] = 0.0f;
    for (float v : p.tensor->values()) zeros += v == 0.0f;
    total += p.tensor->size();
  }
  EXPECT_DOUBLE_EQ(sparsity(m), double(zeros) / double(total));
}

TEST(PruneUnstructured, AchievedSparsityWithinOneElementPerPool) {
  SeededRng rng(11);
  const TransformerModel m = build_model(two_layer(), rng);
  for (double p : {0.1, 0.33, 0.5, 0.77}) {
    for (PruneScope scope : {PruneScope::kGlobal, PruneScope::kLayerwise}) {
      const PruneResult r =
          prune_unstructured(m, PruneSpec{PruneMethod::kL1, Granularity::kWeight, scope, p, std::nullopt});
      if (scope == PruneScope::kLayerwise) {
        const auto rp = score_weights_l1(r.model);
        for (std::size_t i = 0; i < rp.size(); ++i) {
          const auto zeros = std::count(rp[i].scores.begin(), rp[i].scores.end(), 0.0);
          EXPECT_LE(std::abs(double(zeros) / rp[i].scores.size() - p), 1.0 / rp[i].scores.size());
        }
      }
      if (scope == PruneScope::kGlobal) {
        EXPECT_LE(std::abs(r.report.achieved_sparsity - p), 1.0 / prunable_count(m));
      }
      EXPECT_LE(r.report.flops_after, r.report.flops_before);
      // The energy estimate uses the fraction of all parameters removed.
      const double removed = double(r.report.params_removed) / double(r.report.params_before);
      EXPECT_DOUBLE_EQ(r.report.energy_after, pruned_energy_estimate(r.report.energy_before, removed));
    }
  }
}

TEST(PruneUnstructured, LayerFilterOnlyTouchesThatLayer) {
  SeededRng rng(12);
  const TransformerModel m = build_model(two_layer(), rng);
  const PruneResult r =
      prune_unstructured(m, PruneSpec{PruneMethod::kL1, Granularity::kWeight, PruneScope::kGlobal, 0.5, 1});
  EXPECT_EQ(r.model.layers[0], m.layers[0]);
  EXPECT_EQ(r.model.embed_w, m.embed_w);
  EXPECT_NE(r.model.layers[1], m.layers[1]);
}

TEST(PruneReport, JsonCarriesMeasuredTiming) {
  SeededRng rng(13);
  const TransformerModel m = build_model(two_layer(), rng);
  const PruneResult r =
      prune_unstructured(m, PruneSpec{PruneMethod::kL1, Granularity::kWeight, PruneScope::kGlobal, 0.2, {}});
  const std::string j = r.report.to_json();
  EXPECT_NE(j.find("\"measured\""), std::string::npos);
  EXPECT_NE(j.find("\"achieved_sparsity\""), std::string::npos);
}

TEST(Structured, NeuronRemovalDeltasAreClosedForm) {
  SeededRng rng(14);
  const ModelConfig c = two_layer();
  const TransformerModel m = build_model(c, rng);
  const std::uint64_t d = c.model_dim, P = c.num_patches();
  const std::vector<std::size_t> drop{3, 7, 11};
  const TransformerModel r = remove_neurons(m, 1, drop);
  EXPECT_EQ(count_params(m.config) - count_params(r.config), 3 * (2 * d + 1));
  EXPECT_EQ(param_count(r), count_params(r.config));
  EXPECT_EQ(count_flops(m.config).total - count_flops(r.config).total, 3 * 4 * P * d);
  EXPECT_EQ(r.config.layer(1).ffn_dim, 21u);
  EXPECT_EQ(r.config.layer(0).ffn_dim, 24u);
}

TEST(Structured, HeadRemovalDeltasAreClosedForm) {
  SeededRng rng(15);
  const ModelConfig c = two_layer();
  const TransformerModel m = build_model(c, rng);
  const std::uint64_t d = c.model_dim, P = c.num_patches(), hd = c.head_dim();
  const std::vector<std::size_t> drop{2};
  const TransformerModel r = remove_heads(m, 0, drop);
  EXPECT_EQ(count_params(m.config) - count_params(r.config), 4 * d * hd + 3 * hd);
  EXPECT_EQ(param_count(r), count_params(r.config));
  EXPECT_EQ(count_flops(m.config).total - count_flops(r.config).total, 2 * (4 * P * d * hd + 2 * P * P * hd));
}

TEST(Structured, RemovingOneOfTwoHeadsHalvesProjections) {
  ModelConfig c = two_layer();
  c.num_heads = 2;
  SeededRng rng(16);
  const TransformerModel m = build_model(c, rng);
  const std::vector<std::size_t> drop{1};
  const TransformerModel r = remove_heads(m, 0, drop);
  EXPECT_EQ(r.layers[0].wq.size() * 2, m.layers[0].wq.size());
  EXPECT_EQ(r.layers[0].wo.size() * 2, m.layers[0].wo.size());
  EXPECT_EQ(r.layers[0].bq.size() * 2, m.layers[0].bq.size());
}

TEST(Structured, RemovingNothingIsIdentity) {
  SeededRng rng(17);
  const TransformerModel m = build_model(two_layer(), rng);
  const PruneResult r =
      prune_structured(m, PruneSpec{PruneMethod::kL2, Granularity::kNeuron, PruneScope::kGlobal, 0.0, {}});
  EXPECT_EQ(r.model.layers, m.layers);
  EXPECT_EQ(count_params(r.model.config), count_params(m.config));
}

TEST(Structured, DeadNeuronRemovalLeavesLogitsBitUnchanged) {
  SeededRng rng(18);
  const ModelConfig c = two_layer();
  TransformerModel m = build_model(c, rng);
  for (std::size_t i = 0; i < c.model_dim; ++i) m.layers[0].w1[5 * c.model_dim + i] = 0.0f;
  m.layers[0].b1[5] = 0.0f;
  for (std::size_t o = 0; o < c.model_dim; ++o) m.layers[0].w2[o * c.ffn_dim + 5] = 0.0f;
  const std::vector<std::size_t> drop{5};
  const TransformerModel r = remove_neurons(m, 0, drop);
  for (int i = 0; i < 5; ++i) {
    const Tensor x = random_input(c, rng);
    EXPECT_EQ(forward(m, x), forward(r, x));
  }
}

TEST(Structured, DeadHeadRemovalLeavesLogitsBitUnchanged) {
  SeededRng rng(19);
  const ModelConfig c = two_layer();
  TransformerModel m = build_model(c, rng);
  const std::size_t d = c.model_dim, hd = c.head_dim(), h = 1, inner = d;
  EncoderLayer& L = m.layers[1];
  for (std::size_t r = h * hd; r < (h + 1) * hd; ++r) {
    for (std::size_t i = 0; i < d; ++i) L.wq[r * d + i] = L.wk[r * d + i] = L.wv[r * d + i] = 0.0f;
    L.bq[r] = L.bk[r] = L.bv[r] = 0.0f;
    for (std::size_t o = 0; o < d; ++o) L.wo[o * inner + r] = 0.0f;
  }
  const std::vector<std::size_t> drop{h};
  const TransformerModel r = remove_heads(m, 1, drop);
  for (int i = 0; i < 5; ++i) {
    const Tensor x = random_input(c, rng);
    EXPECT_EQ(forward(m, x), forward(r, x));
  }
}

TEST(Structured, ZeroNormUnitsArePrunedFirst) {
  SeededRng rng(20);
  const ModelConfig c = two_layer();
  TransformerModel m = build_model(c, rng);
  for (std::size_t i = 0; i < c.model_dim; ++i) m.layers[1].w1[9 * c.model_dim + i] = 0.0f;
  for (std::size_t o = 0; o < c.model_dim; ++o) m.layers[1].w2[o * c.ffn_dim + 9] = 0.0f;
  const auto picked = select_prune_set(score_units_l2(m, Granularity::kNeuron),
                                       PruneSpec{PruneMethod::kL2, Granularity::kNeuron, PruneScope::kGlobal, 0.01, {}});
  EXPECT_EQ(picked, (std::vector<PruneIndex>{{1, 9}}));
}

TEST(Structured, RemovingEveryUnitIsSpecError) {
  SeededRng rng(21);
  const TransformerModel m = build_model(two_layer(), rng);
  const std::vector<std::size_t> all{0, 1, 2, 3};
  EXPECT_THROW(remove_heads(m, 0, all), SpecError);
  const std::vector<std::size_t> bad{4};
  EXPECT_THROW(remove_heads(m, 0, bad), InputError);
}

TEST(Structured, PruneStructuredReducesFlopsAndKeepsShapesValid) {
  SeededRng rng(22);
  const ModelConfig c = two_layer();
  const TransformerModel m = build_model(c, rng);
  for (Granularity g : {Granularity::kNeuron, Granularity::kHead}) {
    const PruneResult r = prune_structured(m, PruneSpec{PruneMethod::kL2, g, PruneScope::kLayerwise, 0.5, {}});
    EXPECT_LT(r.report.flops_after, r.report.flops_before);
    EXPECT_EQ(r.report.params_before - r.report.params_after, r.report.params_removed);
    EXPECT_EQ(param_count(r.model), count_params(r.model.config));
    EXPECT_TRUE(forward(r.model, random_input(c, rng)).all_finite());
  }
}

TEST(EnergyEstimate, PrunedEnergy) {
  EXPECT_DOUBLE_EQ(pruned_energy_estimate(50, 0.2), 40.0);
  EXPECT_DOUBLE_EQ(pruned_energy_estimate(50, 0.0), 50.0);
  EXPECT_NEAR(pruned_energy_estimate(100, 0.37), 63.0, 1e-12);
}

}  // namespace
}  // namespace tsfo
