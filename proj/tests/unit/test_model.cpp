// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "reference_model.hpp"
#include "tsfo/cost_metrics.hpp"
#include "tsfo/error.hpp"
#include "tsfo/kernels.hpp"
#include "tsfo/model.hpp"

namespace tsfo {
namespace {

Tensor random_input(const ModelConfig& cfg, SeededRng& rng) {
  Tensor x({cfg.input_channels, cfg.seq_len});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  return x;
}

ModelConfig small_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.model_dim = 8;
  c.ffn_dim = 12;
  c.patch_size = 4;
  c.patch_stride = 4;
  c.seq_len = 24;
  c.input_channels = 2;
  c.num_classes = 3;
  return c;
}

TEST(ModelConfig, PresetsHaveDocumentedDepthAndHeads) {
  const ModelConfig t1 = preset_config("T1"), t2 = preset_config("T2");
  EXPECT_EQ(t1.num_layers, 8u);
  EXPECT_EQ(t1.num_heads, 8u);
  EXPECT_EQ(t2.num_layers, 12u);
  EXPECT_EQ(t2.num_heads, 16u);
  EXPECT_THROW(preset_config("T3"), ConfigError);
}

TEST(ModelConfig, InvalidGeometryIsConfigError) {
  ModelConfig c = small_config();
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.patch_size = 25;
  EXPECT_THROW(c.validate(), ConfigError);
  SeededRng rng(0);
  EXPECT_THROW(build_model(c, rng), ConfigError);
}

TEST(BuildModel, SameSeedBitIdentical) {
  SeededRng a(7), b(7), c(8);
  const TransformerModel m1 = build_model(small_config(), a);
  const TransformerModel m2 = build_model(small_config(), b);
  const TransformerModel m3 = build_model(small_config(), c);
  EXPECT_EQ(m1, m2);
  EXPECT_FALSE(m1 == m3);
}

TEST(BuildModel, UniformInitWithinGlorotBound) {
  SeededRng rng(1);
  const TransformerModel m = build_model(small_config(), rng);
  const double bound = std::sqrt(6.0 / (8 + 12));
  for (float v : m.layers[0].w1.values()) EXPECT_LE(std::abs(v), bound);
}

TEST(PatchEmbed, PatchCounts) {
  ModelConfig c = small_config();
  c.seq_len = 96;
  c.patch_size = 8;
  c.patch_stride = 8;
  EXPECT_EQ(c.num_patches(), 12u);
  c.seq_len = 720;
  c.patch_size = c.patch_stride = 16;
  EXPECT_EQ(c.num_patches(), 45u);
  c.seq_len = c.patch_size = c.patch_stride = 30;
  EXPECT_EQ(c.num_patches(), 1u);
  SeededRng rng(2);
  const TransformerModel m = build_model(c, rng);
  EXPECT_EQ(patch_embed(m, random_input(c, rng)).shape(), (Shape{1, c.model_dim}));
}

TEST(PositionalEncoding, Values) {
  const Tensor pe = positional_encoding(50, 8);
  for (std::size_t i = 0; i < 8; i += 2) {
    EXPECT_EQ(pe.at(0, i), 0.0f);
    EXPECT_EQ(pe.at(0, i + 1), 1.0f);
  }
  EXPECT_NEAR(pe.at(1, 0), 0.84147, 1e-5);
  EXPECT_THROW(positional_encoding(4, 7), ConfigError);
}

TEST(PositionalEncoding, RowsDistinct) {
  const Tensor pe = positional_encoding(2000, 16);
  for (std::size_t p = 0; p < 2000; ++p) {
    for (std::size_t q = p + 1; q < std::min<std::size_t>(2000, p + 50); ++q) {
      bool same = true;
      for (std::size_t i = 0; i < 16 && same; ++i) same = pe.at(p, i) == pe.at(q, i);
      ASSERT_FALSE(same) << p << " vs " << q;
    }
  }
}

// Per-head loops in double, independent of the library kernels.
Tensor attention_oracle(const EncoderLayer& L, const Tensor& x, std::size_t heads, std::size_t hd) {
  const std::size_t P = x.dim(0), d = x.dim(1), inner = heads * hd;
  auto proj = [&](const Tensor& w, const Tensor& b) {
    std::vector<std::vector<double>> out(P, std::vector<double>(inner));
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t o = 0; o < inner; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < d; ++i) s += double(w[o * d + i]) * x.at(p, i);
        out[p][o] = s;
      }
    return out;
  };
  const auto q = proj(L.wq, L.bq), k = proj(L.wk, L.bk), v = proj(L.wv, L.bv);
  std::vector<std::vector<double>> ctx(P, std::vector<double>(inner, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < P; ++i) {
      std::vector<double> s(P);
      double mx = -1e300;
      for (std::size_t j = 0; j < P; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < hd; ++t) dot += q[i][h * hd + t] * k[j][h * hd + t];
        s[j] = dot / std::sqrt(double(hd));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < P; ++j)
        for (std::size_t t = 0; t < hd; ++t) ctx[i][h * hd + t] += s[j] / z * v[j][h * hd + t];
    }
  }
  Tensor out({P, d});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t o = 0; o < d; ++o) {
      double s = L.bo[o];
      for (std::size_t i = 0; i < inner; ++i) s += double(L.wo[o * inner + i]) * ctx[p][i];
      out.at(p, o) = static_cast<float>(s);
    }
  return out;
}

TEST(Attention, MatchesBruteForceReference) {
  ModelConfig c = small_config();  // d=8, H=2
  SeededRng rng(3);
  const TransformerModel m = build_model(c, rng);
  Tensor x({4, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  const Tensor got = attention_forward(m.layers[0], x, c.head_dim());
  const Tensor ref = attention_oracle(m.layers[0], x, 2, 4);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-5);
}

TEST(Attention, SinglePositionIsValueThenOutputProjection) {
  SeededRng rng(4);
  const TransformerModel m = build_model(small_config(), rng);
  Tensor x({1, 8});
  for (std::size_t i = 0; i < 8; ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  const EncoderLayer& L = m.layers[0];
  const Tensor expected = linear(linear(x, L.wv, &L.bv), L.wo, &L.bo);
  const Tensor got = attention_forward(L, x, 4);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got[i], expected[i], 1e-6);
}

TEST(Attention, IdenticalRowsGiveIdenticalOutputs) {
  SeededRng rng(5);
  const TransformerModel m = build_model(small_config(), rng);
  Tensor x({3, 8});
  for (std::size_t i = 0; i < 8; ++i) x.at(0, i) = x.at(1, i) = x.at(2, i) = static_cast<float>(rng.uniform());
  const Tensor y = attention_forward(m.layers[0], x, 4);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(y.at(0, i), y.at(1, i));
    EXPECT_EQ(y.at(0, i), y.at(2, i));
  }
}

TEST(Attention, ProbabilityRowsSumToOne) {
  SeededRng rng(6);
  const ModelConfig c = small_config();
  const TransformerModel m = build_model(c, rng);
  ForwardCache cache;
  ForwardOptions o;
  o.cache = &cache;
  forward(m, random_input(c, rng), o);
  const std::size_t P = c.num_patches();
  for (const LayerCache& lc : cache.layers) {
    ASSERT_EQ(lc.probs.size(), c.num_heads * P * P);
    for (std::size_t r = 0; r < c.num_heads * P; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < P; ++j) s += lc.probs[r * P + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Forward, EvalIsDeterministicAndFinite) {
  SeededRng rng(7);
  const ModelConfig c = small_config();
  const TransformerModel m = build_model(c, rng);
  for (int i = 0; i < 10; ++i) {
    const Tensor x = random_input(c, rng);
    const Tensor a = forward(m, x), b = forward(m, x);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(a.all_finite());
    EXPECT_EQ(a.shape(), (Shape{3}));
  }
}

TEST(Forward, TrainModeAppliesDropout) {
  SeededRng rng(8);
  ModelConfig c = small_config();
  c.dropout_rate = 0.5f;
  const TransformerModel m = build_model(c, rng);
  const Tensor x = random_input(c, rng);
  SeededRng drop(1);
  ForwardOptions o;
  o.mode = Mode::kTrain;
  o.dropout_rng = &drop;
  EXPECT_NE(forward(m, x, o), forward(m, x));
}

TEST(Forward, ZeroClassifierGivesUniformSoftmax) {
  SeededRng rng(9);
  const ModelConfig c = small_config();
  TransformerModel m = build_model(c, rng);
  m.cls_w.fill(0.0f);
  m.cls_b.fill(0.0f);
  const Tensor p = softmax(forward(m, random_input(c, rng)));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_FLOAT_EQ(p[k], 1.0f / 3.0f);
}

TEST(Forward, ShapeMismatchIsShapeError) {
  SeededRng rng(10);
  const TransformerModel m = build_model(small_config(), rng);
  EXPECT_THROW(forward(m, Tensor({2, 23})), ShapeError);
  EXPECT_THROW(forward(m, Tensor({1, 24})), ShapeError);
}

TEST(Forward, TinyModelMatchesStraightLineReference) {
  const ModelConfig c = testing::gradient_check_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeededRng rng(seed);
    const TransformerModel m = build_model(c, rng);
    const Tensor x = random_input(c, rng);
    const Tensor got = forward(m, x);
    const testing::Vec ref = testing::reference_logits(c, testing::RefParams::from(m), x);
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(got[k], ref[k], 1e-5);
  }
}

TEST(Forward, PoolingIgnoresPatchOrderWithoutPositionalEncoding) {
  SeededRng rng(11);
  ModelConfig c = small_config();
  c.input_channels = 1;
  const TransformerModel m = build_model(c, rng);
  const Tensor x = random_input(c, rng);
  // Swap the first two patches (4 samples each).
  Tensor y = x;
  for (std::size_t t = 0; t < 4; ++t) std::swap(y[t], y[t + 4]);
  ForwardOptions o;
  o.positional_encoding = false;
  const Tensor a = forward(m, x, o), b = forward(m, y, o);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-5);
  EXPECT_NE(forward(m, x), forward(m, y));
}

std::uint64_t enumerated_params(const ModelConfig& c) {
  SeededRng rng(0);
  const TransformerModel m = build_model(c, rng);
  std::uint64_t n = 0;
  for (const auto& p : parameters(m)) n += p.tensor->size();
  return n;
}

TEST(CountParams, ClosedFormForHandConfig) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 1;
  c.model_dim = 4;
  c.ffn_dim = 8;
  c.input_channels = 1;
  c.patch_size = 2;
  c.patch_stride = 2;
  c.seq_len = 8;
  c.num_classes = 3;
  // conv 4*1*2+4, attention 4*16+16, ffn 2*4*8+8+4, norms 16, classifier 4*3+3
  EXPECT_EQ(count_params(c), 12u + 80u + 76u + 16u + 15u);
  EXPECT_EQ(count_params(c), enumerated_params(c));
}

TEST(CountParams, MatchesEnumerationForRandomConfigs) {
  SeededRng rng(12);
  for (int i = 0; i < 20; ++i) {
    ModelConfig c;
    c.num_layers = 1 + rng.index(3);
    c.num_heads = 1 + rng.index(4);
    c.model_dim = c.num_heads * 2 * (1 + rng.index(4));
    c.ffn_dim = 1 + rng.index(20);
    c.input_channels = 1 + rng.index(3);
    c.patch_size = 1 + rng.index(6);
    c.patch_stride = 1 + rng.index(6);
    c.seq_len = c.patch_size + rng.index(30);
    c.num_classes = 2 + rng.index(6);
    EXPECT_EQ(count_params(c), enumerated_params(c));
  }
}

TEST(CountParams, LinearInDepth) {
  ModelConfig c = small_config();
  c.num_layers = 1;
  const std::uint64_t one = count_params(c);
  c.num_layers = 2;
  const std::uint64_t block = count_params(c) - one;
  c.num_layers = 4;
  const std::uint64_t four = count_params(c);
  c.num_layers = 8;
  EXPECT_EQ(count_params(c) - four, 4 * block);
  EXPECT_EQ(four - one, 3 * block);
}

TEST(CountFlops, AttentionCoreIsSequenceComplexity) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 4;
  c.model_dim = 64;
  c.patch_size = c.patch_stride = 1;
  c.seq_len = 96;
  EXPECT_EQ(count_flops(c).attention_core, 983040u);
  EXPECT_EQ(count_flops(c).attention_core, attention_complexity(96, 64));
  c.seq_len = 1;
  EXPECT_EQ(count_flops(c).attention_core, 64u + 64u * 64u);
}

TEST(CountFlops, HalvingFfnHalvesFfnTerm) {
  ModelConfig c = small_config();
  const FlopCount full = count_flops(c);
  c.layers = {{2, 6}, {2, 6}};
  const FlopCount half = count_flops(c);
  EXPECT_EQ(half.ffn * 2, full.ffn);
  EXPECT_EQ(half.attention, full.attention);
  EXPECT_EQ(full.total, full.embedding + full.attention + full.ffn + full.classifier);
}

TEST(CountFlops, EffectiveFlopsEqualDenseForDenseModel) {
  SeededRng rng(13);
  const TransformerModel m = build_model(small_config(), rng);
  EXPECT_EQ(count_effective_flops(m), count_flops(m.config).total);
}

TEST(ActivationSites, NamesAndCount) {
  const ModelConfig c = small_config();
  EXPECT_EQ(num_activation_sites(c), 4 * c.num_layers + 2);
  EXPECT_EQ(site_for(LinearOp::kEmbed, 0, c), 0u);
  EXPECT_EQ(site_for(LinearOp::kClassifier, 0, c), 4 * c.num_layers + 1);
  EXPECT_EQ(site_for(LinearOp::kQuery, 1, c), site_for(LinearOp::kKey, 1, c));
}

}  // namespace
}  // namespace tsfo
