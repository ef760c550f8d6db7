// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsfo/rng.hpp"
#include "tsfo/tensor.hpp"

namespace tsfo {

/// Width of one encoder layer. Differs from the global config only after
/// structured pruning.
struct LayerShape {
  std::size_t heads = 0;
  std::size_t ffn_dim = 0;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct ModelConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t model_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t patch_size = 8;
  std::size_t patch_stride = 8;
  std::size_t seq_len = 96;
  std::size_t input_channels = 1;
  std::size_t num_classes = 3;
  float dropout_rate = 0.1f;
  // Per-layer widths; empty means every layer uses num_heads / ffn_dim.
  std::vector<LayerShape> layers;

  /// Per-head width. Fixed by the unpruned geometry, so removing heads keeps
  /// the attention scaling unchanged.
  std::size_t head_dim() const { return model_dim / num_heads; }
  std::size_t num_patches() const;
  LayerShape layer(std::size_t index) const;

  /// Throws ConfigError on any broken invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named architecture presets: "T1" (8 layers, 8 heads, d=64, d_ff=256),
/// "T2" (12 layers, 16 heads, d=96, d_ff=384) and "tiny" (2 layers, 4 heads,
/// d=32, d_ff=64) for desk-scale runs. Data-dependent fields (seq_len,
/// input_channels, num_classes) keep their defaults and are set by callers.
ModelConfig preset_config(std::string_view name);

struct EncoderLayer {
  // Attention projections; w{q,k,v} are [inner x d], wo is [d x inner] where
  // inner = heads * head_dim.
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;
  // Feed-forward: w1 [d_ff x d], w2 [d x d_ff].
  Tensor w1, b1, w2, b2;

  friend bool operator==(const EncoderLayer&, const EncoderLayer&) = default;
};

struct TransformerModel {
  ModelConfig config;
  Tensor embed_w;  // [d x C x k]
  Tensor embed_b;  // [d]
  std::vector<EncoderLayer> layers;
  Tensor cls_w;  // [K x d]
  Tensor cls_b;  // [K]

  friend bool operator==(const TransformerModel&, const TransformerModel&) = default;
};

enum class ParamRole {
  kEmbedWeight,
  kAttentionWeight,
  kFfnWeight,
  kClassifierWeight,
  kBias,
  kNorm,
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  ParamRole role;
  std::size_t layer;  // encoder layer index, or SIZE_MAX outside the stack
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
  ParamRole role;
  std::size_t layer;
};

/// All parameter tensors in a fixed canonical order.
std::vector<ParamRef> parameters(TransformerModel& model);
std::vector<ConstParamRef> parameters(const TransformerModel& model);

/// Weights eligible for magnitude pruning: the patch embedding and all
/// attention / feed-forward matrices. Biases, norms and the classifier are
/// never pruned.
bool is_prunable(ParamRole role);

std::size_t param_count(const TransformerModel& model);

TransformerModel build_model(const ModelConfig& config, SeededRng& rng);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Strided Conv1d patch embedding: x [C x T] -> [P x d].
Tensor patch_embed(const TransformerModel& model, const Tensor& x);

/// Fixed sinusoidal table [P x d]; d must be even.
Tensor positional_encoding(std::size_t num_positions, std::size_t dim);

/// Multi-head scaled dot-product self-attention of one layer (float path).
Tensor attention_forward(const EncoderLayer& layer, const Tensor& x, std::size_t head_dim);

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

enum class Mode { kTrain, kEval };

/// Weight-bearing products of the graph.
enum class LinearOp { kEmbed, kQuery, kKey, kValue, kOutput, kFfnIn, kFfnOut, kClassifier };

/// Activation sites: the inputs of every weight-bearing product. Site 0 holds
/// the flattened input patches, each layer owns four sites (attention input,
/// attention context, FFN input, FFN hidden), and the last site is the pooled
/// classifier input.
std::size_t num_activation_sites(const ModelConfig& config);
std::string site_name(const ModelConfig& config, std::size_t site);
std::size_t site_for(LinearOp op, std::size_t layer, const ModelConfig& config);

/// Input of a weight-bearing product, optionally carrying an integer copy.
struct PreparedInput {
  const Tensor* real = nullptr;
  std::optional<QTensor> quantized;
};

/// Executes the weight-bearing products of a forward pass. The float backend
/// uses the model's own tensors; quantized models provide integer backends.
class LinearBackend {
 public:
  virtual ~LinearBackend() = default;
  virtual PreparedInput prepare(std::size_t site, const Tensor& input) const = 0;
  virtual Tensor apply(LinearOp op, std::size_t layer, const PreparedInput& input) const = 0;
};

class FloatBackend final : public LinearBackend {
 public:
  explicit FloatBackend(const TransformerModel& model) : model_(&model) {}
  PreparedInput prepare(std::size_t site, const Tensor& input) const override;
  Tensor apply(LinearOp op, std::size_t layer, const PreparedInput& input) const override;

 private:
  const TransformerModel* model_;
};

/// Observes (and may rewrite) every activation site. When `pass_mask` is
/// non-null the hook may fill it with one byte per element: 1 where the
/// gradient passes straight through, 0 where it is blocked.
class ActivationHook {
 public:
  virtual ~ActivationHook() = default;
  virtual void on_activation(std::size_t site, Tensor& activation,
                             std::vector<std::uint8_t>* pass_mask) = 0;
};

struct LayerCache {
  Tensor h_in;
  Tensor ln1_xhat;
  std::vector<float> ln1_rstd;
  Tensor a1;
  Tensor q, k, v;
  Tensor probs;  // [heads x P x P]
  Tensor ctx;
  Tensor attn_drop;  // dropout multipliers [P x d]; empty when inactive
  Tensor h_mid;
  Tensor ln2_xhat;
  std::vector<float> ln2_rstd;
  Tensor a2;
  Tensor z1;
  Tensor hidden;      // relu output after the activation hook
  Tensor ffn_drop;    // dropout multipliers [P x d_ff]; empty when inactive
  Tensor hidden_out;  // hidden after dropout, the input of w2
};

/// Intermediates recorded for reverse-mode differentiation.
struct ForwardCache {
  Tensor input;
  Tensor patches;  // [P x C*k]
  std::vector<LayerCache> layers;
  Tensor h_out;   // [P x d]
  Tensor pooled;  // [1 x d]
  Tensor logits;  // [K]
  std::vector<std::vector<std::uint8_t>> pass_masks;  // per site
};

struct ForwardOptions {
  Mode mode = Mode::kEval;
  SeededRng* dropout_rng = nullptr;  // required in train mode with dropout > 0
  const ForwardCache* replay_dropout = nullptr;  // reuse recorded dropout masks
  ActivationHook* hook = nullptr;
  const LinearBackend* backend = nullptr;  // defaults to FloatBackend
  ForwardCache* cache = nullptr;
  bool positional_encoding = true;
};

/// Logits [K] for one instance x [C x T]. Eval mode is deterministic.
Tensor forward(const TransformerModel& model, const Tensor& x, Mode mode = Mode::kEval);
Tensor forward(const TransformerModel& model, const Tensor& x, const ForwardOptions& options);

std::size_t predict(const TransformerModel& model, const Tensor& x);

// ---------------------------------------------------------------------------
// Accounting
// ---------------------------------------------------------------------------

/// Closed-form parameter count of a model with this configuration.
std::uint64_t count_params(const ModelConfig& config);

struct FlopCount {
  std::uint64_t embedding = 0;
  std::uint64_t attention = 0;       // projections + scores + context, all layers
  std::uint64_t attention_core = 0;  // sum over layers of P^2*inner + P*inner*d
  std::uint64_t ffn = 0;
  std::uint64_t classifier = 0;
  std::uint64_t total = 0;
};

/// Per-inference FLOPs with one multiply-accumulate counted as 2 FLOPs.
/// Softmax, normalization, activation, pooling and bias additions are not
/// counted.
FlopCount count_flops(const ModelConfig& config);

/// Like count_flops but the weight-bearing products only count
/// multiply-accumulates against nonzero weights (unstructured sparsity).
std::uint64_t count_effective_flops(const TransformerModel& model);

}  // namespace tsfo
