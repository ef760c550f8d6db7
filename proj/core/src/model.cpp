// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsfo/error.hpp"
#include "tsfo/kernels.hpp"

namespace tsfo {

namespace {
constexpr std::size_t kNoLayer = std::numeric_limits<std::size_t>::max();
}

std::size_t ModelConfig::num_patches() const {
  return conv1d_output_length(seq_len, patch_size, patch_stride);
}

LayerShape ModelConfig::layer(std::size_t index) const {
  if (index >= num_layers) throw ConfigError("layer index out of range");
  if (layers.empty()) return {num_heads, ffn_dim};
  return layers[index];
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError(why); };
  if (num_layers == 0) fail("num_layers must be >= 1");
  if (num_heads == 0 || model_dim == 0) fail("model_dim and num_heads must be >= 1");
  if (model_dim % num_heads != 0) {
    fail("model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (model_dim % 2 != 0) fail("model_dim must be even for the sinusoidal positional encoding");
  if (ffn_dim == 0) fail("ffn_dim must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (input_channels == 0) fail("input_channels must be >= 1");
  if (patch_size == 0 || patch_stride == 0) fail("patch_size and patch_stride must be >= 1");
  if (patch_size > seq_len) {
    fail("patch_size " + std::to_string(patch_size) + " exceeds seq_len " + std::to_string(seq_len));
  }
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) fail("dropout_rate must be in [0, 1)");
  if (!layers.empty()) {
    if (layers.size() != num_layers) fail("per-layer shape list must have num_layers entries");
    for (const LayerShape& l : layers) {
      if (l.heads == 0 || l.heads > num_heads) fail("layer head count must be in [1, num_heads]");
      if (l.ffn_dim == 0) fail("layer ffn_dim must be >= 1");
    }
  }
}

ModelConfig preset_config(std::string_view name) {
  ModelConfig c;
  if (name == "T1") {
    c.num_layers = 8;
    c.num_heads = 8;
    c.model_dim = 64;
    c.ffn_dim = 256;
  } else if (name == "T2") {
    c.num_layers = 12;
    c.num_heads = 16;
    c.model_dim = 96;
    c.ffn_dim = 384;
  } else if (name == "tiny") {
    c.num_layers = 2;
    c.num_heads = 4;
    c.model_dim = 32;
    c.ffn_dim = 64;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "' (expected T1, T2 or tiny)");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

namespace {

template <typename Model, typename Ref>
std::vector<Ref> collect_parameters(Model& m) {
  std::vector<Ref> out;
  out.reserve(4 + 16 * m.layers.size());
  out.push_back({"embed.weight", &m.embed_w, ParamRole::kEmbedWeight, kNoLayer});
  out.push_back({"embed.bias", &m.embed_b, ParamRole::kBias, kNoLayer});
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& L = m.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "attn.wq", &L.wq, ParamRole::kAttentionWeight, l});
    out.push_back({p + "attn.bq", &L.bq, ParamRole::kBias, l});
    out.push_back({p + "attn.wk", &L.wk, ParamRole::kAttentionWeight, l});
    out.push_back({p + "attn.bk", &L.bk, ParamRole::kBias, l});
    out.push_back({p + "attn.wv", &L.wv, ParamRole::kAttentionWeight, l});
    out.push_back({p + "attn.bv", &L.bv, ParamRole::kBias, l});
    out.push_back({p + "attn.wo", &L.wo, ParamRole::kAttentionWeight, l});
    out.push_back({p + "attn.bo", &L.bo, ParamRole::kBias, l});
    out.push_back({p + "ln1.gamma", &L.ln1_gamma, ParamRole::kNorm, l});
    out.push_back({p + "ln1.beta", &L.ln1_beta, ParamRole::kNorm, l});
    out.push_back({p + "ffn.w1", &L.w1, ParamRole::kFfnWeight, l});
    out.push_back({p + "ffn.b1", &L.b1, ParamRole::kBias, l});
    out.push_back({p + "ffn.w2", &L.w2, ParamRole::kFfnWeight, l});
    out.push_back({p + "ffn.b2", &L.b2, ParamRole::kBias, l});
    out.push_back({p + "ln2.gamma", &L.ln2_gamma, ParamRole::kNorm, l});
    out.push_back({p + "ln2.beta", &L.ln2_beta, ParamRole::kNorm, l});
  }
  out.push_back({"classifier.weight", &m.cls_w, ParamRole::kClassifierWeight, kNoLayer});
  out.push_back({"classifier.bias", &m.cls_b, ParamRole::kBias, kNoLayer});
  return out;
}

void init_uniform(Tensor& t, double bound, SeededRng& rng) {
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

std::vector<ParamRef> parameters(TransformerModel& model) {
  return collect_parameters<TransformerModel, ParamRef>(model);
}

std::vector<ConstParamRef> parameters(const TransformerModel& model) {
  return collect_parameters<const TransformerModel, ConstParamRef>(model);
}

bool is_prunable(ParamRole role) {
  return role == ParamRole::kEmbedWeight || role == ParamRole::kAttentionWeight ||
         role == ParamRole::kFfnWeight;
}

std::size_t param_count(const TransformerModel& model) {
  std::size_t n = 0;
  for (const auto& p : parameters(model)) n += p.tensor->size();
  return n;
}

TransformerModel build_model(const ModelConfig& config, SeededRng& rng) {
  config.validate();
  const std::size_t d = config.model_dim, c = config.input_channels, k = config.patch_size;
  const std::size_t hd = config.head_dim();

  TransformerModel m;
  m.config = config;
  m.embed_w = Tensor({d, c, k});
  m.embed_b = Tensor({d});
  m.layers.resize(config.num_layers);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const LayerShape shape = config.layer(l);
    const std::size_t inner = shape.heads * hd;
    EncoderLayer& L = m.layers[l];
    L.wq = Tensor({inner, d});
    L.wk = Tensor({inner, d});
    L.wv = Tensor({inner, d});
    L.bq = Tensor({inner});
    L.bk = Tensor({inner});
    L.bv = Tensor({inner});
    L.wo = Tensor({d, inner});
    L.bo = Tensor({d});
    L.ln1_gamma = Tensor({d}, 1.0f);
    L.ln1_beta = Tensor({d});
    L.ln2_gamma = Tensor({d}, 1.0f);
    L.ln2_beta = Tensor({d});
    L.w1 = Tensor({shape.ffn_dim, d});
    L.b1 = Tensor({shape.ffn_dim});
    L.w2 = Tensor({d, shape.ffn_dim});
    L.b2 = Tensor({d});
  }
  m.cls_w = Tensor({config.num_classes, d});
  m.cls_b = Tensor({config.num_classes});

  for (auto& p : parameters(m)) {
    Tensor& t = *p.tensor;
    switch (p.role) {
      case ParamRole::kEmbedWeight:
        init_uniform(t, glorot_bound(c * k, d * k), rng);
        break;
      case ParamRole::kAttentionWeight:
      case ParamRole::kFfnWeight:
      case ParamRole::kClassifierWeight:
        init_uniform(t, glorot_bound(t.dim(1), t.dim(0)), rng);
        break;
      case ParamRole::kBias:
      case ParamRole::kNorm:
        break;  // zeros, and ones for gamma (set above)
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

Tensor patch_embed(const TransformerModel& model, const Tensor& x) {
  return transpose(conv1d_valid(x, model.embed_w, model.embed_b, model.config.patch_stride));
}

Tensor positional_encoding(std::size_t num_positions, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("positional encoding needs an even dimension");
  Tensor pe({num_positions, dim});
  for (std::size_t p = 0; p < num_positions; ++p) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) / freq;
      pe.at(p, 2 * i) = static_cast<float>(std::sin(angle));
      pe.at(p, 2 * i + 1) = static_cast<float>(std::cos(angle));
    }
  }
  return pe;
}

namespace {

// Scores, softmax and context for all heads. q, k, v are [P x heads*hd].
Tensor attention_context(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t head_dim,
                         Tensor* probs_out) {
  const std::size_t p = q.dim(0), inner = q.dim(1);
  if (head_dim == 0 || inner % head_dim != 0) throw ShapeError("attention width is not a multiple of head_dim");
  const std::size_t heads = inner / head_dim;
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  Tensor ctx({p, inner});
  if (probs_out) *probs_out = Tensor({heads, p, p});
  std::vector<float> row(p);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * head_dim;
    for (std::size_t i = 0; i < p; ++i) {
      const float* qi = q.row(i) + off;
      for (std::size_t j = 0; j < p; ++j) {
        const float* kj = k.row(j) + off;
        float s = 0.0f;
        for (std::size_t c = 0; c < head_dim; ++c) s += qi[c] * kj[c];
        row[j] = s * scale;
      }
      softmax_inplace(row);
      if (probs_out) std::copy(row.begin(), row.end(), probs_out->data().data() + (h * p + i) * p);
      float* ci = ctx.row(i) + off;
      for (std::size_t j = 0; j < p; ++j) {
        const float a = row[j];
        const float* vj = v.row(j) + off;
        for (std::size_t c = 0; c < head_dim; ++c) ci[c] += a * vj[c];
      }
    }
  }
  return ctx;
}

Tensor dropout_mask(const Shape& shape, float rate, SeededRng& rng) {
  Tensor mask(shape);
  const float keep_scale = 1.0f / (1.0f - rate);
  for (float& m : mask.values()) m = rng.bernoulli(rate) ? 0.0f : keep_scale;
  return mask;
}

void multiply_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
}

}  // namespace

Tensor attention_forward(const EncoderLayer& layer, const Tensor& x, std::size_t head_dim) {
  Tensor q = linear(x, layer.wq, &layer.bq);
  Tensor k = linear(x, layer.wk, &layer.bk);
  Tensor v = linear(x, layer.wv, &layer.bv);
  Tensor ctx = attention_context(q, k, v, head_dim, nullptr);
  return linear(ctx, layer.wo, &layer.bo);
}

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

std::size_t num_activation_sites(const ModelConfig& config) { return 4 * config.num_layers + 2; }

std::size_t site_for(LinearOp op, std::size_t layer, const ModelConfig& config) {
  switch (op) {
    case LinearOp::kEmbed:
      return 0;
    case LinearOp::kQuery:
    case LinearOp::kKey:
    case LinearOp::kValue:
      return 1 + 4 * layer;
    case LinearOp::kOutput:
      return 2 + 4 * layer;
    case LinearOp::kFfnIn:
      return 3 + 4 * layer;
    case LinearOp::kFfnOut:
      return 4 + 4 * layer;
    case LinearOp::kClassifier:
      return 4 * config.num_layers + 1;
  }
  return 0;
}

std::string site_name(const ModelConfig& config, std::size_t site) {
  if (site == 0) return "patches";
  if (site == 4 * config.num_layers + 1) return "pooled";
  if (site > 4 * config.num_layers + 1) throw ConfigError("activation site out of range");
  static const char* kNames[] = {"attn_in", "attn_ctx", "ffn_in", "ffn_hidden"};
  const std::size_t l = (site - 1) / 4;
  return "layers." + std::to_string(l) + "." + kNames[(site - 1) % 4];
}

PreparedInput FloatBackend::prepare(std::size_t, const Tensor& input) const {
  return PreparedInput{&input, std::nullopt};
}

Tensor FloatBackend::apply(LinearOp op, std::size_t layer, const PreparedInput& in) const {
  const TransformerModel& m = *model_;
  switch (op) {
    case LinearOp::kEmbed:
      return linear(*in.real, m.embed_w.data(), m.embed_w.dim(0), &m.embed_b);
    case LinearOp::kQuery:
      return linear(*in.real, m.layers[layer].wq, &m.layers[layer].bq);
    case LinearOp::kKey:
      return linear(*in.real, m.layers[layer].wk, &m.layers[layer].bk);
    case LinearOp::kValue:
      return linear(*in.real, m.layers[layer].wv, &m.layers[layer].bv);
    case LinearOp::kOutput:
      return linear(*in.real, m.layers[layer].wo, &m.layers[layer].bo);
    case LinearOp::kFfnIn:
      return linear(*in.real, m.layers[layer].w1, &m.layers[layer].b1);
    case LinearOp::kFfnOut:
      return linear(*in.real, m.layers[layer].w2, &m.layers[layer].b2);
    case LinearOp::kClassifier:
      return linear(*in.real, m.cls_w, &m.cls_b);
  }
  throw ConfigError("unknown linear op");
}

Tensor forward(const TransformerModel& model, const Tensor& x, Mode mode) {
  ForwardOptions opts;
  opts.mode = mode;
  SeededRng rng(0);
  if (mode == Mode::kTrain) opts.dropout_rng = &rng;
  return forward(model, x, opts);
}

Tensor forward(const TransformerModel& model, const Tensor& x, const ForwardOptions& opts) {
  const ModelConfig& cfg = model.config;
  if (x.rank() != 2 || x.dim(0) != cfg.input_channels || x.dim(1) != cfg.seq_len) {
    throw ShapeError("model expects input [" + std::to_string(cfg.input_channels) + "x" +
                     std::to_string(cfg.seq_len) + "], got " + shape_to_string(x.shape()));
  }
  FloatBackend float_backend(model);
  const LinearBackend& backend = opts.backend ? *opts.backend : float_backend;
  const float rate = opts.mode == Mode::kTrain ? cfg.dropout_rate : 0.0f;
  const bool dropout = rate > 0.0f;
  if (dropout && !opts.replay_dropout && !opts.dropout_rng) {
    throw ConfigError("train-mode dropout needs a random generator");
  }
  if (opts.replay_dropout && opts.replay_dropout->layers.size() != cfg.num_layers) {
    throw ConfigError("dropout replay cache does not match the model depth");
  }
  ForwardCache* cache = opts.cache;
  const std::size_t n_sites = num_activation_sites(cfg);
  if (cache) {
    cache->input = x;
    cache->layers.assign(cfg.num_layers, LayerCache{});
    cache->pass_masks.assign(n_sites, {});
  }
  auto visit = [&](std::size_t site, Tensor& act) {
    if (opts.hook) opts.hook->on_activation(site, act, cache ? &cache->pass_masks[site] : nullptr);
  };
  auto make_mask = [&](std::size_t l, bool attn, const Shape& shape) -> Tensor {
    if (opts.replay_dropout) {
      const LayerCache& src = opts.replay_dropout->layers[l];
      return attn ? src.attn_drop : src.ffn_drop;
    }
    return dropout_mask(shape, rate, *opts.dropout_rng);
  };

  Tensor patches = im2col_1d(x, cfg.patch_size, cfg.patch_stride);
  visit(0, patches);
  Tensor h = backend.apply(LinearOp::kEmbed, 0, backend.prepare(0, patches));
  const std::size_t p = h.dim(0), d = cfg.model_dim;
  if (opts.positional_encoding) add_inplace(h, positional_encoding(p, d));
  if (cache) cache->patches = std::move(patches);

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const EncoderLayer& L = model.layers[l];
    LayerCache scratch;
    LayerCache& lc = cache ? cache->layers[l] : scratch;
    const bool keep = cache != nullptr;

    // Attention sub-block.
    Tensor xhat;
    std::vector<float> rstd;
    Tensor a1 = layer_norm(h, L.ln1_gamma, L.ln1_beta, kLayerNormEps, keep ? &xhat : nullptr,
                           keep ? &rstd : nullptr);
    const std::size_t s_in = site_for(LinearOp::kQuery, l, cfg);
    visit(s_in, a1);
    PreparedInput in1 = backend.prepare(s_in, a1);
    Tensor q = backend.apply(LinearOp::kQuery, l, in1);
    Tensor k = backend.apply(LinearOp::kKey, l, in1);
    Tensor v = backend.apply(LinearOp::kValue, l, in1);
    Tensor probs;
    Tensor ctx = attention_context(q, k, v, cfg.head_dim(), keep ? &probs : nullptr);
    const std::size_t s_ctx = site_for(LinearOp::kOutput, l, cfg);
    visit(s_ctx, ctx);
    Tensor attn = backend.apply(LinearOp::kOutput, l, backend.prepare(s_ctx, ctx));
    Tensor attn_mask;
    if (dropout) {
      attn_mask = make_mask(l, true, attn.shape());
      multiply_inplace(attn, attn_mask);
    }
    Tensor h_mid = h;
    add_inplace(h_mid, attn);

    // Feed-forward sub-block.
    Tensor xhat2;
    std::vector<float> rstd2;
    Tensor a2 = layer_norm(h_mid, L.ln2_gamma, L.ln2_beta, kLayerNormEps, keep ? &xhat2 : nullptr,
                           keep ? &rstd2 : nullptr);
    const std::size_t s_ffn = site_for(LinearOp::kFfnIn, l, cfg);
    visit(s_ffn, a2);
    Tensor z1 = backend.apply(LinearOp::kFfnIn, l, backend.prepare(s_ffn, a2));
    Tensor hidden = relu(z1);
    const std::size_t s_hid = site_for(LinearOp::kFfnOut, l, cfg);
    visit(s_hid, hidden);
    Tensor hidden_out = hidden;
    Tensor ffn_mask;
    if (dropout) {
      ffn_mask = make_mask(l, false, hidden.shape());
      multiply_inplace(hidden_out, ffn_mask);
    }
    Tensor f = backend.apply(LinearOp::kFfnOut, l, backend.prepare(s_hid, hidden_out));
    Tensor h_out = h_mid;
    add_inplace(h_out, f);

    if (keep) {
      lc.h_in = std::move(h);
      lc.ln1_xhat = std::move(xhat);
      lc.ln1_rstd = std::move(rstd);
      lc.a1 = std::move(a1);
      lc.q = std::move(q);
      lc.k = std::move(k);
      lc.v = std::move(v);
      lc.probs = std::move(probs);
      lc.ctx = std::move(ctx);
      lc.attn_drop = std::move(attn_mask);
      lc.h_mid = std::move(h_mid);
      lc.ln2_xhat = std::move(xhat2);
      lc.ln2_rstd = std::move(rstd2);
      lc.a2 = std::move(a2);
      lc.z1 = std::move(z1);
      lc.hidden = std::move(hidden);
      lc.ffn_drop = std::move(ffn_mask);
      lc.hidden_out = std::move(hidden_out);
    }
    h = std::move(h_out);
  }

  Tensor pooled({1, d});
  for (std::size_t i = 0; i < p; ++i) {
    const float* r = h.row(i);
    for (std::size_t j = 0; j < d; ++j) pooled[j] += r[j];
  }
  const float inv_p = 1.0f / static_cast<float>(p);
  for (float& v : pooled.values()) v *= inv_p;
  const std::size_t s_pool = n_sites - 1;
  visit(s_pool, pooled);
  Tensor logits = backend.apply(LinearOp::kClassifier, 0, backend.prepare(s_pool, pooled));
  logits.reshape({cfg.num_classes});
  if (cache) {
    cache->h_out = std::move(h);
    cache->pooled = std::move(pooled);
    cache->logits = logits;
  }
  return logits;
}

std::size_t predict(const TransformerModel& model, const Tensor& x) {
  Tensor logits = forward(model, x, Mode::kEval);
  return static_cast<std::size_t>(
      std::max_element(logits.values().begin(), logits.values().end()) - logits.values().begin());
}

// ---------------------------------------------------------------------------
// Accounting
// ---------------------------------------------------------------------------

std::uint64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::uint64_t d = cfg.model_dim, c = cfg.input_channels, k = cfg.patch_size;
  const std::uint64_t hd = cfg.head_dim(), classes = cfg.num_classes;
  std::uint64_t total = d * c * k + d;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerShape s = cfg.layer(l);
    const std::uint64_t inner = s.heads * hd, ff = s.ffn_dim;
    total += 4 * d * inner + 3 * inner + d;  // q, k, v, o with biases
    total += 2 * d * ff + ff + d;            // w1, b1, w2, b2
    total += 4 * d;                          // two (gamma, beta) pairs
  }
  total += d * classes + classes;
  return total;
}

FlopCount count_flops(const ModelConfig& cfg) {
  cfg.validate();
  const std::uint64_t d = cfg.model_dim, c = cfg.input_channels, k = cfg.patch_size;
  const std::uint64_t hd = cfg.head_dim(), p = cfg.num_patches();
  FlopCount f;
  f.embedding = 2 * p * d * c * k;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerShape s = cfg.layer(l);
    const std::uint64_t inner = s.heads * hd;
    // q, k, v, o projections plus QK^T and AV.
    f.attention += 2 * (4 * p * d * inner + 2 * p * p * inner);
    f.attention_core += p * p * inner + p * inner * d;
    f.ffn += 2 * (2 * p * d * s.ffn_dim);
  }
  f.classifier = 2 * d * cfg.num_classes;
  f.total = f.embedding + f.attention + f.ffn + f.classifier;
  return f;
}

std::uint64_t count_effective_flops(const TransformerModel& model) {
  const ModelConfig& cfg = model.config;
  auto nnz = [](const Tensor& t) {
    return static_cast<std::uint64_t>(
        std::count_if(t.values().begin(), t.values().end(), [](float v) { return v != 0.0f; }));
  };
  const std::uint64_t p = cfg.num_patches();
  std::uint64_t total = 2 * p * nnz(model.embed_w);
  for (const EncoderLayer& L : model.layers) {
    const std::uint64_t inner = L.wq.dim(0);
    total += 2 * p * (nnz(L.wq) + nnz(L.wk) + nnz(L.wv) + nnz(L.wo));
    total += 2 * 2 * p * p * inner;
    total += 2 * p * (nnz(L.w1) + nnz(L.w2));
  }
  total += 2 * nnz(model.cls_w);
  return total;
}

}  // namespace tsfo
