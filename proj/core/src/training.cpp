// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tsfo/error.hpp"
#include "tsfo/kernels.hpp"

namespace tsfo {

// ---------------------------------------------------------------------------
// Gradient storage
// ---------------------------------------------------------------------------

GradientSet GradientSet::zeros_like(const TransformerModel& model) {
  GradientSet g;
  g.grads = model;
  for (auto& p : parameters(g.grads)) p.tensor->fill(0.0f);
  return g;
}

Tensor& GradientSet::operator[](std::string_view name) {
  for (auto& p : parameters(grads)) {
    if (p.name == name) return *p.tensor;
  }
  throw InputError("no gradient named '" + std::string(name) + "'");
}

const Tensor& GradientSet::operator[](std::string_view name) const {
  for (const auto& p : parameters(grads)) {
    if (p.name == name) return *p.tensor;
  }
  throw InputError("no gradient named '" + std::string(name) + "'");
}

double GradientSet::global_norm() const {
  double sum = 0.0;
  for (const auto& p : parameters(grads)) {
    for (float v : p.tensor->values()) sum += static_cast<double>(v) * v;
  }
  return std::sqrt(sum);
}

void GradientSet::scale(float factor) {
  for (auto& p : parameters(grads)) {
    for (float& v : p.tensor->values()) v *= factor;
  }
}

void GradientSet::add(const GradientSet& other) {
  auto dst = parameters(grads);
  const auto src = parameters(other.grads);
  if (dst.size() != src.size()) throw ShapeError("gradient sets have different layouts");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].tensor->shape() != src[i].tensor->shape()) {
      throw ShapeError("gradient '" + dst[i].name + "' shape mismatch");
    }
    add_inplace(*dst[i].tensor, *src[i].tensor);
  }
}

bool GradientSet::all_finite() const {
  for (const auto& p : parameters(grads)) {
    if (!p.tensor->all_finite()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Loss and reverse pass
// ---------------------------------------------------------------------------

double cross_entropy(const Tensor& logits, std::size_t label, Tensor* grad) {
  const std::size_t k = logits.size();
  if (label >= k) {
    throw InputError("label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
  }
  double max = logits[0];
  for (std::size_t i = 1; i < k; ++i) max = std::max(max, static_cast<double>(logits[i]));
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += std::exp(logits[i] - max);
  const double lse = max + std::log(sum);
  if (grad) {
    *grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < k; ++i) {
      (*grad)[i] = static_cast<float>(std::exp(logits[i] - lse) - (i == label ? 1.0 : 0.0));
    }
  }
  return lse - logits[label];
}

namespace {

// dst += src, matched by element count so flattened views line up.
void accumulate(Tensor& dst, const Tensor& src) {
  if (dst.size() != src.size()) throw ShapeError("gradient accumulation size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void accumulate_colsum(Tensor& dst, const Tensor& src) {
  const std::size_t rows = src.dim(0), cols = src.dim(1);
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += src.at(i, j);
    dst[j] += static_cast<float>(s);
  }
}

void multiply_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
}

void apply_pass_mask(Tensor& grad, const std::vector<std::uint8_t>& mask) {
  if (mask.empty()) return;
  if (mask.size() != grad.size()) throw ShapeError("straight-through mask size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!mask[i]) grad[i] = 0.0f;
  }
}

// Reverse of y = gamma * xhat + beta with xhat = (x - mean) * rstd.
Tensor layer_norm_backward(const Tensor& dy, const Tensor& xhat, const std::vector<float>& rstd,
                           const Tensor& gamma, Tensor& dgamma, Tensor& dbeta) {
  const std::size_t rows = dy.dim(0), d = dy.dim(1);
  Tensor dx(dy.shape());
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < rows; ++i) {
    const float* g = dy.row(i);
    const float* xh = xhat.row(i);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += g[j] * xh[j];
      dbeta[j] += g[j];
      dxhat[j] = static_cast<double>(g[j]) * gamma[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xh[j];
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    float* out = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = static_cast<float>(rstd[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat));
    }
  }
  return dx;
}

// Per-head softmax attention reverse pass. Writes dq, dk, dv [P x inner].
void attention_backward(const LayerCache& lc, const Tensor& dctx, std::size_t head_dim, Tensor& dq,
                        Tensor& dk, Tensor& dv) {
  const std::size_t p = lc.q.dim(0), inner = lc.q.dim(1);
  const std::size_t heads = inner / head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  dq = Tensor({p, inner});
  dk = Tensor({p, inner});
  dv = Tensor({p, inner});
  std::vector<double> da(p), ds(p);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * head_dim;
    const float* probs = lc.probs.data().data() + h * p * p;
    for (std::size_t i = 0; i < p; ++i) {
      const float* a = probs + i * p;
      const float* gi = dctx.row(i) + off;
      double dot = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const float* vj = lc.v.row(j) + off;
        float* dvj = dv.row(j) + off;
        double s = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) {
          s += static_cast<double>(gi[c]) * vj[c];
          dvj[c] += a[j] * gi[c];
        }
        da[j] = s;
        dot += s * a[j];
      }
      for (std::size_t j = 0; j < p; ++j) ds[j] = a[j] * (da[j] - dot) * scale;
      const float* qi = lc.q.row(i) + off;
      float* dqi = dq.row(i) + off;
      for (std::size_t j = 0; j < p; ++j) {
        const float* kj = lc.k.row(j) + off;
        float* dkj = dk.row(j) + off;
        const float sj = static_cast<float>(ds[j]);
        for (std::size_t c = 0; c < head_dim; ++c) {
          dqi[c] += sj * kj[c];
          dkj[c] += sj * qi[c];
        }
      }
    }
  }
}

}  // namespace

void backward_instance(const TransformerModel& model, const ForwardCache& cache, const Tensor& dlogits,
                       GradientSet& grads) {
  const ModelConfig& cfg = model.config;
  TransformerModel& g = grads.grads;
  const std::size_t d = cfg.model_dim, k = cfg.num_classes;
  if (dlogits.size() != k || cache.layers.size() != cfg.num_layers) {
    throw ShapeError("backward inputs do not match the model");
  }
  const std::size_t p = cache.h_out.dim(0);

  // Classifier.
  Tensor dl = dlogits;
  dl.reshape({1, k});
  accumulate(g.cls_w, matmul_tn(dl, cache.pooled));
  accumulate(g.cls_b, dl);
  Tensor dpooled = matmul(dl, model.cls_w);  // [1 x d]
  apply_pass_mask(dpooled, cache.pass_masks[num_activation_sites(cfg) - 1]);

  // Mean pooling.
  Tensor dh({p, d});
  const float inv_p = 1.0f / static_cast<float>(p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < d; ++j) dh.at(i, j) = dpooled[j] * inv_p;
  }

  for (std::size_t l = cfg.num_layers; l-- > 0;) {
    const EncoderLayer& L = model.layers[l];
    EncoderLayer& G = g.layers[l];
    const LayerCache& lc = cache.layers[l];

    // Feed-forward sub-block: h_out = h_mid + w2(drop(relu(w1(ln2(h_mid))))).
    Tensor dh_mid = dh;
    accumulate(G.w2, matmul_tn(dh, lc.hidden_out));
    accumulate_colsum(G.b2, dh);
    Tensor dhidden = matmul(dh, L.w2);
    if (!lc.ffn_drop.empty()) multiply_inplace(dhidden, lc.ffn_drop);
    apply_pass_mask(dhidden, cache.pass_masks[site_for(LinearOp::kFfnOut, l, cfg)]);
    for (std::size_t i = 0; i < dhidden.size(); ++i) {
      if (!(lc.z1[i] > 0.0f)) dhidden[i] = 0.0f;
    }
    accumulate(G.w1, matmul_tn(dhidden, lc.a2));
    accumulate_colsum(G.b1, dhidden);
    Tensor da2 = matmul(dhidden, L.w1);
    apply_pass_mask(da2, cache.pass_masks[site_for(LinearOp::kFfnIn, l, cfg)]);
    add_inplace(dh_mid, layer_norm_backward(da2, lc.ln2_xhat, lc.ln2_rstd, L.ln2_gamma, G.ln2_gamma,
                                            G.ln2_beta));

    // Attention sub-block: h_mid = h_in + drop(wo(attn(ln1(h_in)))).
    Tensor dh_in = dh_mid;
    Tensor dattn = dh_mid;
    if (!lc.attn_drop.empty()) multiply_inplace(dattn, lc.attn_drop);
    accumulate(G.wo, matmul_tn(dattn, lc.ctx));
    accumulate_colsum(G.bo, dattn);
    Tensor dctx = matmul(dattn, L.wo);
    apply_pass_mask(dctx, cache.pass_masks[site_for(LinearOp::kOutput, l, cfg)]);
    Tensor dq, dk, dv;
    attention_backward(lc, dctx, cfg.head_dim(), dq, dk, dv);
    accumulate(G.wq, matmul_tn(dq, lc.a1));
    accumulate(G.wk, matmul_tn(dk, lc.a1));
    accumulate(G.wv, matmul_tn(dv, lc.a1));
    accumulate_colsum(G.bq, dq);
    accumulate_colsum(G.bk, dk);
    accumulate_colsum(G.bv, dv);
    Tensor da1 = matmul(dq, L.wq);
    add_inplace(da1, matmul(dk, L.wk));
    add_inplace(da1, matmul(dv, L.wv));
    apply_pass_mask(da1, cache.pass_masks[site_for(LinearOp::kQuery, l, cfg)]);
    add_inplace(dh_in, layer_norm_backward(da1, lc.ln1_xhat, lc.ln1_rstd, L.ln1_gamma, G.ln1_gamma,
                                           G.ln1_beta));
    dh = std::move(dh_in);
  }

  // Patch embedding (the positional table is constant).
  accumulate(g.embed_w, matmul_tn(dh, cache.patches));
  accumulate_colsum(g.embed_b, dh);
}

BatchResult backward(const TransformerModel& model, std::span<const Example> batch,
                     const BackwardOptions& options) {
  if (batch.empty()) throw InputError("empty batch");
  BatchResult result{GradientSet::zeros_like(model), 0.0, 0};
  ForwardCache cache;
  ForwardOptions fo;
  fo.mode = options.mode;
  fo.dropout_rng = options.dropout_rng;
  fo.hook = options.hook;
  fo.cache = &cache;
  Tensor dlogits;
  for (const Example& ex : batch) {
    const Tensor logits = forward(model, *ex.input, fo);
    result.loss += cross_entropy(logits, ex.label, &dlogits);
    const auto& v = logits.values();
    if (static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()) == ex.label) {
      ++result.correct;
    }
    backward_instance(model, cache, dlogits, result.grads);
  }
  const double n = static_cast<double>(batch.size());
  result.loss /= n;
  result.grads.scale(static_cast<float>(1.0 / n));
  return result;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

AdamState AdamState::init(const TransformerModel& model, AdamConfig config) {
  AdamState s;
  s.config = config;
  s.m = GradientSet::zeros_like(model);
  s.v = GradientSet::zeros_like(model);
  return s;
}

void adam_step(AdamState& state, TransformerModel& model, const GradientSet& grads, float lr) {
  auto params = parameters(model);
  const auto gs = parameters(grads.grads);
  auto ms = parameters(state.m.grads);
  auto vs = parameters(state.v.grads);
  if (gs.size() != params.size() || ms.size() != params.size()) {
    throw ShapeError("optimizer state does not match the model");
  }
  ++state.step;
  const double b1 = state.config.beta1, b2 = state.config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].tensor;
    const Tensor& g = *gs[i].tensor;
    Tensor& m = *ms[i].tensor;
    Tensor& v = *vs[i].tensor;
    if (w.size() != g.size() || w.size() != m.size()) {
      throw ShapeError("gradient '" + params[i].name + "' does not match its parameter");
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = (mj / c1) / (std::sqrt(vj / c2) + state.config.eps);
      w[j] = static_cast<float>(w[j] - lr * update);
    }
  }
}

void CosineSchedule::validate() const {
  if (total_steps < 1) throw InputError("cosine schedule needs at least one step");
  if (!(lr_min > 0.0f) || lr_min > lr_max) {
    throw InputError("learning rates must satisfy 0 < lr_min <= lr_max");
  }
}

float cosine_lr(const CosineSchedule& s, std::uint64_t t) {
  s.validate();
  if (t > s.total_steps) {
    throw InputError("step " + std::to_string(t) + " beyond schedule length " + std::to_string(s.total_steps));
  }
  const double frac = static_cast<double>(t) / static_cast<double>(s.total_steps);
  return static_cast<float>(s.lr_min + (s.lr_max - s.lr_min) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,lr,train_loss,train_acc,val_acc\n";
  for (const EpochRecord& r : epochs) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_acc << ',';
    if (r.val_acc) out << *r.val_acc;
    out << '\n';
  }
  return out.str();
}

double evaluate_accuracy(const TransformerModel& model, const TimeSeriesDataset& dataset) {
  if (dataset.size() == 0) throw InputError("cannot evaluate on an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (predict(model, dataset.instances[i]) == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

void check_dataset(const TransformerModel& model, const TimeSeriesDataset& ds) {
  ds.validate();
  const ModelConfig& cfg = model.config;
  if (ds.channels() != cfg.input_channels || ds.length() != cfg.seq_len) {
    throw InputError("dataset instances are [" + std::to_string(ds.channels()) + "x" +
                     std::to_string(ds.length()) + "], model expects [" +
                     std::to_string(cfg.input_channels) + "x" + std::to_string(cfg.seq_len) + "]");
  }
  if (ds.num_classes() > cfg.num_classes) {
    throw InputError("dataset has " + std::to_string(ds.num_classes()) + " classes, model has " +
                     std::to_string(cfg.num_classes));
  }
}

}  // namespace

TrainHistory train(TransformerModel& model, const TimeSeriesDataset& dataset, const TrainConfig& config) {
  if (config.epochs < 1) throw InputError("epochs must be >= 1");
  if (config.batch_size < 1) throw InputError("batch_size must be >= 1");
  check_dataset(model, dataset);
  if (config.validation) check_dataset(model, *config.validation);

  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const CosineSchedule schedule{config.lr_max, config.lr_min, config.epochs * steps_per_epoch};
  schedule.validate();

  SeededRng base(config.seed);
  SeededRng order_rng = base.fork(1);
  SeededRng dropout_rng = base.fork(2);
  AdamState adam = AdamState::init(model, config.adam);
  std::vector<std::size_t> order(n);
  std::vector<Example> batch;
  TrainHistory history;
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    float lr = 0.0f;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i) {
        batch.push_back({&dataset.instances[order[i]], dataset.labels[order[i]]});
      }
      BackwardOptions bo;
      bo.dropout_rng = &dropout_rng;
      bo.hook = config.activation_hook;
      BatchResult r = config.forward_weights ? backward(config.forward_weights(model), batch, bo)
                                             : backward(model, batch, bo);
      if (!std::isfinite(r.loss) || !r.grads.all_finite()) {
        throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch));
      }
      if (config.clip_norm > 0.0f) {
        const double norm = r.grads.global_norm();
        if (norm > config.clip_norm) r.grads.scale(static_cast<float>(config.clip_norm / norm));
      }
      lr = cosine_lr(schedule, step++);
      adam_step(adam, model, r.grads, lr);
      if (config.after_step) config.after_step(model);
      loss_sum += r.loss * static_cast<double>(batch.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(n);
    TransformerModel transformed;
    const TransformerModel* eval_model = &model;
    if (config.forward_weights) {
      transformed = config.forward_weights(model);
      eval_model = &transformed;
    }
    rec.train_acc = evaluate_accuracy(*eval_model, dataset);
    if (config.validation) rec.val_acc = evaluate_accuracy(*eval_model, *config.validation);
    history.epochs.push_back(rec);
  }
  return history;
}

TrainHistory fine_tune(TransformerModel& model, const PruneMask& masks, const TimeSeriesDataset& dataset,
                       std::size_t epochs, TrainConfig config) {
  masks.check_alignment(model);
  if (epochs == 0) return {};
  masks.apply(model);
  config.epochs = epochs;
  auto user_hook = config.after_step;
  config.after_step = [&masks, user_hook](TransformerModel& m) {
    masks.apply(m);
    if (user_hook) user_hook(m);
  };
  return train(model, dataset, config);
}

}  // namespace tsfo
