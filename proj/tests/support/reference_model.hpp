// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

// Straight-line double-precision forward pass, written independently of the
// library kernels. Used as the oracle for logits and finite differences.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tsfo/model.hpp"

namespace tsfo::testing {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

struct RefParams {
  std::map<std::string, Vec> values;

  static RefParams from(const TransformerModel& m) {
    RefParams r;
    for (const auto& p : parameters(m)) r.values[p.name] = Vec(p.tensor->values().begin(), p.tensor->values().end());
    return r;
  }
  const Vec& operator()(const std::string& name) const { return values.at(name); }
};

// Optional inverted-dropout multipliers per layer, flattened row-major.
struct RefDropout {
  std::vector<Vec> attn;
  std::vector<Vec> ffn;
};

inline Mat ref_linear(const Mat& x, const Vec& w, const Vec& b, std::size_t out) {
  const std::size_t in = x.front().size();
  Mat y(x.size(), Vec(out));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r][i] * w[o * in + i];
      y[r][o] = s;
    }
  }
  return y;
}

inline Mat ref_layer_norm(const Mat& x, const Vec& gamma, const Vec& beta) {
  Mat y = x;
  for (auto& row : y) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) * inv * gamma[j] + beta[j];
  }
  return y;
}

inline Vec reference_logits(const ModelConfig& cfg, const RefParams& P, const Tensor& x,
                            const RefDropout* drop = nullptr) {
  const std::size_t d = cfg.model_dim, c = cfg.input_channels, k = cfg.patch_size;
  const std::size_t s = cfg.patch_stride, np = cfg.num_patches(), hd = cfg.head_dim();

  Mat h(np, Vec(d));
  const Vec& ew = P("embed.weight");
  const Vec& eb = P("embed.bias");
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t o = 0; o < d; ++o) {
      double acc = eb[o];
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t j = 0; j < k; ++j) acc += ew[(o * c + ch) * k + j] * x.at(ch, p * s + j);
      }
      const std::size_t i = o / 2;
      const double angle = static_cast<double>(p) / std::pow(10000.0, 2.0 * i / static_cast<double>(d));
      h[p][o] = acc + (o % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const LayerShape shape = cfg.layer(l);
    const std::size_t inner = shape.heads * hd;
    Mat a = ref_layer_norm(h, P(pre + "ln1.gamma"), P(pre + "ln1.beta"));
    Mat q = ref_linear(a, P(pre + "attn.wq"), P(pre + "attn.bq"), inner);
    Mat kk = ref_linear(a, P(pre + "attn.wk"), P(pre + "attn.bk"), inner);
    Mat v = ref_linear(a, P(pre + "attn.wv"), P(pre + "attn.bv"), inner);
    Mat ctx(np, Vec(inner, 0.0));
    for (std::size_t head = 0; head < shape.heads; ++head) {
      for (std::size_t i = 0; i < np; ++i) {
        Vec sc(np);
        for (std::size_t j = 0; j < np; ++j) {
          double dot = 0.0;
          for (std::size_t t = 0; t < hd; ++t) dot += q[i][head * hd + t] * kk[j][head * hd + t];
          sc[j] = dot / std::sqrt(static_cast<double>(hd));
        }
        const double mx = *std::max_element(sc.begin(), sc.end());
        double z = 0.0;
        for (double& e : sc) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j < np; ++j) {
          for (std::size_t t = 0; t < hd; ++t) ctx[i][head * hd + t] += sc[j] / z * v[j][head * hd + t];
        }
      }
    }
    Mat attn = ref_linear(ctx, P(pre + "attn.wo"), P(pre + "attn.bo"), d);
    for (std::size_t i = 0; i < np; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double m = drop ? drop->attn[l][i * d + j] : 1.0;
        h[i][j] += attn[i][j] * m;
      }
    }
    Mat a2 = ref_layer_norm(h, P(pre + "ln2.gamma"), P(pre + "ln2.beta"));
    Mat hid = ref_linear(a2, P(pre + "ffn.w1"), P(pre + "ffn.b1"), shape.ffn_dim);
    for (std::size_t i = 0; i < np; ++i) {
      for (std::size_t j = 0; j < shape.ffn_dim; ++j) {
        const double m = drop ? drop->ffn[l][i * shape.ffn_dim + j] : 1.0;
        hid[i][j] = std::max(0.0, hid[i][j]) * m;
      }
    }
    Mat f = ref_linear(hid, P(pre + "ffn.w2"), P(pre + "ffn.b2"), d);
    for (std::size_t i = 0; i < np; ++i) {
      for (std::size_t j = 0; j < d; ++j) h[i][j] += f[i][j];
    }
  }

  Mat pooled(1, Vec(d, 0.0));
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < d; ++j) pooled[0][j] += h[i][j] / static_cast<double>(np);
  }
  return ref_linear(pooled, P("classifier.weight"), P("classifier.bias"), cfg.num_classes)[0];
}

inline double reference_loss(const Vec& logits, std::size_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return mx + std::log(z) - logits[label];
}

/// Tiny geometry used by the gradient checks: one layer, one head, d=4, P=3.
inline ModelConfig gradient_check_config() {
  ModelConfig cfg;
  cfg.num_layers = 1;
  cfg.num_heads = 1;
  cfg.model_dim = 4;
  cfg.ffn_dim = 6;
  cfg.patch_size = 4;
  cfg.patch_stride = 4;
  cfg.seq_len = 12;
  cfg.input_channels = 1;
  cfg.num_classes = 3;
  cfg.dropout_rate = 0.0f;
  return cfg;
}

}  // namespace tsfo::testing
