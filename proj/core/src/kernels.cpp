// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsfo/error.hpp"

namespace tsfo {
namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " must be rank 2, got " + shape_to_string(t.shape()));
  }
}

// Left-to-right accumulation in double. Products of two floats are exact in
// double, and adding an exact zero is an identity, so dropping zero-weight
// terms (pruned units) leaves results bit-identical.
inline double dot(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

inline std::int32_t dot_i8(const std::int8_t* a, const std::int8_t* b, std::size_t n) {
  std::int32_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<std::int32_t>(a[i]) * static_cast<std::int32_t>(b[i]);
  }
  return acc;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range");
  return static_cast<std::size_t>(axis);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  if (b.dim(0) != a.dim(1)) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) +
                     " * " + shape_to_string(b.shape()));
  }
  return matmul_nt(a, transpose(b));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt inner dimensions differ: " + shape_to_string(a.shape()) +
                     " * " + shape_to_string(b.shape()) + "^T");
  }
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const float* ar = a.row(i);
    float* cr = c.row(i);
    for (std::size_t j = 0; j < n; ++j) cr[j] = static_cast<float>(dot(ar, b.row(j), k));
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul lhs");
  require_rank2(b, "matmul rhs");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("matmul_tn inner dimensions differ: " + shape_to_string(a.shape()) +
                     "^T * " + shape_to_string(b.shape()));
  }
  return matmul_nt(transpose(a), transpose(b));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require_rank2(w, "linear weight");
  return linear(x, w.data(), w.dim(0), bias);
}

Tensor linear(const Tensor& x, std::span<const float> w, std::size_t out_features,
              const Tensor* bias) {
  require_rank2(x, "linear input");
  const std::size_t m = x.dim(0), k = x.dim(1), n = out_features;
  if (n == 0 || w.size() != n * k) {
    throw ShapeError("linear weight of " + std::to_string(w.size()) + " elements does not match " +
                     std::to_string(n) + "x" + std::to_string(k));
  }
  if (bias && bias->size() != n) throw ShapeError("linear bias length mismatch");
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const float* xr = x.row(i);
    float* yr = y.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = static_cast<float>(dot(xr, w.data() + j * k, k) + (bias ? (*bias)[j] : 0.0));
    }
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = a.at(i, j);
  }
  return t;
}

void softmax_inplace(std::span<float> values) {
  if (values.empty()) return;
  float mx = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (float& v : values) {
    v = std::exp(v - mx);
    sum += v;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (float& v : values) v *= inv;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < ax; ++a) outer *= x.dim(a);
  for (std::size_t a = ax + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const std::size_t n = x.dim(ax);

  Tensor y = x;
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      softmax_inplace(std::span<float>(y.data().data() + o * n, n));
    }
    return y;
  }
  std::vector<float> slice(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      float* base = y.data().data() + o * n * inner + i;
      for (std::size_t j = 0; j < n; ++j) slice[j] = base[j * inner];
      softmax_inplace(slice);
      for (std::size_t j = 0; j < n; ++j) base[j * inner] = slice[j];
    }
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  return layer_norm(x, gamma, beta, eps, nullptr, nullptr);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                  Tensor* xhat, std::vector<float>* rstd_out) {
  if (!(eps > 0.0f)) throw ConfigError("layer_norm eps must be positive");
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm affine parameters must have length " + std::to_string(d));
  }
  Tensor y(x.shape());
  const std::size_t rows = x.size() / d;
  if (xhat) *xhat = Tensor(x.shape());
  if (rstd_out) rstd_out->assign(rows, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data().data() + r * d;
    float* yr = y.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    if (rstd_out) (*rstd_out)[r] = static_cast<float>(rstd);
    for (std::size_t i = 0; i < d; ++i) {
      const float n = static_cast<float>((xr[i] - mean) * rstd);
      if (xhat) (*xhat)[r * d + i] = n;
      yr[i] = n * gamma[i] + beta[i];
    }
  }
  return y;
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw ConfigError("conv1d stride must be >= 1");
  if (kernel == 0 || kernel > length) {
    throw ShapeError("conv1d kernel " + std::to_string(kernel) + " exceeds length " +
                     std::to_string(length));
  }
  return (length - kernel) / stride + 1;
}

Tensor im2col_1d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  require_rank2(x, "conv1d input");
  const std::size_t c = x.dim(0), t = x.dim(1);
  const std::size_t out_len = conv1d_output_length(t, kernel, stride);
  Tensor cols({out_len, c * kernel});
  for (std::size_t p = 0; p < out_len; ++p) {
    float* dst = cols.row(p);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* src = x.row(ch) + p * stride;
      std::copy(src, src + kernel, dst + ch * kernel);
    }
  }
  return cols;
}

Tensor conv1d_valid(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
  require_rank2(x, "conv1d input");
  if (w.rank() != 3) throw ShapeError("conv1d weight must be [C_out x C_in x k]");
  const std::size_t c_out = w.dim(0), c_in = w.dim(1), k = w.dim(2);
  if (x.dim(0) != c_in) {
    throw ShapeError("conv1d expects " + std::to_string(c_in) + " input channels, got " +
                     std::to_string(x.dim(0)));
  }
  if (b.size() != c_out) throw ShapeError("conv1d bias length mismatch");
  Tensor cols = im2col_1d(x, k, stride);  // [T' x C_in*k]
  Tensor flat_w({c_out, c_in * k}, w.values());
  Tensor out = matmul_nt(flat_w, cols);  // [C_out x T']
  for (std::size_t o = 0; o < c_out; ++o) {
    float* r = out.row(o);
    for (std::size_t p = 0; p < out.dim(1); ++p) r[p] += b[o];
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.values()) v = v > 0.0f ? v : 0.0f;
  return y;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add " + shape_to_string(a.shape()) + " + " + shape_to_string(b.shape()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

std::int8_t quantize_value(float x, float scale, std::int32_t zero_point) {
  double r = std::round(static_cast<double>(x) / static_cast<double>(scale));
  if (std::isnan(r)) r = 0.0;
  r = std::clamp(r + zero_point, -128.0, 127.0);
  return static_cast<std::int8_t>(r);
}

QTensor quantize_linear(const Tensor& x, float scale, std::int32_t zero_point) {
  if (!(scale > 0.0f)) throw InputError("quantization scale must be positive");
  if (zero_point < -128 || zero_point > 127) throw InputError("zero point outside [-128, 127]");
  QTensor q;
  q.shape = x.shape();
  q.scale = {scale};
  q.zero_point = zero_point;
  q.data.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) q.data[i] = quantize_value(x[i], scale, zero_point);
  return q;
}

QTensor quantize_per_channel(const Tensor& x, std::span<const float> scales, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  if (scales.size() != x.dim(ax)) throw ShapeError("per-channel scale count mismatch");
  QTensor q;
  q.shape = x.shape();
  q.scale.assign(scales.begin(), scales.end());
  q.zero_point = 0;
  q.channel_axis = static_cast<int>(ax);
  q.data.resize(x.size());
  q.validate();
  for (std::size_t i = 0; i < x.size(); ++i) q.data[i] = quantize_value(x[i], q.scale_at(i), 0);
  return q;
}

Tensor dequantize_linear(const QTensor& q) {
  q.validate();
  Tensor x(q.shape);
  for (std::size_t i = 0; i < q.size(); ++i) {
    x[i] = static_cast<float>(static_cast<std::int32_t>(q.data[i]) - q.zero_point) * q.scale_at(i);
  }
  return x;
}

Tensor int8_linear(const QTensor& a, const QTensor& w, const Tensor* bias) {
  if (a.shape.size() != 2 || w.shape.size() != 2) throw ShapeError("int8_linear operands must be rank 2");
  const std::size_t m = a.shape[0], k = a.shape[1], n = w.shape[0];
  if (w.shape[1] != k) {
    throw ShapeError("int8_linear inner dimensions differ: " + shape_to_string(a.shape) + " * " +
                     shape_to_string(w.shape) + "^T");
  }
  if (k > kMaxInt8AccumulationDepth) {
    throw CapacityError("reduction depth " + std::to_string(k) + " exceeds int32 accumulator bound " +
                        std::to_string(kMaxInt8AccumulationDepth));
  }
  if (a.per_channel()) throw InputError("int8_linear activations must be per-tensor");
  if (w.per_channel() && w.channel_axis != 0) throw InputError("int8_linear weights must be per-row");
  if (bias && bias->size() != n) throw ShapeError("int8_linear bias length mismatch");

  const std::int64_t za = a.zero_point, zw = w.zero_point;
  std::vector<std::int64_t> w_sums(n, 0);
  if (za != 0) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::int8_t* wr = w.data.data() + j * k;
      std::int64_t s = 0;
      for (std::size_t i = 0; i < k; ++i) s += wr[i];
      w_sums[j] = s;
    }
  }
  const double sa = a.scale.front();
  Tensor y({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const std::int8_t* ar = a.data.data() + r * k;
    std::int64_t a_sum = 0;
    if (zw != 0) {
      for (std::size_t i = 0; i < k; ++i) a_sum += ar[i];
    }
    float* yr = y.row(r);
    for (std::size_t j = 0; j < n; ++j) {
      const std::int32_t acc = dot_i8(ar, w.data.data() + j * k, k);
      const std::int64_t corrected = static_cast<std::int64_t>(acc) - za * w_sums[j] - zw * a_sum +
                                     static_cast<std::int64_t>(k) * za * zw;
      const double sw = w.per_channel() ? w.scale[j] : w.scale.front();
      double v = static_cast<double>(corrected) * sa * sw;
      if (bias) v += (*bias)[j];
      yr[j] = static_cast<float>(v);
    }
  }
  return y;
}

Tensor int8_matmul(const QTensor& a, const QTensor& b) {
  if (b.shape.size() != 2) throw ShapeError("int8_matmul rhs must be rank 2");
  if (b.per_channel() && b.channel_axis != 1) throw InputError("int8_matmul rhs must be per-column");
  const std::size_t k = b.shape[0], n = b.shape[1];
  if (a.shape.size() != 2 || a.shape[1] != k) {
    throw ShapeError("int8_matmul inner dimensions differ: " + shape_to_string(a.shape) + " * " +
                     shape_to_string(b.shape));
  }
  QTensor bt;
  bt.shape = {n, k};
  bt.scale = b.scale;
  bt.zero_point = b.zero_point;
  bt.channel_axis = b.per_channel() ? 0 : -1;
  bt.data.resize(b.data.size());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) bt.data[j * k + i] = b.data[i * n + j];
  }
  return int8_linear(a, bt, nullptr);
}

}  // namespace tsfo
