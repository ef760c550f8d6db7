// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tsfo/tensor.hpp"

namespace tsfo {

// ---------------------------------------------------------------------------
// Float kernels. All are pure functions; results are bit-identical across runs
// for identical inputs. Dot products accumulate left to right in double and
// round once, so removing exact-zero terms never changes a result.
// ---------------------------------------------------------------------------

/// c = a * b for a [M x K] and b [K x N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// c = a * b^T for a [M x K] and b [N x K].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// c = a^T * b for a [K x M] and b [K x N].
Tensor matmul_tn(const Tensor& a, const Tensor& b);

/// y = x * w^T + bias, the dense-layer convention with w stored [out x in].
/// `bias` may be null.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);

/// Same as above with a raw row-major weight block of `out_features` rows.
Tensor linear(const Tensor& x, std::span<const float> w, std::size_t out_features,
              const Tensor* bias);

Tensor transpose(const Tensor& a);

/// Numerically stable softmax along `axis` (negative values count from the
/// back). Each slice is shifted by its maximum before exponentiation.
Tensor softmax(const Tensor& x, int axis = -1);

/// In-place softmax over one contiguous slice.
void softmax_inplace(std::span<float> values);

inline constexpr float kLayerNormEps = 1e-5f;

/// Normalizes every trailing-dimension vector to zero mean and unit
/// population variance, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = kLayerNormEps);

/// layer_norm that also returns the normalized input (before gamma/beta) and
/// the per-row reciprocal standard deviation, as needed for backprop.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                  Tensor* xhat, std::vector<float>* rstd);

/// Number of outputs of a valid (unpadded) 1-D convolution.
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 std::size_t stride);

/// Valid cross-correlation. x [C_in x T], w [C_out x C_in x k], b [C_out].
/// Returns [C_out x T'] with T' = floor((T - k) / stride) + 1.
Tensor conv1d_valid(const Tensor& x, const Tensor& w, const Tensor& b,
                    std::size_t stride);

/// Gathers the strided patches of x [C x T] into rows [T' x (C*k)], matching
/// the flattened [C_out x (C_in*k)] weight layout of conv1d_valid.
Tensor im2col_1d(const Tensor& x, std::size_t kernel, std::size_t stride);

Tensor relu(const Tensor& x);
void add_inplace(Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// INT8 kernels.
// ---------------------------------------------------------------------------

/// round(x / scale) + zero_point, rounding half away from zero, saturated to
/// [-128, 127].
std::int8_t quantize_value(float x, float scale, std::int32_t zero_point);

/// Per-tensor affine quantization.
QTensor quantize_linear(const Tensor& x, float scale, std::int32_t zero_point);

/// Symmetric per-channel quantization with one scale per slice of `axis`.
QTensor quantize_per_channel(const Tensor& x, std::span<const float> scales,
                             int axis);

/// x_hat = (q - zero_point) * scale.
Tensor dequantize_linear(const QTensor& q);

/// Longest reduction an int32 accumulator holds without overflow:
/// K * 128 * 128 <= 2^31 - 1 (int8 operands include -128).
inline constexpr std::size_t kMaxInt8AccumulationDepth = 131071;

/// Integer GEMM. a [M x K] is per-tensor (affine allowed). b [K x N] is
/// per-tensor or per-channel along axis 1 (columns). Products accumulate in
/// int32; zero-point corrections and scales are applied afterwards.
/// Throws CapacityError when K > kMaxInt8AccumulationDepth.
Tensor int8_matmul(const QTensor& a, const QTensor& b);

/// Integer dense layer: y = a * w^T + bias. a [M x K] per-tensor, w [N x K]
/// per-tensor or per-channel along axis 0 (output channels). `bias` may be
/// null and is added in float.
Tensor int8_linear(const QTensor& a, const QTensor& w, const Tensor* bias);

}  // namespace tsfo
