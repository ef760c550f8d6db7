// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tsfo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of 32-bit floats.
///
/// Every dimension is positive and `size() == shape_numel(shape())`. Tensors
/// are plain values: copying duplicates the payload.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& values() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-2 element access (row, col).
  float& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  float at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  float* row(std::size_t r) noexcept { return data_.data() + r * shape_.back(); }
  const float* row(std::size_t r) const noexcept { return data_.data() + r * shape_.back(); }

  /// Reinterprets the payload with a new shape of equal element count.
  void reshape(Shape shape);

  void fill(float value);
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// 8-bit quantized tensor: x ~= (q - zero_point) * scale.
///
/// Per-tensor tensors carry one scale and an affine zero point. Per-channel
/// tensors carry one scale per slice along `channel_axis` and are always
/// symmetric (zero_point == 0).
struct QTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  std::vector<float> scale;
  std::int32_t zero_point = 0;
  int channel_axis = -1;  // -1: per-tensor

  bool per_channel() const noexcept { return channel_axis >= 0; }
  std::size_t size() const noexcept { return data.size(); }

  /// Scale that applies to element `flat_index`.
  float scale_at(std::size_t flat_index) const;

  /// Throws InputError when any invariant is broken.
  void validate() const;

  friend bool operator==(const QTensor&, const QTensor&) = default;
};

}  // namespace tsfo
