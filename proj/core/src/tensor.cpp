// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tsfo/error.hpp"

namespace tsfo {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("zero dimension in " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("payload of " + std::to_string(data_.size()) +
                     " elements does not fill " + shape_to_string(shape_));
  }
}

void Tensor::reshape(Shape shape) {
  check_dims(shape);
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " +
                     shape_to_string(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

float QTensor::scale_at(std::size_t flat_index) const {
  if (!per_channel()) return scale.front();
  std::size_t inner = 1;
  for (std::size_t a = static_cast<std::size_t>(channel_axis) + 1; a < shape.size(); ++a) {
    inner *= shape[a];
  }
  std::size_t channel = (flat_index / inner) % shape[channel_axis];
  return scale[channel];
}

void QTensor::validate() const {
  if (shape.empty() || shape_numel(shape) != data.size()) {
    throw InputError("qtensor payload does not match shape " + shape_to_string(shape));
  }
  if (scale.empty()) throw InputError("qtensor has no scale");
  for (float s : scale) {
    if (!(s > 0.0f) || !std::isfinite(s)) throw InputError("qtensor scale must be positive");
  }
  if (zero_point < -128 || zero_point > 127) {
    throw InputError("qtensor zero point outside [-128, 127]");
  }
  if (per_channel()) {
    if (static_cast<std::size_t>(channel_axis) >= shape.size()) {
      throw InputError("qtensor channel axis out of range");
    }
    if (scale.size() != shape[channel_axis]) {
      throw InputError("per-channel scale count " + std::to_string(scale.size()) +
                       " != channel dimension " + std::to_string(shape[channel_axis]));
    }
    if (zero_point != 0) throw InputError("per-channel qtensor must be symmetric");
  } else if (scale.size() != 1) {
    throw InputError("per-tensor qtensor must carry exactly one scale");
  }
}

}  // namespace tsfo
