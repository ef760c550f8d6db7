// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsfo/tensor.hpp"

namespace tsfo {

struct TransformerModel;

/// Binary keep-mask (1 = keep, 0 = pruned) for one parameter tensor.
struct ParamMask {
  std::string name;
  Shape shape;
  std::vector<std::uint8_t> keep;

  friend bool operator==(const ParamMask&, const ParamMask&) = default;
};

/// Masks for the pruned parameters of a model, in canonical parameter order.
struct PruneMask {
  std::vector<ParamMask> params;

  std::size_t pruned_count() const;
  std::size_t total_count() const;

  /// Zeroes every masked coordinate. Throws InputError if a mask does not
  /// match a parameter name or shape.
  void apply(TransformerModel& model) const;

  /// Throws InputError unless every mask aligns with a model parameter.
  void check_alignment(const TransformerModel& model) const;

  friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

}  // namespace tsfo
