// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/mask.hpp"

#include <algorithm>

#include "tsfo/error.hpp"
#include "tsfo/model.hpp"

namespace tsfo {

std::size_t PruneMask::pruned_count() const {
  std::size_t n = 0;
  for (const ParamMask& m : params) n += static_cast<std::size_t>(std::count(m.keep.begin(), m.keep.end(), 0));
  return n;
}

std::size_t PruneMask::total_count() const {
  std::size_t n = 0;
  for (const ParamMask& m : params) n += m.keep.size();
  return n;
}

namespace {

template <typename Ref>
const Ref& find_param(const std::vector<Ref>& refs, const ParamMask& m) {
  for (const Ref& r : refs) {
    if (r.name != m.name) continue;
    if (r.tensor->shape() != m.shape || m.keep.size() != r.tensor->size()) {
      throw InputError("mask '" + m.name + "' has shape " + shape_to_string(m.shape) +
                       " but the parameter is " + shape_to_string(r.tensor->shape()));
    }
    return r;
  }
  throw InputError("mask '" + m.name + "' does not name a model parameter");
}

}  // namespace

void PruneMask::check_alignment(const TransformerModel& model) const {
  const auto refs = parameters(model);
  for (const ParamMask& m : params) find_param(refs, m);
}

void PruneMask::apply(TransformerModel& model) const {
  const auto refs = parameters(model);
  for (const ParamMask& m : params) {
    Tensor& t = *find_param(refs, m).tensor;
    for (std::size_t i = 0; i < m.keep.size(); ++i) {
      if (!m.keep[i]) t[i] = 0.0f;
    }
  }
}

}  // namespace tsfo
