// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tsfo/container.hpp"
#include "tsfo/mask.hpp"
#include "tsfo/model.hpp"

namespace tsfo {

struct StoredModel {
  TransformerModel model;
  std::optional<PruneMask> mask;
};

/// Float weights (f32) in canonical order, then masks as i8 tensors named
/// "mask/<parameter>" holding 0/1. The config lives in the header metadata.
Container model_to_container(const TransformerModel& model, const PruneMask* mask = nullptr);
StoredModel model_from_container(const Container& container);

void save_model(const TransformerModel& model, const std::filesystem::path& path,
                const PruneMask* mask = nullptr);
StoredModel load_model(const std::filesystem::path& path);

/// ModelConfig as a JSON object string, and back (validated).
std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace tsfo
