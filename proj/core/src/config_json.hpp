// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

// JSON mapping of ModelConfig shared by the weight-file readers and writers.

#pragma once

#include "json.hpp"
#include "tsfo/error.hpp"
#include "tsfo/model.hpp"

namespace tsfo::detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["model_dim"] = c.model_dim;
  j["ffn_dim"] = c.ffn_dim;
  j["patch_size"] = c.patch_size;
  j["patch_stride"] = c.patch_stride;
  j["seq_len"] = c.seq_len;
  j["input_channels"] = c.input_channels;
  j["num_classes"] = c.num_classes;
  j["dropout_rate"] = c.dropout_rate;
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerShape& l : c.layers) layers.push_back({{"heads", l.heads}, {"ffn_dim", l.ffn_dim}});
  j["layers"] = std::move(layers);
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("model config must be a JSON object");
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.model_dim = j.at("model_dim").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.patch_stride = j.at("patch_stride").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.input_channels = j.at("input_channels").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.dropout_rate = j.at("dropout_rate").get<float>();
    for (const auto& l : j.value("layers", nlohmann::json::array())) {
      c.layers.push_back({l.at("heads").get<std::size_t>(), l.at("ffn_dim").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed model config: ") + ex.what());
  }
  c.validate();
  return c;
}

}  // namespace tsfo::detail
