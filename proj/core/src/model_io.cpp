// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/model_io.hpp"

#include "config_json.hpp"
#include "json.hpp"
#include "tsfo/error.hpp"

namespace tsfo {

using nlohmann::json;

namespace {
constexpr std::string_view kMaskPrefix = "mask/";
}

Container model_to_container(const TransformerModel& model, const PruneMask* mask) {
  if (mask) mask->check_alignment(model);
  json meta;
  meta["kind"] = "float_model";
  meta["config"] = detail::config_to_json(model.config);
  Container c;
  c.metadata_json = meta.dump();
  for (const auto& p : parameters(model)) c.entries.push_back(ContainerEntry::from_tensor(p.name, *p.tensor));
  if (mask) {
    for (const ParamMask& m : mask->params) {
      QTensor q;
      q.shape = m.shape;
      q.data.assign(m.keep.begin(), m.keep.end());
      q.scale = {1.0f};
      c.entries.push_back(ContainerEntry::from_qtensor(std::string(kMaskPrefix) + m.name, q));
    }
  }
  return c;
}

StoredModel model_from_container(const Container& c) {
  const json meta = json::parse(c.metadata_json);
  if (meta.value("kind", "") != "float_model") throw ParseError("container does not hold a float model");
  StoredModel out;
  SeededRng rng(0);
  out.model = build_model(detail::config_from_json(meta.value("config", json())), rng);
  for (auto& p : parameters(out.model)) {
    const ContainerEntry& e = c.at(p.name);
    if (e.shape != p.tensor->shape()) {
      throw ParseError("tensor '" + p.name + "' has shape " + shape_to_string(e.shape) + ", config implies " +
                       shape_to_string(p.tensor->shape()));
    }
    *p.tensor = e.to_tensor();
  }
  PruneMask mask;
  for (const ContainerEntry& e : c.entries) {
    if (!e.name.starts_with(kMaskPrefix)) continue;
    const QTensor q = e.to_qtensor();
    ParamMask m{e.name.substr(kMaskPrefix.size()), q.shape, {}};
    for (std::int8_t v : q.data) {
      if (v != 0 && v != 1) throw ParseError("mask '" + m.name + "' holds values other than 0 and 1");
      m.keep.push_back(static_cast<std::uint8_t>(v));
    }
    mask.params.push_back(std::move(m));
  }
  if (!mask.params.empty()) {
    mask.check_alignment(out.model);
    out.mask = std::move(mask);
  }
  return out;
}

void save_model(const TransformerModel& model, const std::filesystem::path& path, const PruneMask* mask) {
  write_container(model_to_container(model, mask), path);
}

StoredModel load_model(const std::filesystem::path& path) { return model_from_container(read_container(path)); }

std::string model_config_to_json(const ModelConfig& config) { return detail::config_to_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("model config is not a JSON object");
  return detail::config_from_json(j);
}

}  // namespace tsfo
