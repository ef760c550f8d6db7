// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/quantization.hpp"

#include <algorithm>
#include <cmath>

#include "config_json.hpp"
#include "json.hpp"
#include "tsfo/error.hpp"
#include "tsfo/kernels.hpp"

namespace tsfo {

using nlohmann::json;

ScaleZeroPoint scale_zero_point(double min, double max, QuantMode mode) {
  if (!std::isfinite(min) || !std::isfinite(max)) throw InputError("quantization range must be finite");
  if (min > max) throw InputError("quantization range has min > max");
  if (min == max) return {static_cast<float>(std::max(std::abs(max), 1e-8) / 127.0), 0};
  if (mode == QuantMode::kSymmetric) {
    return {static_cast<float>(std::max(std::abs(min), std::abs(max)) / 127.0), 0};
  }
  const double scale = (max - min) / 255.0;
  const double zp = std::clamp(std::round(-128.0 - min / scale), -128.0, 127.0);
  return {static_cast<float>(scale), static_cast<std::int32_t>(zp)};
}

Tensor fake_quant(const Tensor& x, float scale, std::int32_t zero_point, std::vector<std::uint8_t>* pass_mask) {
  if (!(scale > 0.0f)) throw InputError("fake_quant scale must be positive");
  Tensor y(x.shape());
  if (pass_mask) pass_mask->assign(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::round(static_cast<double>(x[i]) / scale) + zero_point;
    const double q = std::clamp(r, -128.0, 127.0);
    if (pass_mask && q != r) (*pass_mask)[i] = 0;
    y[i] = static_cast<float>((q - zero_point) * static_cast<double>(scale));
  }
  return y;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

void ObservedRange::observe(std::span<const float> values) {
  if (values.empty()) return;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  merge({*lo, *hi, true});
}

void ObservedRange::merge(const ObservedRange& other) {
  if (!other.valid) return;
  if (!valid) {
    *this = other;
    return;
  }
  min = std::min(min, other.min);
  max = std::max(max, other.max);
}

void CalibrationObserver::on_activation(std::size_t site, Tensor& activation, std::vector<std::uint8_t>*) {
  if (site >= ranges_.size()) throw ShapeError("activation site out of range");
  ranges_[site].observe(activation.data());
}

std::vector<ObservedRange> calibrate(const TransformerModel& model, std::span<const Tensor> inputs) {
  if (inputs.empty()) throw InputError("calibration needs at least one instance");
  CalibrationObserver observer(num_activation_sites(model.config));
  ForwardOptions opts;
  opts.mode = Mode::kEval;
  opts.hook = &observer;
  for (const Tensor& x : inputs) forward(model, x, opts);
  return observer.ranges();
}

// ---------------------------------------------------------------------------
// Quantized models
// ---------------------------------------------------------------------------

namespace {

bool is_matrix(ParamRole role) { return is_prunable(role) || role == ParamRole::kClassifierWeight; }

QTensor quantize_param(const Tensor& t, ParamRole role) {
  if (is_matrix(role)) {
    const std::size_t rows = t.dim(0), inner = t.size() / rows;
    std::vector<float> scales(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      float m = 0.0f;
      for (std::size_t i = 0; i < inner; ++i) m = std::max(m, std::abs(t[r * inner + i]));
      scales[r] = scale_zero_point(-m, m, QuantMode::kSymmetric).scale;
    }
    return quantize_per_channel(t, scales, 0);
  }
  float m = 0.0f;
  for (float v : t.values()) m = std::max(m, std::abs(v));
  return quantize_linear(t, scale_zero_point(-m, m, QuantMode::kSymmetric).scale, 0);
}

}  // namespace

const QTensor& QuantizedModel::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw InputError("quantized model has no tensor '" + std::string(name) + "'");
}

TransformerModel QuantizedModel::dequantize() const {
  SeededRng rng(0);
  TransformerModel m = build_model(config, rng);
  auto params = parameters(m);
  if (params.size() != tensors.size()) throw ShapeError("quantized model does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != names[i] || params[i].tensor->shape() != tensors[i].shape) {
      throw ShapeError("quantized tensor '" + names[i] + "' does not match parameter '" + params[i].name + "'");
    }
    *params[i].tensor = dequantize_linear(tensors[i]);
  }
  return m;
}

QuantizedModel quantize_weights(const TransformerModel& model) {
  QuantizedModel q;
  q.config = model.config;
  q.activations = ActivationQuant::kDynamic;
  for (const auto& p : parameters(model)) {
    q.names.push_back(p.name);
    q.tensors.push_back(quantize_param(*p.tensor, p.role));
  }
  return q;
}

QuantizedModel quantize_static(const TransformerModel& model, std::span<const ObservedRange> observers) {
  const std::size_t sites = num_activation_sites(model.config);
  if (observers.size() != sites) {
    throw CalibrationError("expected " + std::to_string(sites) + " observers, got " +
                           std::to_string(observers.size()));
  }
  QuantizedModel q = quantize_weights(model);
  q.activations = ActivationQuant::kStatic;
  for (std::size_t s = 0; s < sites; ++s) {
    if (!observers[s].valid) {
      throw CalibrationError("activation site '" + site_name(model.config, s) + "' was never observed");
    }
    q.activation_params.push_back(scale_zero_point(observers[s].min, observers[s].max, QuantMode::kAffine));
  }
  return q;
}

Int8Backend::Int8Backend(const QuantizedModel& model, ActivationQuant activations)
    : activations_(activations), site_params_(model.activation_params) {
  if (activations == ActivationQuant::kStatic &&
      site_params_.size() != num_activation_sites(model.config)) {
    throw CalibrationError("static inference needs an activation table for every site");
  }
  auto load = [&](const std::string& w, const std::string& b) {
    Weights out{model.at(w), dequantize_linear(model.at(b))};
    const std::size_t rows = out.w.shape[0];
    out.w.shape = {rows, out.w.data.size() / rows};
    if (out.w.per_channel()) out.w.channel_axis = 0;
    return out;
  };
  embed_ = load("embed.weight", "embed.bias");
  classifier_ = load("classifier.weight", "classifier.bias");
  for (std::size_t l = 0; l < model.config.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    layers_.push_back({load(p + "attn.wq", p + "attn.bq"), load(p + "attn.wk", p + "attn.bk"),
                       load(p + "attn.wv", p + "attn.bv"), load(p + "attn.wo", p + "attn.bo"),
                       load(p + "ffn.w1", p + "ffn.b1"), load(p + "ffn.w2", p + "ffn.b2")});
  }
}

PreparedInput Int8Backend::prepare(std::size_t site, const Tensor& input) const {
  PreparedInput in{&input, std::nullopt};
  if (activations_ == ActivationQuant::kStatic) {
    const ScaleZeroPoint& p = site_params_.at(site);
    in.quantized = quantize_linear(input, p.scale, p.zero_point);
  } else {
    float m = 0.0f;
    for (float v : input.values()) m = std::max(m, std::abs(v));
    in.quantized = quantize_linear(input, scale_zero_point(-m, m, QuantMode::kSymmetric).scale, 0);
  }
  return in;
}

const Int8Backend::Weights& Int8Backend::weights(LinearOp op, std::size_t layer) const {
  switch (op) {
    case LinearOp::kEmbed:
      return embed_;
    case LinearOp::kClassifier:
      return classifier_;
    case LinearOp::kQuery:
      return layers_.at(layer)[0];
    case LinearOp::kKey:
      return layers_.at(layer)[1];
    case LinearOp::kValue:
      return layers_.at(layer)[2];
    case LinearOp::kOutput:
      return layers_.at(layer)[3];
    case LinearOp::kFfnIn:
      return layers_.at(layer)[4];
    case LinearOp::kFfnOut:
      return layers_.at(layer)[5];
  }
  throw ConfigError("unknown linear op");
}

Tensor Int8Backend::apply(LinearOp op, std::size_t layer, const PreparedInput& input) const {
  if (!input.quantized) throw ConfigError("int8 backend needs a prepared integer input");
  const Weights& w = weights(op, layer);
  return int8_linear(*input.quantized, w.w, &w.bias);
}

QuantizedInference::QuantizedInference(const QuantizedModel& model)
    : QuantizedInference(model, model.activations) {}

QuantizedInference::QuantizedInference(const QuantizedModel& model, ActivationQuant activations)
    : float_view_(model.dequantize()), backend_(model, activations) {}

Tensor QuantizedInference::forward(const Tensor& x) const {
  ForwardOptions opts;
  opts.mode = Mode::kEval;
  opts.backend = &backend_;
  return tsfo::forward(float_view_, x, opts);
}

std::size_t QuantizedInference::predict(const Tensor& x) const {
  const Tensor logits = forward(x);
  const auto& v = logits.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Tensor quantized_forward(const QuantizedModel& model, const Tensor& x) {
  return QuantizedInference(model).forward(x);
}

Tensor quantize_dynamic_forward(const QuantizedModel& model, const Tensor& x) {
  return QuantizedInference(model, ActivationQuant::kDynamic).forward(x);
}

double evaluate_quantized_accuracy(const QuantizedModel& model, const TimeSeriesDataset& dataset) {
  if (dataset.size() == 0) throw InputError("cannot evaluate on an empty dataset");
  const QuantizedInference inference(model);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (inference.predict(dataset.instances[i]) == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

// ---------------------------------------------------------------------------
// Memory and storage
// ---------------------------------------------------------------------------

QuantMemory quantized_memory(const QuantizedModel& model) {
  QuantMemory m;
  for (const QTensor& t : model.tensors) {
    m.payload_bytes += t.data.size();
    m.scale_bytes += 4 * (t.scale.size() + 1);
  }
  m.scale_bytes += 8 * model.activation_params.size();
  return m;
}

std::size_t float_memory(const TransformerModel& model) { return param_count(model) * sizeof(float); }

Container to_container(const QuantizedModel& model) {
  if (model.names.size() != model.tensors.size()) throw InputError("quantized model names and tensors differ");
  json meta;
  meta["kind"] = "quantized_model";
  meta["config"] = detail::config_to_json(model.config);
  meta["activations"] = model.activations == ActivationQuant::kStatic ? "static" : "runtime";
  json table = json::array();
  for (const ScaleZeroPoint& p : model.activation_params) {
    table.push_back({{"scale", static_cast<double>(p.scale)}, {"zero_point", p.zero_point}});
  }
  meta["activation_params"] = std::move(table);
  Container c;
  c.metadata_json = meta.dump();
  for (std::size_t i = 0; i < model.tensors.size(); ++i) {
    c.entries.push_back(ContainerEntry::from_qtensor(model.names[i], model.tensors[i]));
  }
  return c;
}

QuantizedModel quantized_from_container(const Container& c) {
  const json meta = json::parse(c.metadata_json);
  if (meta.value("kind", "") != "quantized_model") throw ParseError("container does not hold a quantized model");
  QuantizedModel q;
  q.config = detail::config_from_json(meta.value("config", json()));
  try {
    const std::string mode = meta.at("activations").get<std::string>();
    if (mode != "static" && mode != "runtime") throw ParseError("unknown activation mode '" + mode + "'");
    q.activations = mode == "static" ? ActivationQuant::kStatic : ActivationQuant::kDynamic;
    for (const json& p : meta.at("activation_params")) {
      q.activation_params.push_back(
          {static_cast<float>(p.at("scale").get<double>()), p.at("zero_point").get<std::int32_t>()});
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed quantized model header: ") + ex.what());
  }
  for (const ContainerEntry& e : c.entries) {
    q.names.push_back(e.name);
    q.tensors.push_back(e.to_qtensor());
  }
  q.dequantize();  // validates names and shapes against the config
  return q;
}

void save_quantized(const QuantizedModel& model, const std::filesystem::path& path) {
  write_container(to_container(model), path);
}

QuantizedModel load_quantized(const std::filesystem::path& path) {
  return quantized_from_container(read_container(path));
}

// ---------------------------------------------------------------------------
// Quantization-aware training
// ---------------------------------------------------------------------------

TransformerModel fake_quantize_weights(const TransformerModel& model) {
  TransformerModel out = model;
  for (auto& p : parameters(out)) *p.tensor = dequantize_linear(quantize_param(*p.tensor, p.role));
  return out;
}

void QatActivationHook::on_activation(std::size_t site, Tensor& activation, std::vector<std::uint8_t>* pass_mask) {
  if (site >= ranges_.size()) throw ShapeError("activation site out of range");
  ObservedRange current;
  current.observe(activation.data());
  ObservedRange& r = ranges_[site];
  if (!r.valid) {
    r = current;
  } else {
    r.min += momentum_ * (current.min - r.min);
    r.max += momentum_ * (current.max - r.max);
  }
  const ScaleZeroPoint p = scale_zero_point(r.min, r.max, QuantMode::kAffine);
  activation = fake_quant(activation, p.scale, p.zero_point, pass_mask);
}

void enable_qat(TrainConfig& config, QatActivationHook& hook) {
  config.forward_weights = fake_quantize_weights;
  config.activation_hook = &hook;
}

}  // namespace tsfo
