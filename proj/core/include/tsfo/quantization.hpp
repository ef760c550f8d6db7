// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsfo/container.hpp"
#include "tsfo/model.hpp"
#include "tsfo/training.hpp"

namespace tsfo {

/// Bit width is fixed at 8, so the 32-bit to 8-bit factor is 4.
inline constexpr int kQuantBits = 8;
inline constexpr double kQuantFactor = 32.0 / kQuantBits;

enum class QuantMode { kAffine, kSymmetric };

struct ScaleZeroPoint {
  float scale = 1.0f;
  std::int32_t zero_point = 0;

  friend bool operator==(const ScaleZeroPoint&, const ScaleZeroPoint&) = default;
};

/// Affine: scale = (max - min) / 255, zero_point = round(-128 - min / scale)
/// clamped to [-128, 127]. Symmetric: scale = max(|min|, |max|) / 127,
/// zero_point = 0. min == max falls back to symmetric with scale
/// max(|max|, 1e-8) / 127. Throws InputError when min > max.
ScaleZeroPoint scale_zero_point(double min, double max, QuantMode mode);

/// Quantize-dequantize in float. When `pass_mask` is non-null it receives 1
/// where the value was inside the representable range (gradient passes
/// straight through) and 0 where it was clamped.
Tensor fake_quant(const Tensor& x, float scale, std::int32_t zero_point,
                  std::vector<std::uint8_t>* pass_mask = nullptr);

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct ObservedRange {
  double min = 0.0;
  double max = 0.0;
  bool valid = false;  // false until the first observation

  void observe(std::span<const float> values);
  void merge(const ObservedRange& other);

  friend bool operator==(const ObservedRange&, const ObservedRange&) = default;
};

/// Running min/max for every activation site.
class CalibrationObserver final : public ActivationHook {
 public:
  explicit CalibrationObserver(std::size_t num_sites) : ranges_(num_sites) {}
  void on_activation(std::size_t site, Tensor& activation, std::vector<std::uint8_t>* pass_mask) override;
  const std::vector<ObservedRange>& ranges() const { return ranges_; }

 private:
  std::vector<ObservedRange> ranges_;
};

/// Eval-mode forwards over `inputs`, recording min/max at every activation
/// site. Throws InputError when `inputs` is empty.
std::vector<ObservedRange> calibrate(const TransformerModel& model, std::span<const Tensor> inputs);

// ---------------------------------------------------------------------------
// Quantized models
// ---------------------------------------------------------------------------

enum class ActivationQuant { kStatic, kDynamic };

/// Every parameter of the source model as int8: weight matrices symmetric per
/// output channel (axis 0), biases and norm parameters symmetric per tensor.
/// Static models also carry one affine (scale, zero point) per activation
/// site; dynamic models compute activation scales per call.
struct QuantizedModel {
  ModelConfig config;
  ActivationQuant activations = ActivationQuant::kDynamic;
  std::vector<std::string> names;  // canonical parameter order
  std::vector<QTensor> tensors;
  std::vector<ScaleZeroPoint> activation_params;  // static only, one per site

  const QTensor& at(std::string_view name) const;

  /// Float model whose parameters are the dequantized int8 values.
  TransformerModel dequantize() const;

  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

/// Weight-only quantization (dynamic activations).
QuantizedModel quantize_weights(const TransformerModel& model);

/// Weights plus fixed activation parameters from calibration. Throws
/// CalibrationError if any site was never observed.
QuantizedModel quantize_static(const TransformerModel& model, std::span<const ObservedRange> observers);

/// Integer backend for the forward graph. Activations are quantized per site
/// (static table or per-call symmetric scale), multiplied with int8_linear
/// and dequantized; norms, softmax, attention products and residuals stay in
/// float.
class Int8Backend final : public LinearBackend {
 public:
  Int8Backend(const QuantizedModel& model, ActivationQuant activations);
  PreparedInput prepare(std::size_t site, const Tensor& input) const override;
  Tensor apply(LinearOp op, std::size_t layer, const PreparedInput& input) const override;

 private:
  struct Weights {
    QTensor w;  // [out x in], per-row scales
    Tensor bias;
  };
  const Weights& weights(LinearOp op, std::size_t layer) const;

  ActivationQuant activations_;
  std::vector<ScaleZeroPoint> site_params_;
  Weights embed_;
  Weights classifier_;
  std::vector<std::vector<Weights>> layers_;  // q, k, v, o, ffn_in, ffn_out
};

/// Prepared quantized inference: dequantized float view for the norm
/// parameters plus an integer backend. Immutable after construction.
class QuantizedInference {
 public:
  explicit QuantizedInference(const QuantizedModel& model);
  QuantizedInference(const QuantizedModel& model, ActivationQuant activations);

  Tensor forward(const Tensor& x) const;
  std::size_t predict(const Tensor& x) const;
  const TransformerModel& float_view() const { return float_view_; }

 private:
  TransformerModel float_view_;
  Int8Backend backend_;
};

/// One-shot conveniences. The dynamic variant ignores any static table.
Tensor quantized_forward(const QuantizedModel& model, const Tensor& x);
Tensor quantize_dynamic_forward(const QuantizedModel& model, const Tensor& x);

double evaluate_quantized_accuracy(const QuantizedModel& model, const TimeSeriesDataset& dataset);

// ---------------------------------------------------------------------------
// Memory and storage
// ---------------------------------------------------------------------------

struct QuantMemory {
  std::size_t payload_bytes = 0;  // int8 elements
  std::size_t scale_bytes = 0;    // scale and zero-point tables (4 bytes each)

  std::size_t total() const { return payload_bytes + scale_bytes; }
};

QuantMemory quantized_memory(const QuantizedModel& model);

/// FP32 parameter payload: 4 bytes per parameter.
std::size_t float_memory(const TransformerModel& model);

Container to_container(const QuantizedModel& model);
QuantizedModel quantized_from_container(const Container& container);
void save_quantized(const QuantizedModel& model, const std::filesystem::path& path);
QuantizedModel load_quantized(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Quantization-aware training
// ---------------------------------------------------------------------------

/// Weight transform for TrainConfig::forward_weights: every parameter goes
/// through the same int8 round trip as quantize_weights.
TransformerModel fake_quantize_weights(const TransformerModel& model);

/// Activation fake quantization during training. Ranges follow an
/// exponential moving average of per-instance min/max; values outside the
/// tracked range are clamped and block the gradient.
class QatActivationHook final : public ActivationHook {
 public:
  explicit QatActivationHook(std::size_t num_sites, double momentum = 0.01)
      : ranges_(num_sites), momentum_(momentum) {}
  void on_activation(std::size_t site, Tensor& activation, std::vector<std::uint8_t>* pass_mask) override;
  const std::vector<ObservedRange>& ranges() const { return ranges_; }

 private:
  std::vector<ObservedRange> ranges_;
  double momentum_;
};

/// Sets config.forward_weights and config.activation_hook for QAT. The hook
/// must outlive training.
void enable_qat(TrainConfig& config, QatActivationHook& hook);

}  // namespace tsfo
