// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfo/data_io.hpp"
#include "tsfo/mask.hpp"
#include "tsfo/model.hpp"

namespace tsfo {

/// One gradient tensor per model parameter. Stored as a model-shaped value
/// so names and shapes mirror the parameters by construction.
struct GradientSet {
  TransformerModel grads;

  static GradientSet zeros_like(const TransformerModel& model);

  Tensor& operator[](std::string_view name);
  const Tensor& operator[](std::string_view name) const;

  double global_norm() const;
  void scale(float factor);
  void add(const GradientSet& other);
  bool all_finite() const;
};

/// Softmax cross-entropy of one instance. When `grad` is non-null it receives
/// softmax(logits) - onehot(label). Throws InputError for a bad label.
double cross_entropy(const Tensor& logits, std::size_t label, Tensor* grad = nullptr);

/// Reverse-mode pass for one recorded forward. Accumulates d(loss)/d(param)
/// into `grads` given the upstream logit gradient.
void backward_instance(const TransformerModel& model, const ForwardCache& cache,
                       const Tensor& dlogits, GradientSet& grads);

struct Example {
  const Tensor* input;
  std::size_t label;
};

struct BatchResult {
  GradientSet grads;  // mean over the batch
  double loss = 0.0;  // mean over the batch
  std::size_t correct = 0;
};

struct BackwardOptions {
  Mode mode = Mode::kTrain;
  SeededRng* dropout_rng = nullptr;
  ActivationHook* hook = nullptr;
};

/// Mean cross-entropy gradients of a batch. Instances are processed in order
/// and reduced sequentially, so results are bit-reproducible.
BatchResult backward(const TransformerModel& model, std::span<const Example> batch,
                     const BackwardOptions& options = {});

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  AdamConfig config;
  GradientSet m;
  GradientSet v;
  std::uint64_t step = 0;

  static AdamState init(const TransformerModel& model, AdamConfig config = {});
};

/// Bias-corrected Adam update of every parameter with learning rate `lr`.
void adam_step(AdamState& state, TransformerModel& model, const GradientSet& grads, float lr);

struct CosineSchedule {
  float lr_max = 1e-3f;
  float lr_min = 1e-5f;
  std::uint64_t total_steps = 1;

  void validate() const;
};

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * t / T_max)) / 2 for t in
/// [0, T_max]; InputError outside.
float cosine_lr(const CosineSchedule& schedule, std::uint64_t t);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// Replaces the forward-pass weights each step (e.g. fake quantization).
/// Gradients computed through the transformed weights are applied to the
/// float master weights unchanged (straight-through).
using WeightTransform = std::function<TransformerModel(const TransformerModel&)>;

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  float lr_max = 1e-3f;
  float lr_min = 1e-5f;
  AdamConfig adam;
  float clip_norm = 1.0f;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  const TimeSeriesDataset* validation = nullptr;

  // Called after every optimizer step (pruning masks).
  std::function<void(TransformerModel&)> after_step;
  // Forward-pass weight transform and activation hook (QAT).
  WeightTransform forward_weights;
  ActivationHook* activation_hook = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;
  float lr = 0.0f;  // learning rate of the epoch's last step
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// "epoch,lr,train_loss,train_acc,val_acc"; val_acc is empty when no
  /// validation set was given.
  std::string to_csv() const;
};

/// Mini-batch Adam training with seeded shuffling and cosine annealing over
/// all steps. train_acc is the eval-mode accuracy on the training set at the
/// end of each epoch.
TrainHistory train(TransformerModel& model, const TimeSeriesDataset& dataset,
                   const TrainConfig& config);

/// train() with `masks` re-applied after every step so sparsity is invariant.
TrainHistory fine_tune(TransformerModel& model, const PruneMask& masks,
                       const TimeSeriesDataset& dataset, std::size_t epochs,
                       TrainConfig config);

/// Eval-mode top-1 accuracy in [0, 1].
double evaluate_accuracy(const TransformerModel& model, const TimeSeriesDataset& dataset);

}  // namespace tsfo
