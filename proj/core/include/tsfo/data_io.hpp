// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsfo/tensor.hpp"

namespace tsfo {

enum class SplitTag : std::uint8_t { kTrain = 0, kTest = 1 };

/// Labeled collection of equally-shaped series [C x T].
struct TimeSeriesDataset {
  std::string name;
  std::vector<Tensor> instances;
  std::vector<std::size_t> labels;        // dense class indices 0..K-1
  std::vector<std::string> label_names;   // class index -> original label
  std::vector<std::string> subjects;      // optional, one per instance
  std::vector<SplitTag> split;            // optional predefined split

  std::size_t size() const noexcept { return instances.size(); }
  std::size_t num_classes() const noexcept { return label_names.size(); }
  std::size_t channels() const { return instances.at(0).dim(0); }
  std::size_t length() const { return instances.at(0).dim(1); }
  bool has_subjects() const noexcept { return !subjects.empty(); }

  /// Throws InputError unless the dataset is nonempty, uniformly shaped and
  /// every label/metadata vector lines up.
  void validate() const;

  TimeSeriesDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const TimeSeriesDataset&, const TimeSeriesDataset&) = default;
};

// ---------------------------------------------------------------------------
// UCR-style delimited text: one series per line, label first, then T values,
// separated by tabs or commas. Numbers use '.' regardless of locale.
// ---------------------------------------------------------------------------

TimeSeriesDataset parse_ucr_delimited(std::string_view text, std::string name = "dataset");
TimeSeriesDataset load_ucr_delimited(const std::filesystem::path& path);

/// Loads a predefined TRAIN/TEST pair with one shared label map and split tags.
TimeSeriesDataset load_ucr_split(const std::filesystem::path& train_path,
                                 const std::filesystem::path& test_path);

/// Writes univariate datasets in the delimited format. Values are printed
/// with 9 significant digits so float payloads round-trip exactly.
void write_ucr_delimited(const TimeSeriesDataset& dataset, const std::filesystem::path& path,
                         char delimiter = '\t');
std::string format_ucr_delimited(const TimeSeriesDataset& dataset, char delimiter = '\t');

/// Expected shape of a dataset; unset fields are not checked.
struct DatasetManifest {
  std::optional<std::size_t> train_size;
  std::optional<std::size_t> test_size;
  std::optional<std::size_t> length;
  std::optional<std::size_t> num_classes;
};

/// Throws InputError listing every mismatch against `manifest`.
void validate_against_manifest(const TimeSeriesDataset& dataset, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// (x - min) / (max - min). A constant series maps to 0.5 everywhere.
std::vector<float> min_max_normalize(std::span<const float> series);
/// Row-wise (per channel) normalization of a [C x T] series.
Tensor min_max_normalize(const Tensor& series);

/// Linear interpolation at target_len uniformly spaced positions over the
/// original index range. Endpoints are preserved exactly.
std::vector<float> resample_linear(std::span<const float> series, std::size_t target_len);
Tensor resample_linear(const Tensor& series, std::size_t target_len);

struct WindowSpec {
  std::size_t length = 1;
  std::size_t stride = 1;
};

/// floor((T - w) / s) + 1; InputError unless 1 <= s and 1 <= w <= T.
std::size_t window_count(std::size_t series_length, const WindowSpec& spec);
std::vector<Tensor> segment_windows(const Tensor& series, const WindowSpec& spec);

/// Windows every instance; each window inherits its parent's label, subject
/// and split tag.
TimeSeriesDataset segment_dataset(const TimeSeriesDataset& dataset, const WindowSpec& spec);

/// Normalizes every series and resamples it to `target_len` when the length
/// differs.
TimeSeriesDataset preprocess(const TimeSeriesDataset& dataset, std::optional<std::size_t> target_len);

struct DatasetSplit {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
};

/// Partitions subjects (not instances) with a seeded shuffle. The train side
/// receives round(train_fraction * S) subjects, clamped to [1, S-1].
/// Without subject ids the dataset's predefined split is used (with a warning
/// on stderr); without either, InputError.
DatasetSplit subject_wise_split(const TimeSeriesDataset& dataset, double train_fraction,
                                std::uint64_t seed);

/// Splits by the predefined tags.
DatasetSplit predefined_split(const TimeSeriesDataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic device-like data
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t num_classes = 3;
  std::size_t per_class = 100;
  std::size_t length = 96;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Class c is a duty-cycled square wave with a class-specific period and
/// amplitude plus N(0, noise^2) noise. Instance i of every class belongs to
/// household i mod ceil(per_class / 5).
TimeSeriesDataset synth_generate(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// Binary dataset cache (TSFO container with a dataset manifest).
// ---------------------------------------------------------------------------

void save_dataset_cache(const TimeSeriesDataset& dataset, const std::filesystem::path& path);
TimeSeriesDataset load_dataset_cache(const std::filesystem::path& path);

}  // namespace tsfo
