// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// TSFO tensor container.
//
//   offset 0   4 bytes   magic "TSFO"
//   offset 4   u32 LE    format version (1)
//   offset 8   u64 LE    header length H in bytes
//   offset 16  H bytes   UTF-8 JSON header
//   offset 16+H          tensor payloads, little-endian, in manifest order
//
// The header is {"metadata": {...}, "tensors": [...], "version": 1} with one
// manifest entry per tensor: name, dtype ("f32" | "i8"), shape, offset and
// nbytes relative to the payload start, and for i8 tensors scale (array),
// zero_point and channel_axis. Keys are emitted sorted, so serialization is
// a pure function of the container value.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tsfo/tensor.hpp"

namespace tsfo {

inline constexpr char kContainerMagic[4] = {'T', 'S', 'F', 'O'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kContainerPreambleBytes = 16;

enum class DType { kF32, kI8 };

struct ContainerEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<float> f32;
  // i8 entries
  std::vector<std::int8_t> i8;
  std::vector<float> scale;
  std::int32_t zero_point = 0;
  int channel_axis = -1;

  std::size_t payload_bytes() const;

  static ContainerEntry from_tensor(std::string name, const Tensor& t);
  static ContainerEntry from_qtensor(std::string name, const QTensor& q);
  Tensor to_tensor() const;
  QTensor to_qtensor() const;

  friend bool operator==(const ContainerEntry&, const ContainerEntry&) = default;
};

struct Container {
  std::string metadata_json = "{}";  // must hold a JSON object
  std::vector<ContainerEntry> entries;

  const ContainerEntry* find(std::string_view name) const;
  const ContainerEntry& at(std::string_view name) const;

  friend bool operator==(const Container&, const Container&) = default;
};

/// Raw tensor bytes (elements x element size), excluding preamble and header.
std::size_t payload_bytes(const Container& container);

std::string serialize_container(const Container& container);
Container parse_container(std::string_view bytes);

void write_container(const Container& container, const std::filesystem::path& path);
Container read_container(const std::filesystem::path& path);

/// Size in bytes of the preamble plus JSON header of `container`.
std::size_t header_bytes(const Container& container);

}  // namespace tsfo
