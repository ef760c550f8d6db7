// Copyright 2026 The tsfo Authors.
// SPDX-License-Identifier: Apache-2.0

#include "tsfo/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsfo/error.hpp"

namespace tsfo {

using nlohmann::json;

namespace {

const char* dtype_name(DType t) { return t == DType::kF32 ? "f32" : "i8"; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::kF32;
  if (s == "i8") return DType::kI8;
  throw ParseError("unknown tensor element type '" + s + "'");
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

json manifest_entry(const ContainerEntry& e, std::size_t offset) {
  json j;
  j["name"] = e.name;
  j["dtype"] = dtype_name(e.dtype);
  j["shape"] = e.shape;
  j["offset"] = offset;
  j["nbytes"] = e.payload_bytes();
  if (e.dtype == DType::kI8) {
    json scales = json::array();
    for (float s : e.scale) scales.push_back(static_cast<double>(s));
    j["scale"] = std::move(scales);
    j["zero_point"] = e.zero_point;
    j["channel_axis"] = e.channel_axis;
  }
  return j;
}

std::string header_json(const Container& c) {
  json header;
  json meta = json::parse(c.metadata_json, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw InputError("container metadata must be a JSON object");
  header["metadata"] = std::move(meta);
  header["version"] = kContainerVersion;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const ContainerEntry& e : c.entries) {
    tensors.push_back(manifest_entry(e, offset));
    offset += e.payload_bytes();
  }
  header["tensors"] = std::move(tensors);
  return header.dump();
}

void check_entry(const ContainerEntry& e) {
  const std::size_t n = shape_numel(e.shape);
  if (e.shape.empty()) throw InputError("tensor '" + e.name + "' has no shape");
  if (e.dtype == DType::kF32 && e.f32.size() != n) {
    throw InputError("tensor '" + e.name + "' payload does not match its shape");
  }
  if (e.dtype == DType::kI8) {
    if (e.i8.size() != n) throw InputError("tensor '" + e.name + "' payload does not match its shape");
    e.to_qtensor().validate();
  }
}

}  // namespace

std::size_t ContainerEntry::payload_bytes() const {
  return dtype == DType::kF32 ? f32.size() * sizeof(float) : i8.size();
}

ContainerEntry ContainerEntry::from_tensor(std::string name, const Tensor& t) {
  ContainerEntry e;
  e.name = std::move(name);
  e.dtype = DType::kF32;
  e.shape = t.shape();
  e.f32 = t.values();
  return e;
}

ContainerEntry ContainerEntry::from_qtensor(std::string name, const QTensor& q) {
  q.validate();
  ContainerEntry e;
  e.name = std::move(name);
  e.dtype = DType::kI8;
  e.shape = q.shape;
  e.i8 = q.data;
  e.scale = q.scale;
  e.zero_point = q.zero_point;
  e.channel_axis = q.channel_axis;
  return e;
}

Tensor ContainerEntry::to_tensor() const {
  if (dtype != DType::kF32) throw InputError("tensor '" + name + "' is not f32");
  return Tensor(shape, f32);
}

QTensor ContainerEntry::to_qtensor() const {
  if (dtype != DType::kI8) throw InputError("tensor '" + name + "' is not i8");
  QTensor q;
  q.shape = shape;
  q.data = i8;
  q.scale = scale;
  q.zero_point = zero_point;
  q.channel_axis = channel_axis;
  return q;
}

const ContainerEntry* Container::find(std::string_view name) const {
  for (const ContainerEntry& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const ContainerEntry& Container::at(std::string_view name) const {
  const ContainerEntry* e = find(name);
  if (!e) throw ParseError("container has no tensor '" + std::string(name) + "'");
  return *e;
}

std::size_t payload_bytes(const Container& container) {
  std::size_t n = 0;
  for (const ContainerEntry& e : container.entries) n += e.payload_bytes();
  return n;
}

std::size_t header_bytes(const Container& container) {
  return kContainerPreambleBytes + header_json(container).size();
}

std::string serialize_container(const Container& c) {
  for (const ContainerEntry& e : c.entries) check_entry(e);
  const std::string header = header_json(c);
  std::string out;
  out.reserve(kContainerPreambleBytes + header.size() + payload_bytes(c));
  out.append(kContainerMagic, 4);
  put_u32(out, kContainerVersion);
  put_u64(out, header.size());
  out += header;
  for (const ContainerEntry& e : c.entries) {
    if (e.dtype == DType::kF32) {
      for (float v : e.f32) put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      out.append(reinterpret_cast<const char*>(e.i8.data()), e.i8.size());
    }
  }
  return out;
}

Container parse_container(std::string_view bytes) {
  if (bytes.size() < kContainerPreambleBytes || std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw ParseError("not a TSFO container (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kContainerVersion) {
    throw ParseError("unsupported TSFO version " + std::to_string(version));
  }
  const std::uint64_t header_len = get_le(bytes, 8, 8);
  if (header_len > bytes.size() - kContainerPreambleBytes) throw ParseError("truncated TSFO header");
  json header = json::parse(bytes.substr(kContainerPreambleBytes, header_len), nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw ParseError("TSFO header is not valid JSON");

  Container c;
  c.metadata_json = header.value("metadata", json::object()).dump();
  const std::size_t base = kContainerPreambleBytes + header_len;
  const std::string_view payload = bytes.substr(base);
  std::size_t expected_offset = 0;
  try {
    for (const json& j : header.at("tensors")) {
      ContainerEntry e;
      e.name = j.at("name").get<std::string>();
      e.dtype = parse_dtype(j.at("dtype").get<std::string>());
      e.shape = j.at("shape").get<Shape>();
      const auto offset = j.at("offset").get<std::size_t>();
      const auto nbytes = j.at("nbytes").get<std::size_t>();
      const std::size_t n = shape_numel(e.shape);
      const std::size_t want = e.dtype == DType::kF32 ? n * sizeof(float) : n;
      if (offset != expected_offset || nbytes != want) {
        throw ParseError("tensor '" + e.name + "' has an inconsistent manifest entry");
      }
      if (offset + nbytes > payload.size()) throw ParseError("tensor '" + e.name + "' is truncated");
      if (e.dtype == DType::kF32) {
        e.f32.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          e.f32[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload, offset + 4 * i, 4)));
        }
      } else {
        e.i8.resize(n);
        std::memcpy(e.i8.data(), payload.data() + offset, n);
        for (const json& s : j.at("scale")) e.scale.push_back(static_cast<float>(s.get<double>()));
        e.zero_point = j.at("zero_point").get<std::int32_t>();
        e.channel_axis = j.at("channel_axis").get<int>();
        e.to_qtensor().validate();
      }
      expected_offset += nbytes;
      c.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed TSFO manifest: ") + ex.what());
  }
  if (expected_offset != payload.size()) throw ParseError("TSFO payload has trailing bytes");
  return c;
}

void write_container(const Container& container, const std::filesystem::path& path) {
  const std::string bytes = serialize_container(container);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_container(ss.str());
}

}  // namespace tsfo
