// Copyright 2026 The GFix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// GFXT tensor archive.
//
// Layout (little-endian):
//
//   offset  size  field
//   0       4     magic "GFXT"
//   4       1     format version (1)
//   5       3     reserved, zero
//   8       4     header length H in bytes
//   12      4     CRC-32 of the header bytes
//   16      H     UTF-8 JSON header
//   16+H    ...   tensor payloads, contiguous, in header order
//
// The JSON header is {"metadata": {k: v, ...}, "tensors": [{"name", "dtype",
// "shape", "offset"}, ...]} with offsets relative to the start of the payload
// region. An archive with no tensors and no metadata has H = 0 and is exactly
// 16 bytes long.

#ifndef GFIX_ARCHIVE_HPP_
#define GFIX_ARCHIVE_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfix/common.hpp"
#include "gfix/tensor.hpp"

namespace gfix {

inline constexpr std::uint8_t kArchiveVersion = 1;
inline constexpr std::size_t kArchiveFixedHeader = 16;

class TensorArchive {
 public:
  // Inserts or replaces by name; insertion order is preserved.
  void Put(Tensor t) {
    for (auto& e : entries_) {
      if (e.name() == t.name()) {
        e = std::move(t);
        return;
      }
    }
    entries_.push_back(std::move(t));
  }
  void Add(Tensor t) {
    if (Contains(t.name())) throw InvalidArgument("duplicate tensor name '" + t.name() + "'");
    entries_.push_back(std::move(t));
  }

  bool Contains(const std::string& name) const { return Find(name) != nullptr; }
  const Tensor* Find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name() == name) return &e;
    return nullptr;
  }
  const Tensor& Get(const std::string& name) const {
    const Tensor* t = Find(name);
    if (t == nullptr) throw InvalidArgument("no tensor named '" + name + "'");
    return *t;
  }

  const std::vector<Tensor>& entries() const { return entries_; }
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  bool operator==(const TensorArchive&) const = default;

 private:
  std::vector<Tensor> entries_;
  std::map<std::string, std::string> metadata_;
};

inline std::vector<std::uint8_t> SerializeArchive(const TensorArchive& archive) {
  std::string header;
  if (!archive.entries().empty() || !archive.metadata().empty()) {
    nlohmann::ordered_json j;
    j["metadata"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : archive.metadata()) j["metadata"][k] = v;
    j["tensors"] = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& t : archive.entries()) {
      j["tensors"].push_back({{"name", t.name()},
                              {"dtype", DTypeName(t.dtype())},
                              {"shape", t.shape()},
                              {"offset", offset}});
      offset += t.size() * DTypeWidth(t.dtype());
    }
    header = j.dump();
  }

  detail::ByteWriter w;
  w.Str("GFXT");
  w.U8(kArchiveVersion);
  w.U8(0);
  w.U8(0);
  w.U8(0);
  w.U32(static_cast<std::uint32_t>(header.size()));
  w.U32(Crc32({reinterpret_cast<const std::uint8_t*>(header.data()), header.size()}));
  w.Str(header);
  for (const auto& t : archive.entries()) {
    if (t.dtype() == DType::kF32) {
      for (double v : t.data()) w.F32(static_cast<float>(v));
    } else {
      for (double v : t.data()) w.F64(v);
    }
  }
  return std::move(w.bytes());
}

inline TensorArchive ParseArchive(std::span<const std::uint8_t> bytes,
                                  bool allow_non_finite = false) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.Str(4) != "GFXT") {
    throw FormatError(FormatErrorCode::kBadMagic, "not a GFXT archive");
  }
  const std::uint8_t version = r.U8();
  if (version != kArchiveVersion) {
    throw FormatError(FormatErrorCode::kVersionMismatch,
                      "archive version " + std::to_string(version) + ", expected " +
                          std::to_string(kArchiveVersion));
  }
  for (int i = 0; i < 3; ++i) {
    if (r.U8() != 0) throw FormatError(FormatErrorCode::kHeaderCorrupt, "reserved bytes set");
  }
  const std::uint32_t header_len = r.U32();
  const std::uint32_t header_crc = r.U32();
  const auto header_bytes = r.Bytes(header_len);
  if (Crc32(header_bytes) != header_crc) {
    throw FormatError(FormatErrorCode::kHeaderCorrupt, "header checksum mismatch");
  }

  TensorArchive archive;
  if (header_len == 0) {
    if (r.remaining() != 0) {
      throw FormatError(FormatErrorCode::kShapePayloadMismatch, "trailing bytes after empty header");
    }
    return archive;
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorCode::kHeaderCorrupt, e.what());
  }

  const auto payload = bytes.subspan(r.pos());
  std::uint64_t expected_offset = 0;
  try {
    for (const auto& [k, v] : j.at("metadata").items()) archive.metadata()[k] = v.get<std::string>();
    for (const auto& e : j.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto dtype_name = e.at("dtype").get<std::string>();
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      DType dtype;
      if (dtype_name == "f32") {
        dtype = DType::kF32;
      } else if (dtype_name == "f64") {
        dtype = DType::kF64;
      } else {
        throw FormatError(FormatErrorCode::kHeaderCorrupt, "unknown dtype '" + dtype_name + "'");
      }
      if (shape.empty()) throw FormatError(FormatErrorCode::kHeaderCorrupt, "empty shape");
      for (std::size_t d : shape) {
        if (d == 0) throw FormatError(FormatErrorCode::kHeaderCorrupt, "zero dimension");
      }
      if (offset != expected_offset) {
        throw FormatError(FormatErrorCode::kShapePayloadMismatch,
                          "tensor '" + name + "' offset " + std::to_string(offset) +
                              ", expected " + std::to_string(expected_offset));
      }
      const std::size_t count = ShapeProduct(shape);
      const std::size_t width = DTypeWidth(dtype);
      if (offset + count * width > payload.size()) {
        throw FormatError(FormatErrorCode::kTruncated, "payload of tensor '" + name + "'");
      }
      detail::ByteReader pr(payload.subspan(offset, count * width));
      std::vector<double> data(count);
      for (auto& v : data) v = dtype == DType::kF32 ? static_cast<double>(pr.F32()) : pr.F64();
      if (archive.Contains(name)) {
        throw FormatError(FormatErrorCode::kHeaderCorrupt, "duplicate tensor '" + name + "'");
      }
      archive.Add(Tensor(name, shape, dtype, std::move(data), allow_non_finite));
      expected_offset += count * width;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorCode::kHeaderCorrupt, e.what());
  }
  if (expected_offset != payload.size()) {
    throw FormatError(FormatErrorCode::kShapePayloadMismatch,
                      "payload is " + std::to_string(payload.size()) + " bytes, header describes " +
                          std::to_string(expected_offset));
  }
  return archive;
}

inline void WriteArchive(const TensorArchive& archive, const std::string& path) {
  detail::WriteFileAtomically(path, SerializeArchive(archive));
}

inline TensorArchive ReadArchive(const std::string& path, bool allow_non_finite = false) {
  const auto bytes = detail::ReadFileBytes(path);
  return ParseArchive(bytes, allow_non_finite);
}

}  // namespace gfix

#endif  // GFIX_ARCHIVE_HPP_
