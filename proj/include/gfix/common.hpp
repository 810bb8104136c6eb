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

#ifndef GFIX_COMMON_HPP_
#define GFIX_COMMON_HPP_

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gfix {

inline constexpr std::string_view kVersion = "gfix 0.1.0";

// Broad failure classes. The CLI maps each to its own exit code.
enum class ErrorCategory { kInvalidArgument, kFormat, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Precondition violations: bad shapes, out-of-range ranks, empty grids, ...
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorCategory::kInvalidArgument, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorCategory::kNumerical, what) {}
};

// Each way a binary container can be rejected gets its own code so callers
// (and tests) can tell corruption modes apart.
enum class FormatErrorCode {
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kShapePayloadMismatch,
  kHeaderCorrupt,
  kChecksumMismatch,
  kPmfInconsistent,
  kSymbolCountMismatch,
  kNonFinite,
  kIo,
};

inline const char* ToString(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::kBadMagic: return "bad magic";
    case FormatErrorCode::kVersionMismatch: return "version mismatch";
    case FormatErrorCode::kTruncated: return "truncated";
    case FormatErrorCode::kShapePayloadMismatch: return "shape/payload mismatch";
    case FormatErrorCode::kHeaderCorrupt: return "corrupt header";
    case FormatErrorCode::kChecksumMismatch: return "checksum mismatch";
    case FormatErrorCode::kPmfInconsistent: return "inconsistent pmf";
    case FormatErrorCode::kSymbolCountMismatch: return "symbol count mismatch";
    case FormatErrorCode::kNonFinite: return "non-finite value";
    case FormatErrorCode::kIo: return "i/o error";
  }
  return "unknown";
}

class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, const std::string& detail)
      : Error(ErrorCategory::kFormat,
              std::string(ToString(code)) + ": " + detail),
        code_(code) {}
  FormatErrorCode code() const noexcept { return code_; }

 private:
  FormatErrorCode code_;
};

inline std::uint32_t Crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in chunks so large payloads are fine.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t chunk =
        std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

// Little-endian append-only byte sink.
class ByteWriter {
 public:
  void U8(std::uint8_t v) { bytes_.push_back(v); }
  void U16(std::uint16_t v) { Uint(v, 2); }
  void U32(std::uint32_t v) { Uint(v, 4); }
  void U64(std::uint64_t v) { Uint(v, 8); }
  void F32(float v) { U32(std::bit_cast<std::uint32_t>(v)); }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }
  void Bytes(std::span<const std::uint8_t> b) {
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }
  void Str(std::string_view s) {
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void Varint(std::uint64_t v) {
    while (v >= 0x80) {
      bytes_.push_back(static_cast<std::uint8_t>(v | 0x80));
      v >>= 7;
    }
    bytes_.push_back(static_cast<std::uint8_t>(v));
  }
  void PatchU32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  std::size_t size() const { return bytes_.size(); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  void Uint(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked little-endian reader; running off the end is a kTruncated
// format error.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t U8() { return static_cast<std::uint8_t>(Uint(1)); }
  std::uint16_t U16() { return static_cast<std::uint16_t>(Uint(2)); }
  std::uint32_t U32() { return static_cast<std::uint32_t>(Uint(4)); }
  std::uint64_t U64() { return Uint(8); }
  float F32() { return std::bit_cast<float>(U32()); }
  double F64() { return std::bit_cast<double>(U64()); }
  std::span<const std::uint8_t> Bytes(std::size_t n) {
    Need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string Str(std::size_t n) {
    auto b = Bytes(n);
    return std::string(b.begin(), b.end());
  }
  std::uint64_t Varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = U8();
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if ((b & 0x80) == 0) return v;
    }
    throw FormatError(FormatErrorCode::kHeaderCorrupt, "varint too long");
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > remaining()) {
      throw FormatError(FormatErrorCode::kTruncated,
                        "need " + std::to_string(n) + " bytes at offset " +
                            std::to_string(pos_) + ", have " +
                            std::to_string(remaining()));
    }
  }
  std::uint64_t Uint(int width) {
    Need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint64_t ZigZag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}
inline std::int64_t UnZigZag(std::uint64_t v) {
  return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
}

inline std::vector<std::uint8_t> ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::kIo, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// Writes to a sibling temp file and renames it into place, so a failed write
// never leaves a partial file at `path`.
inline void WriteFileAtomically(const std::string& path,
                                std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::kIo, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::remove(tmp.c_str());
      throw FormatError(FormatErrorCode::kIo, "short write to " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw FormatError(FormatErrorCode::kIo, "cannot rename onto " + path);
  }
}

}  // namespace detail
}  // namespace gfix

#endif  // GFIX_COMMON_HPP_
