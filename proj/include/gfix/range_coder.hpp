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

// Byte-oriented range coder over a static frequency table.
//
// The coder keeps a 56-bit window of `low` (plus a carry bit) and a 56-bit
// `range`, renormalizing one byte at a time whenever range drops below 2^48.
// Carries are resolved with the cache / pending-0xFF scheme familiar from
// LZMA. With range >= 2^48 and frequency totals <= 2^30 the truncation in
// `range >> precision` costs at most 2^-18 of a bit per symbol.

#ifndef GFIX_RANGE_CODER_HPP_
#define GFIX_RANGE_CODER_HPP_

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "gfix/common.hpp"

namespace gfix {

// Cumulative frequency table. freq[i] > 0, Σ freq = 2^precision.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  FrequencyTable(std::vector<std::uint32_t> freqs, int precision)
      : freqs_(std::move(freqs)), precision_(precision) {
    if (precision_ < 1 || precision_ > kMaxPrecision) {
      throw FormatError(FormatErrorCode::kPmfInconsistent,
                        "frequency precision " + std::to_string(precision_));
    }
    cum_.assign(freqs_.size() + 1, 0);
    for (std::size_t i = 0; i < freqs_.size(); ++i) {
      if (freqs_[i] == 0) {
        throw FormatError(FormatErrorCode::kPmfInconsistent,
                          "zero frequency at index " + std::to_string(i));
      }
      cum_[i + 1] = cum_[i] + freqs_[i];
    }
    if (freqs_.empty() || cum_.back() != (std::uint64_t{1} << precision_)) {
      throw FormatError(FormatErrorCode::kPmfInconsistent, "frequencies do not sum to 2^precision");
    }
  }

  static constexpr int kMaxPrecision = 30;

  std::size_t size() const { return freqs_.size(); }
  int precision() const { return precision_; }
  std::uint32_t freq(std::size_t i) const { return freqs_[i]; }
  std::uint64_t cum(std::size_t i) const { return cum_[i]; }
  const std::vector<std::uint32_t>& freqs() const { return freqs_; }

  // Index i with cum[i] <= value < cum[i+1].
  std::size_t Lookup(std::uint64_t value) const {
    auto it = std::upper_bound(cum_.begin() + 1, cum_.end(), value);
    return static_cast<std::size_t>(it - cum_.begin()) - 1;
  }

 private:
  std::vector<std::uint32_t> freqs_;
  std::vector<std::uint64_t> cum_;
  int precision_ = 16;
};

namespace detail {
inline constexpr int kWindowBits = 56;
inline constexpr std::uint64_t kWindowMask = (std::uint64_t{1} << kWindowBits) - 1;
inline constexpr std::uint64_t kRenormBelow = std::uint64_t{1} << 48;
inline constexpr int kFlushBytes = 8;
}  // namespace detail

class RangeEncoder {
 public:
  void Encode(const FrequencyTable& table, std::size_t index) {
    const std::uint64_t r = range_ >> table.precision();
    const std::uint64_t start = table.cum(index);
    low_ += r * start;
    // The last symbol absorbs the slack left by the truncated division, so a
    // single-symbol table codes for free.
    if (index + 1 == table.size()) {
      range_ -= r * start;
    } else {
      range_ = r * table.freq(index);
    }
    while (range_ < detail::kRenormBelow) {
      range_ <<= 8;
      ShiftLow();
    }
  }

  std::vector<std::uint8_t> Finish() {
    for (int i = 0; i < detail::kFlushBytes; ++i) ShiftLow();
    return std::move(out_);
  }

 private:
  void ShiftLow() {
    const std::uint64_t carry = low_ >> detail::kWindowBits;
    if ((low_ & detail::kWindowMask) < (std::uint64_t{0xFF} << 48) || carry != 0) {
      std::uint8_t pending = cache_;
      do {
        out_.push_back(static_cast<std::uint8_t>(pending + carry));
        pending = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = static_cast<std::uint8_t>((low_ >> 48) & 0xFF);
    }
    ++cache_size_;
    low_ = (low_ & ((std::uint64_t{1} << 48) - 1)) << 8;
  }

  std::uint64_t low_ = 0;
  std::uint64_t range_ = detail::kWindowMask;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
    NextByte();  // the encoder's leading cache byte
    for (int i = 1; i < detail::kFlushBytes; ++i) code_ = (code_ << 8) | NextByte();
  }

  std::size_t Decode(const FrequencyTable& table) {
    const std::uint64_t r = range_ >> table.precision();
    const std::uint64_t total = std::uint64_t{1} << table.precision();
    const std::uint64_t value = std::min(code_ / r, total - 1);
    const std::size_t index = table.Lookup(value);
    const std::uint64_t start = table.cum(index);
    code_ -= r * start;
    if (index + 1 == table.size()) {
      range_ -= r * start;
    } else {
      range_ = r * table.freq(index);
    }
    if (code_ >= range_) {
      throw FormatError(FormatErrorCode::kPmfInconsistent, "range decoder lost sync");
    }
    while (range_ < detail::kRenormBelow) {
      range_ <<= 8;
      code_ = (code_ << 8) | NextByte();
    }
    return index;
  }

  // True once every payload byte has been consumed.
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  std::uint64_t NextByte() {
    if (pos_ >= in_.size()) {
      throw FormatError(FormatErrorCode::kPmfInconsistent, "range decoder ran past payload");
    }
    return in_[pos_++];
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint64_t code_ = 0;
  std::uint64_t range_ = detail::kWindowMask;
};

}  // namespace gfix

#endif  // GFIX_RANGE_CODER_HPP_
