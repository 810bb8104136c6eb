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

// Quantization and entropy coding of modulation maps.
//
// Maps of equal rank are stacked into one group (r × r × count), scanned
// channel-major (map by map, each row-major), uniformly quantized, and
// range-coded under the group's own empirical histogram, which travels in the
// stream header.

#ifndef GFIX_CODEC_HPP_
#define GFIX_CODEC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfix/common.hpp"
#include "gfix/linalg.hpp"
#include "gfix/mlora.hpp"
#include "gfix/range_coder.hpp"

namespace gfix {

struct ModulationGroup {
  std::size_t rank = 0;
  std::vector<Matrix> maps;
  std::vector<std::string> layer_ids;

  std::size_t count() const { return maps.size(); }

  // Channel-major scan: all of map 0 row-major, then map 1, ...
  std::vector<double> Flatten() const {
    std::vector<double> out;
    out.reserve(rank * rank * maps.size());
    for (const auto& m : maps) out.insert(out.end(), m.data().begin(), m.data().end());
    return out;
  }
};

inline ModulationGroup ConcatGroup(const std::vector<Matrix>& maps,
                                   const std::vector<std::string>& layer_ids) {
  if (maps.empty()) throw InvalidArgument("cannot concatenate an empty set of maps");
  if (layer_ids.size() != maps.size()) throw InvalidArgument("layer id count != map count");
  ModulationGroup g;
  g.rank = maps.front().rows();
  for (const auto& m : maps) {
    if (m.rows() != g.rank || m.cols() != g.rank) {
      throw InvalidArgument("mixed ranks in modulation group: " + std::to_string(g.rank) +
                            " vs " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
  }
  g.maps = maps;
  g.layer_ids = layer_ids;
  return g;
}

inline ModulationGroup ConcatGroup(const std::vector<MloraAdapter>& adapters) {
  std::vector<Matrix> maps;
  std::vector<std::string> ids;
  for (const auto& a : adapters) {
    maps.push_back(a.m_map);
    ids.push_back(a.layer_id);
  }
  return ConcatGroup(maps, ids);
}

inline std::vector<Matrix> SplitGroup(const ModulationGroup& g) { return g.maps; }

// Partitions adapters by rank. Groups appear in order of each rank's first
// occurrence; layer order inside a group is preserved.
inline std::vector<std::vector<std::size_t>> RankGroups(const std::vector<MloraAdapter>& adapters) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < adapters.size(); ++i) {
    const auto r = adapters[i].rank();
    auto it = std::find(ranks.begin(), ranks.end(), r);
    if (it == ranks.end()) {
      ranks.push_back(r);
      groups.push_back({i});
    } else {
      groups[static_cast<std::size_t>(it - ranks.begin())].push_back(i);
    }
  }
  return groups;
}

struct QuantizedGroup {
  std::size_t rank = 0;
  std::size_t count = 0;
  std::vector<std::string> layer_ids;
  double step = 1.0;
  std::vector<std::int32_t> symbols;  // rank·rank·count, channel-major

  bool operator==(const QuantizedGroup&) const = default;
};

// Round half away from zero.
inline std::int32_t QuantizeValue(double value, double step) {
  const double q = std::round(value / step);
  if (!(std::abs(q) <= static_cast<double>(std::numeric_limits<std::int32_t>::max()))) {
    throw InvalidArgument("quantized symbol out of 32-bit range");
  }
  return static_cast<std::int32_t>(q);
}

inline QuantizedGroup Quantize(const ModulationGroup& g, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("quantization step must be > 0");
  QuantizedGroup q;
  q.rank = g.rank;
  q.count = g.count();
  q.layer_ids = g.layer_ids;
  q.step = step;
  q.symbols.reserve(g.rank * g.rank * g.count());
  for (const auto& m : g.maps)
    for (double v : m.data()) q.symbols.push_back(QuantizeValue(v, step));
  return q;
}

inline ModulationGroup Dequantize(const QuantizedGroup& q) {
  if (q.symbols.size() != q.rank * q.rank * q.count) {
    throw InvalidArgument("symbol buffer length disagrees with rank and count");
  }
  ModulationGroup g;
  g.rank = q.rank;
  g.layer_ids = q.layer_ids;
  const std::size_t per = q.rank * q.rank;
  for (std::size_t c = 0; c < q.count; ++c) {
    std::vector<double> vals(per);
    for (std::size_t i = 0; i < per; ++i) vals[i] = q.step * q.symbols[c * per + i];
    g.maps.emplace_back(q.rank, q.rank, std::move(vals));
  }
  return g;
}

// Uniform in [-0.5, 0.5) from the top 53 bits of a 64-bit Mersenne twister
// draw; portable across standard libraries, unlike uniform_real_distribution.
class UniformNoise {
 public:
  explicit UniformNoise(std::uint64_t seed) : engine_(seed) {}
  double operator()() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53 - 0.5;
  }

 private:
  std::mt19937_64 engine_;
};

// Training-time stand-in for quantization: value + step·u, u ~ U(-0.5, 0.5).
inline ModulationGroup NoiseSimulate(const ModulationGroup& g, double step, std::uint64_t seed) {
  if (!(step > 0.0)) throw InvalidArgument("quantization step must be > 0");
  UniformNoise noise(seed);
  ModulationGroup out = g;
  for (auto& m : out.maps)
    for (double& v : m.data()) v += step * noise();
  return out;
}

struct EmpiricalPmf {
  std::vector<std::int32_t> alphabet;  // sorted, distinct
  std::vector<std::uint64_t> counts;   // parallel to alphabet, all > 0
  std::uint64_t total = 0;

  // Index of `s` in the alphabet, or -1.
  std::ptrdiff_t IndexOf(std::int32_t s) const {
    auto it = std::lower_bound(alphabet.begin(), alphabet.end(), s);
    if (it == alphabet.end() || *it != s) return -1;
    return it - alphabet.begin();
  }
  double Probability(std::int32_t s) const {
    const auto i = IndexOf(s);
    return i < 0 ? 0.0 : static_cast<double>(counts[static_cast<std::size_t>(i)]) / total;
  }
};

struct PmfOptions {
  // Adds one to every count over [smooth_lo, smooth_hi], so a table built on
  // one group can code another group's symbols in that range.
  bool laplace = false;
  std::int32_t smooth_lo = 0;
  std::int32_t smooth_hi = 0;
};

inline EmpiricalPmf BuildPmf(std::span<const std::int32_t> symbols, const PmfOptions& opts = {}) {
  if (symbols.empty()) throw InvalidArgument("cannot build a pmf from no symbols");
  std::vector<std::int32_t> sorted(symbols.begin(), symbols.end());
  std::sort(sorted.begin(), sorted.end());
  EmpiricalPmf pmf;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    pmf.alphabet.push_back(sorted[i]);
    pmf.counts.push_back(j - i);
    i = j;
  }
  if (opts.laplace) {
    if (opts.smooth_lo > opts.smooth_hi) throw InvalidArgument("empty smoothing range");
    if (static_cast<std::int64_t>(opts.smooth_hi) - opts.smooth_lo > (1 << 24)) {
      throw InvalidArgument("smoothing range too wide");
    }
    std::map<std::int32_t, std::uint64_t> merged;
    for (std::size_t i = 0; i < pmf.alphabet.size(); ++i) merged[pmf.alphabet[i]] = pmf.counts[i];
    for (std::int64_t s = opts.smooth_lo; s <= opts.smooth_hi; ++s) {
      merged[static_cast<std::int32_t>(s)] += 1;
    }
    pmf.alphabet.clear();
    pmf.counts.clear();
    for (const auto& [s, c] : merged) {
      pmf.alphabet.push_back(s);
      pmf.counts.push_back(c);
    }
  }
  for (auto c : pmf.counts) pmf.total += c;
  return pmf;
}

// Ideal code length Σ −log2(count(s)/total) in bits.
inline double RateEstimate(const EmpiricalPmf& pmf, std::span<const std::int32_t> symbols) {
  const double log_total = std::log2(static_cast<double>(pmf.total));
  double bits = 0.0;
  for (std::int32_t s : symbols) {
    const auto i = pmf.IndexOf(s);
    if (i < 0) {
      throw InvalidArgument("symbol " + std::to_string(s) +
                            " is absent from the pmf and no escape is configured");
    }
    bits += log_total - std::log2(static_cast<double>(pmf.counts[static_cast<std::size_t>(i)]));
  }
  return bits;
}

// N·H of the empirical distribution of `symbols`; equals
// RateEstimate(BuildPmf(symbols), symbols) up to summation order.
inline double SelfInformationBits(const EmpiricalPmf& pmf) {
  const double n = static_cast<double>(pmf.total);
  double bits = n * std::log2(n);
  for (auto c : pmf.counts) bits -= static_cast<double>(c) * std::log2(static_cast<double>(c));
  return std::max(bits, 0.0);
}

// Scales counts to integer frequencies summing to 2^precision, each >= 1.
// Rounding slack goes to (or is taken from) whichever symbols it costs least.
inline std::vector<std::uint32_t> QuantizeFrequencies(const std::vector<std::uint64_t>& counts,
                                                      int precision) {
  const std::uint64_t target = std::uint64_t{1} << precision;
  if (counts.empty() || counts.size() > target) {
    throw InvalidArgument("alphabet of " + std::to_string(counts.size()) +
                          " symbols does not fit precision " + std::to_string(precision));
  }
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  std::vector<std::uint32_t> f(counts.size());
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double scaled = static_cast<double>(counts[i]) * static_cast<double>(target) / total;
    f[i] = static_cast<std::uint32_t>(std::max<double>(1.0, std::floor(scaled)));
    sum += f[i];
  }
  if (sum < target) {
    // Flooring loses under one unit per symbol, so the remainder is smaller
    // than the alphabet. Hand it out one unit at a time to the symbol whose
    // code length shrinks the most: gain c·log2((f+1)/f).
    using Item = std::pair<double, std::size_t>;
    auto gain = [&](std::size_t i) {
      return static_cast<double>(counts[i]) * std::log2((f[i] + 1.0) / f[i]);
    };
    std::priority_queue<Item> heap;
    for (std::size_t i = 0; i < f.size(); ++i) heap.emplace(gain(i), i);
    std::uint64_t remaining = target - sum;
    while (remaining > 0) {
      auto [g, i] = heap.top();
      heap.pop();
      ++f[i];
      --remaining;
      heap.emplace(gain(i), i);
    }
  } else if (sum > target) {
    // Only possible through the >= 1 floor; take back from symbols whose code
    // length grows the least: loss c·log2(f/(f-1)).
    using Item = std::pair<double, std::size_t>;
    auto loss = [&](std::size_t i) {
      return f[i] <= 1 ? std::numeric_limits<double>::infinity()
                       : static_cast<double>(counts[i]) * std::log2(f[i] / (f[i] - 1.0));
    };
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t i = 0; i < f.size(); ++i) heap.emplace(loss(i), i);
    std::uint64_t excess = sum - target;
    while (excess > 0) {
      auto [l, i] = heap.top();
      heap.pop();
      --f[i];
      --excess;
      heap.emplace(loss(i), i);
    }
  }
  return f;
}

// Code length of the symbols under a quantized table, in bits.
inline double TableCodeLength(const std::vector<std::uint64_t>& counts,
                              const std::vector<std::uint32_t>& freqs, int precision) {
  double bits = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    bits += static_cast<double>(counts[i]) * (precision - std::log2(static_cast<double>(freqs[i])));
  return bits;
}

inline constexpr int kDefaultPrecision = 16;

// Picks the coarsest precision (16 bits unless the alphabet forces more)
// whose quantized table stays within 0.5% of the ideal code length.
inline FrequencyTable MakeFrequencyTable(const EmpiricalPmf& pmf) {
  const double ideal = SelfInformationBits(pmf);
  int precision = kDefaultPrecision;
  while (precision < FrequencyTable::kMaxPrecision &&
         (std::uint64_t{1} << precision) < 2 * pmf.counts.size()) {
    ++precision;
  }
  for (;; ++precision) {
    auto freqs = QuantizeFrequencies(pmf.counts, precision);
    const double coded = TableCodeLength(pmf.counts, freqs, precision);
    if (precision == FrequencyTable::kMaxPrecision || coded <= ideal * 1.005 + 32.0) {
      return FrequencyTable(std::move(freqs), precision);
    }
  }
}

inline std::vector<std::uint8_t> EncodeSymbols(std::span<const std::int32_t> symbols,
                                               const EmpiricalPmf& pmf,
                                               const FrequencyTable& table) {
  RangeEncoder enc;
  for (std::int32_t s : symbols) {
    const auto i = pmf.IndexOf(s);
    if (i < 0) throw InvalidArgument("symbol " + std::to_string(s) + " missing from table");
    enc.Encode(table, static_cast<std::size_t>(i));
  }
  return enc.Finish();
}

// GFXB bitstream (little-endian):
//
//   "GFXB" | u8 version | 3 reserved zero bytes | u16 len + producer string
//   | u32 group count | groups... | u32 CRC-32 of everything before it
//
// Each group:
//
//   u32 rank | u32 count | count × (u16 len + layer id) | f64 step
//   | u64 symbol count | u8 precision | u32 alphabet size
//   | varint zigzag(first symbol) | varint (gap − 1) for the rest
//   | varint frequency per symbol | u32 payload length | payload
inline constexpr std::uint8_t kBitstreamVersion = 1;

struct EncodedGroupInfo {
  double rate_estimate_bits = 0.0;
  std::size_t payload_bytes = 0;
  std::size_t table_bytes = 0;
  int precision = 0;
};

inline std::vector<std::uint8_t> EncodeBitstream(const std::vector<QuantizedGroup>& groups,
                                                 std::vector<EncodedGroupInfo>* info = nullptr) {
  detail::ByteWriter w;
  w.Str("GFXB");
  w.U8(kBitstreamVersion);
  w.U8(0);
  w.U8(0);
  w.U8(0);
  w.U16(static_cast<std::uint16_t>(kVersion.size()));
  w.Str(kVersion);
  w.U32(static_cast<std::uint32_t>(groups.size()));
  if (info) info->clear();
  for (const auto& g : groups) {
    if (g.rank == 0 || g.count == 0) throw InvalidArgument("empty quantized group");
    if (g.layer_ids.size() != g.count) throw InvalidArgument("layer id count != group count");
    if (g.symbols.size() != g.rank * g.rank * g.count) {
      throw InvalidArgument("symbol buffer length disagrees with rank and count");
    }
    if (!(g.step > 0.0) || !std::isfinite(g.step)) throw InvalidArgument("invalid step");
    w.U32(static_cast<std::uint32_t>(g.rank));
    w.U32(static_cast<std::uint32_t>(g.count));
    for (const auto& id : g.layer_ids) {
      if (id.size() > 0xFFFF) throw InvalidArgument("layer id too long");
      w.U16(static_cast<std::uint16_t>(id.size()));
      w.Str(id);
    }
    w.F64(g.step);
    w.U64(g.symbols.size());

    const EmpiricalPmf pmf = BuildPmf(g.symbols);
    const FrequencyTable table = MakeFrequencyTable(pmf);
    const std::size_t table_start = w.size();
    w.U8(static_cast<std::uint8_t>(table.precision()));
    w.U32(static_cast<std::uint32_t>(pmf.alphabet.size()));
    w.Varint(detail::ZigZag(pmf.alphabet.front()));
    for (std::size_t i = 1; i < pmf.alphabet.size(); ++i) {
      w.Varint(static_cast<std::uint64_t>(static_cast<std::int64_t>(pmf.alphabet[i]) -
                                          pmf.alphabet[i - 1] - 1));
    }
    for (auto f : table.freqs()) w.Varint(f);
    const std::size_t table_bytes = w.size() - table_start;

    const auto payload = EncodeSymbols(g.symbols, pmf, table);
    w.U32(static_cast<std::uint32_t>(payload.size()));
    w.Bytes(payload);
    if (info) {
      info->push_back({SelfInformationBits(pmf), payload.size(), table_bytes, table.precision()});
    }
  }
  w.U32(Crc32(w.bytes()));
  return std::move(w.bytes());
}

inline std::vector<QuantizedGroup> DecodeBitstream(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || r.Str(4) != "GFXB") {
    throw FormatError(FormatErrorCode::kBadMagic, "not a GFXB bitstream");
  }
  const std::uint8_t version = r.U8();
  if (version != kBitstreamVersion) {
    throw FormatError(FormatErrorCode::kVersionMismatch,
                      "bitstream version " + std::to_string(version) + ", expected " +
                          std::to_string(kBitstreamVersion));
  }
  for (int i = 0; i < 3; ++i) {
    if (r.U8() != 0) throw FormatError(FormatErrorCode::kHeaderCorrupt, "reserved bytes set");
  }
  r.Str(r.U16());  // producer
  const std::uint32_t group_count = r.U32();

  std::vector<QuantizedGroup> groups;
  for (std::uint32_t gi = 0; gi < group_count; ++gi) {
    QuantizedGroup g;
    g.rank = r.U32();
    g.count = r.U32();
    if (g.rank == 0 || g.count == 0) {
      throw FormatError(FormatErrorCode::kHeaderCorrupt, "empty group");
    }
    for (std::size_t i = 0; i < g.count; ++i) g.layer_ids.push_back(r.Str(r.U16()));
    g.step = r.F64();
    if (!(g.step > 0.0) || !std::isfinite(g.step)) {
      throw FormatError(FormatErrorCode::kHeaderCorrupt, "invalid step");
    }
    const std::uint64_t n = r.U64();
    if (n != static_cast<std::uint64_t>(g.rank) * g.rank * g.count) {
      throw FormatError(FormatErrorCode::kSymbolCountMismatch,
                        "group " + std::to_string(gi) + " declares " + std::to_string(n) +
                            " symbols for rank " + std::to_string(g.rank) + " x " +
                            std::to_string(g.count) + " maps");
    }
    const int precision = r.U8();
    const std::uint32_t alphabet_size = r.U32();
    if (alphabet_size == 0 || alphabet_size > n ||
        precision > FrequencyTable::kMaxPrecision ||
        alphabet_size > (std::uint64_t{1} << std::max(precision, 0))) {
      throw FormatError(FormatErrorCode::kPmfInconsistent, "bad alphabet size or precision");
    }
    std::vector<std::int32_t> alphabet(alphabet_size);
    std::int64_t prev = detail::UnZigZag(r.Varint());
    for (std::uint32_t i = 0; i < alphabet_size; ++i) {
      if (i > 0) {
        const std::uint64_t gap = r.Varint();
        if (gap > (std::uint64_t{1} << 33)) {
          throw FormatError(FormatErrorCode::kPmfInconsistent, "alphabet gap out of range");
        }
        prev += static_cast<std::int64_t>(gap) + 1;
      }
      if (prev < std::numeric_limits<std::int32_t>::min() ||
          prev > std::numeric_limits<std::int32_t>::max()) {
        throw FormatError(FormatErrorCode::kPmfInconsistent, "alphabet symbol out of range");
      }
      alphabet[i] = static_cast<std::int32_t>(prev);
    }
    std::vector<std::uint32_t> freqs(alphabet_size);
    for (auto& f : freqs) {
      const std::uint64_t v = r.Varint();
      if (v > (std::uint64_t{1} << FrequencyTable::kMaxPrecision)) {
        throw FormatError(FormatErrorCode::kPmfInconsistent, "frequency out of range");
      }
      f = static_cast<std::uint32_t>(v);
    }
    const FrequencyTable table(std::move(freqs), precision);
    const std::uint32_t payload_len = r.U32();
    const auto payload = r.Bytes(payload_len);

    RangeDecoder dec(payload);
    g.symbols.resize(n);
    for (auto& s : g.symbols) s = alphabet[dec.Decode(table)];
    if (!dec.AtEnd()) {
      throw FormatError(FormatErrorCode::kPmfInconsistent, "payload has unconsumed bytes");
    }
    groups.push_back(std::move(g));
  }
  const std::size_t body = r.pos();
  const std::uint32_t crc = r.U32();
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorCode::kHeaderCorrupt, "trailing bytes after bitstream");
  }
  if (Crc32(bytes.subspan(0, body)) != crc) {
    throw FormatError(FormatErrorCode::kChecksumMismatch, "bitstream checksum mismatch");
  }
  return groups;
}

inline void WriteBitstream(const std::vector<QuantizedGroup>& groups, const std::string& path) {
  detail::WriteFileAtomically(path, EncodeBitstream(groups));
}

inline std::vector<QuantizedGroup> ReadBitstream(const std::string& path) {
  return DecodeBitstream(detail::ReadFileBytes(path));
}

}  // namespace gfix

#endif  // GFIX_CODEC_HPP_
