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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "gfix/codec.hpp"
#include "test_util.hpp"

namespace gfix {
namespace {

using testing::RandomMatrix;
using testing::RandomSize;

QuantizedGroup MakeGroup(std::size_t rank, std::size_t count, std::vector<std::int32_t> symbols,
                         double step = 0.5) {
  QuantizedGroup q;
  q.rank = rank;
  q.count = count;
  q.step = step;
  for (std::size_t i = 0; i < count; ++i) q.layer_ids.push_back("layer" + std::to_string(i));
  q.symbols = std::move(symbols);
  return q;
}

// Sparse symbols: zero with probability `zero_prob`, else a small signed value.
std::vector<std::int32_t> SparseSymbols(std::size_t n, double zero_prob, std::mt19937_64& rng) {
  std::bernoulli_distribution nonzero(1.0 - zero_prob);
  std::uniform_int_distribution<int> mag(1, 3);
  std::vector<std::int32_t> s(n, 0);
  for (auto& v : s)
    if (nonzero(rng)) v = (rng() & 1 ? 1 : -1) * mag(rng);
  return s;
}

FormatErrorCode DecodeError(const std::vector<std::uint8_t>& bytes) {
  try {
    DecodeBitstream(bytes);
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode unexpectedly succeeded";
  return FormatErrorCode::kIo;
}

TEST(ConcatGroup, SingleMapAndScanOrder) {
  std::mt19937_64 rng(1);
  const Matrix m = RandomMatrix(3, 3, rng);
  const ModulationGroup one = ConcatGroup({m}, {"a"});
  EXPECT_EQ(one.count(), 1u);

  const Matrix m0 = Matrix::FromRows({{1, 2}, {3, 4}});
  const Matrix m1 = Matrix::FromRows({{5, 6}, {7, 8}});
  const Matrix m2 = Matrix::FromRows({{9, 10}, {11, 12}});
  const ModulationGroup g = ConcatGroup({m0, m1, m2}, {"a", "b", "c"});
  const QuantizedGroup q = Quantize(g, 1.0);
  ASSERT_EQ(q.symbols.size(), 12u);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(q.symbols[static_cast<std::size_t>(i)], i + 1);
}

TEST(ConcatGroup, SplitInverts) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = RandomSize(rng, 1, 8);
    std::vector<Matrix> maps;
    std::vector<std::string> ids;
    for (std::size_t i = 0, n = RandomSize(rng, 1, 6); i < n; ++i) {
      maps.push_back(RandomMatrix(r, r, rng));
      ids.push_back("l" + std::to_string(i));
    }
    EXPECT_EQ(SplitGroup(ConcatGroup(maps, ids)), maps);
  }
}

TEST(ConcatGroup, MixedRanksRejected) {
  EXPECT_THROW(ConcatGroup({Matrix(2, 2), Matrix(3, 3)}, {"a", "b"}), InvalidArgument);
  EXPECT_THROW(ConcatGroup({Matrix(2, 3)}, {"a"}), InvalidArgument);
  EXPECT_THROW(ConcatGroup(std::vector<Matrix>{}, {}), InvalidArgument);
}

TEST(Quantize, RoundingFixtures) {
  EXPECT_EQ(QuantizeValue(0.75, 0.5), 2);
  EXPECT_EQ(QuantizeValue(-0.75, 0.5), -2);
  EXPECT_EQ(QuantizeValue(0.25, 0.5), 1);
  EXPECT_EQ(QuantizeValue(0.2, 0.5), 0);
  const ModulationGroup g = ConcatGroup({Matrix::FromRows({{0.75}})}, {"a"});
  EXPECT_EQ(Dequantize(Quantize(g, 0.5)).maps[0](0, 0), 1.0);

  const ModulationGroup zeros = ConcatGroup({Matrix(4, 4)}, {"z"});
  for (double step : {1e-6, 0.3, 100.0})
    for (auto s : Quantize(zeros, step).symbols) EXPECT_EQ(s, 0);
}

TEST(Quantize, ErrorBoundedByHalfStep) {
  std::mt19937_64 rng(3);
  for (double step : {1e-3, 0.07, 0.5, 2.0}) {
    const ModulationGroup g =
        ConcatGroup({RandomMatrix(6, 6, rng), RandomMatrix(6, 6, rng)}, {"a", "b"});
    const ModulationGroup d = Dequantize(Quantize(g, step));
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_LE(testing::MaxAbsDiff(g.maps[k], d.maps[k]), step / 2 * (1 + 1e-12));
  }
}

TEST(Quantize, RejectsBadStepAndOverflow) {
  const ModulationGroup g = ConcatGroup({Matrix(2, 2, 1.0)}, {"a"});
  EXPECT_THROW(Quantize(g, 0.0), InvalidArgument);
  EXPECT_THROW(Quantize(g, -1.0), InvalidArgument);
  EXPECT_THROW(Quantize(g, 1e-12), InvalidArgument);
}

TEST(Quantize, LargerStepNeverIncreasesAlphabetOrRate) {
  std::mt19937_64 rng(4);
  const ModulationGroup g = ConcatGroup({RandomMatrix(16, 16, rng), RandomMatrix(16, 16, rng)},
                                        {"a", "b"});
  std::size_t prev_alpha = std::numeric_limits<std::size_t>::max();
  double prev_rate = std::numeric_limits<double>::infinity();
  for (double step = 0.01; step < 10.0; step *= 2.0) {
    const EmpiricalPmf pmf = BuildPmf(Quantize(g, step).symbols);
    EXPECT_LE(pmf.alphabet.size(), prev_alpha);
    EXPECT_LE(SelfInformationBits(pmf), prev_rate + 1e-9);
    prev_alpha = pmf.alphabet.size();
    prev_rate = SelfInformationBits(pmf);
  }
}

TEST(NoiseSimulate, TinyStepIsIdentity) {
  std::mt19937_64 rng(5);
  const ModulationGroup g = ConcatGroup({RandomMatrix(5, 5, rng)}, {"a"});
  const ModulationGroup n = NoiseSimulate(g, 1e-13, 7);
  EXPECT_LE(testing::MaxAbsDiff(g.maps[0], n.maps[0]), 1e-12);
}

TEST(NoiseSimulate, DeterministicAndCentered) {
  std::mt19937_64 rng(6);
  const ModulationGroup g = ConcatGroup({RandomMatrix(4, 4, rng)}, {"a"});
  EXPECT_EQ(NoiseSimulate(g, 0.3, 11).maps, NoiseSimulate(g, 0.3, 11).maps);
  EXPECT_NE(NoiseSimulate(g, 0.3, 11).maps, NoiseSimulate(g, 0.3, 12).maps);

  const ModulationGroup zeros = ConcatGroup({Matrix(1000, 1000)}, {"z"});
  const ModulationGroup n = NoiseSimulate(zeros, 0.25, 99);
  double sum = 0.0;
  for (double v : n.maps[0].data()) {
    EXPECT_GE(v / 0.25, -0.5);
    EXPECT_LT(v / 0.25, 0.5);
    sum += v / 0.25;
  }
  const double mean = sum / 1e6;
  EXPECT_GE(mean, -0.002);
  EXPECT_LE(mean, 0.002);
  EXPECT_THROW(NoiseSimulate(g, 0.0, 1), InvalidArgument);
}

TEST(RateEstimate, Fixtures) {
  const std::vector<std::int32_t> same(500, 7);
  EXPECT_EQ(RateEstimate(BuildPmf(same), same), 0.0);

  std::vector<std::int32_t> uniform;
  for (int i = 0; i < 1000; ++i) uniform.push_back(i % 4);
  EXPECT_NEAR(RateEstimate(BuildPmf(uniform), uniform), 2000.0, 1e-9);

  std::vector<std::int32_t> skew(900, 0);
  skew.insert(skew.end(), 100, 1);
  const double h = -(0.9 * std::log2(0.9) + 0.1 * std::log2(0.1));
  EXPECT_NEAR(RateEstimate(BuildPmf(skew), skew), 1000.0 * h, 1e-9);
  EXPECT_NEAR(RateEstimate(BuildPmf(skew), skew), 469.0, 0.5);
}

TEST(RateEstimate, MatchesSelfInformation) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = SparseSymbols(RandomSize(rng, 1, 5000), 0.8, rng);
    const EmpiricalPmf pmf = BuildPmf(s);
    EXPECT_NEAR(RateEstimate(pmf, s), SelfInformationBits(pmf), 1e-9 * (1 + s.size()));
  }
}

TEST(BuildPmf, AbsentSymbolAndSmoothing) {
  const std::vector<std::int32_t> s = {0, 0, 1};
  const EmpiricalPmf pmf = BuildPmf(s);
  const std::vector<std::int32_t> other = {2};
  EXPECT_THROW(RateEstimate(pmf, other), InvalidArgument);
  EXPECT_THROW(BuildPmf(std::vector<std::int32_t>{}), InvalidArgument);

  PmfOptions opts;
  opts.laplace = true;
  opts.smooth_lo = -2;
  opts.smooth_hi = 2;
  const EmpiricalPmf smooth = BuildPmf(s, opts);
  EXPECT_EQ(smooth.alphabet, (std::vector<std::int32_t>{-2, -1, 0, 1, 2}));
  EXPECT_EQ(smooth.counts, (std::vector<std::uint64_t>{1, 1, 3, 2, 1}));
  EXPECT_EQ(smooth.total, 8u);
  EXPECT_GT(RateEstimate(smooth, other), 0.0);
}

TEST(FrequencyTable, QuantizedFrequenciesAreValid) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = RandomSize(rng, 1, 3000);
    std::vector<std::uint64_t> counts(k);
    for (auto& c : counts) c = 1 + (rng() % (trial % 2 ? 5 : 100000));
    std::vector<std::int32_t> alpha(k);
    for (std::size_t i = 0; i < k; ++i) alpha[i] = static_cast<std::int32_t>(i);
    EmpiricalPmf full{alpha, counts, 0};
    for (auto c : counts) full.total += c;
    const FrequencyTable t = MakeFrequencyTable(full);
    std::uint64_t sum = 0;
    for (auto f : t.freqs()) {
      EXPECT_GE(f, 1u);
      sum += f;
    }
    EXPECT_EQ(sum, std::uint64_t{1} << t.precision());
  }
}

TEST(FrequencyTable, RejectsInconsistentTables) {
  EXPECT_THROW(FrequencyTable({1, 2}, 2), FormatError);
  EXPECT_THROW(FrequencyTable({0, 4}, 2), FormatError);
  EXPECT_THROW(FrequencyTable({}, 2), FormatError);
  EXPECT_THROW(FrequencyTable({1u << 31, 1u << 31}, 32), FormatError);
}

TEST(RangeCoder, RoundTripRandomTables) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int precision = static_cast<int>(RandomSize(rng, 1, 30));
    const std::size_t k = RandomSize(rng, 1, std::min<std::size_t>(64, 1u << precision));
    std::vector<std::uint64_t> counts(k);
    for (auto& c : counts) c = 1 + rng() % 1000;
    const FrequencyTable table(QuantizeFrequencies(counts, precision), precision);
    std::vector<std::size_t> msg(RandomSize(rng, 0, 2000));
    for (auto& m : msg) m = rng() % k;
    RangeEncoder enc;
    for (auto m : msg) enc.Encode(table, m);
    const auto bytes = enc.Finish();
    RangeDecoder dec(bytes);
    for (auto m : msg) ASSERT_EQ(dec.Decode(table), m);
    EXPECT_TRUE(dec.AtEnd());
  }
}

TEST(Bitstream, AllZeroLargeGroupIsTiny) {
  const QuantizedGroup g = MakeGroup(512, 20, std::vector<std::int32_t>(512 * 512 * 20, 0));
  std::vector<EncodedGroupInfo> info;
  const auto bytes = EncodeBitstream({g}, &info);
  EXPECT_LT(info[0].payload_bytes, 64u);
  EXPECT_EQ(DecodeBitstream(bytes)[0], g);
}

TEST(Bitstream, RoundTripAssortedAlphabets) {
  std::mt19937_64 rng(10);
  constexpr std::int32_t kMax = std::numeric_limits<std::int32_t>::max();
  std::vector<QuantizedGroup> groups;
  groups.push_back(MakeGroup(3, 2, SparseSymbols(18, 0.9, rng)));
  groups.push_back(MakeGroup(1, 1, {-5}));
  groups.push_back(MakeGroup(2, 1, {kMax, -kMax, 0, kMax}));
  std::vector<std::int32_t> neg(16 * 16 * 3);
  for (auto& v : neg) v = -static_cast<std::int32_t>(rng() % 40);
  groups.push_back(MakeGroup(16, 3, neg, 1e-4));
  std::vector<std::int32_t> wide(64 * 64);
  for (auto& v : wide) v = static_cast<std::int32_t>(rng() % 100000) - 50000;
  groups.push_back(MakeGroup(64, 1, wide, 3.0));
  const auto bytes = EncodeBitstream(groups);
  EXPECT_EQ(DecodeBitstream(bytes), groups);
  EXPECT_EQ(EncodeBitstream(groups), bytes);
}

TEST(Bitstream, PayloadWithinRateBound) {
  std::mt19937_64 rng(11);
  for (double zero_prob : {0.5, 0.9, 0.997}) {
    const QuantizedGroup g = MakeGroup(128, 4, SparseSymbols(128 * 128 * 4, zero_prob, rng));
    std::vector<EncodedGroupInfo> info;
    EncodeBitstream({g}, &info);
    const double est = info[0].rate_estimate_bits;
    const double bits = 8.0 * static_cast<double>(info[0].payload_bytes);
    EXPECT_LE(info[0].payload_bytes, est / 8 + 32);
    EXPECT_GE(bits, est);
    EXPECT_LE(bits, est + 256 + 0.01 * est);
  }
}

TEST(Bitstream, EmptyStreamRoundTrips) {
  EXPECT_TRUE(DecodeBitstream(EncodeBitstream({})).empty());
}

TEST(Bitstream, RejectsInvalidGroups) {
  EXPECT_THROW(EncodeBitstream({MakeGroup(2, 1, {0, 0, 0})}), InvalidArgument);
  EXPECT_THROW(EncodeBitstream({MakeGroup(2, 1, {0, 0, 0, 0}, 0.0)}), InvalidArgument);
}

class BitstreamCorruption : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(12);
    group_ = MakeGroup(8, 2, SparseSymbols(128, 0.7, rng));
    bytes_ = EncodeBitstream({group_});
  }
  // Offset of the u64 symbol count of the first group.
  std::size_t SymbolCountOffset() const {
    std::size_t off = 4 + 4 + 2 + kVersion.size() + 4 + 4 + 4;
    for (const auto& id : group_.layer_ids) off += 2 + id.size();
    return off + 8;
  }
  QuantizedGroup group_;
  std::vector<std::uint8_t> bytes_;
};

TEST_F(BitstreamCorruption, DistinctErrorCodes) {
  auto bad = bytes_;
  bad[0] = 'X';
  EXPECT_EQ(DecodeError(bad), FormatErrorCode::kBadMagic);

  bad = bytes_;
  bad[4] = 2;
  EXPECT_EQ(DecodeError(bad), FormatErrorCode::kVersionMismatch);

  bad = bytes_;
  bad[SymbolCountOffset()] ^= 1;
  EXPECT_EQ(DecodeError(bad), FormatErrorCode::kSymbolCountMismatch);

  bad = bytes_;
  bad[SymbolCountOffset() + 8] = 31;  // precision byte
  EXPECT_EQ(DecodeError(bad), FormatErrorCode::kPmfInconsistent);

  bad = bytes_;
  bad.resize(bad.size() - 6);
  EXPECT_EQ(DecodeError(bad), FormatErrorCode::kTruncated);

  bad = bytes_;
  bad.back() ^= 0x40;
  EXPECT_EQ(DecodeError(bad), FormatErrorCode::kChecksumMismatch);
}

TEST_F(BitstreamCorruption, EveryPrefixIsRejected) {
  for (std::size_t n = 0; n < bytes_.size(); ++n) {
    std::vector<std::uint8_t> prefix(bytes_.begin(), bytes_.begin() + static_cast<long>(n));
    EXPECT_THROW(DecodeBitstream(prefix), FormatError) << n;
  }
}

TEST_F(BitstreamCorruption, EveryByteFlipIsRejected) {
  for (std::size_t i = 0; i < bytes_.size(); ++i) {
    auto bad = bytes_;
    bad[i] ^= 0x01;
    EXPECT_THROW(DecodeBitstream(bad), FormatError) << i;
  }
}

TEST(Bitstream, FileRoundTrip) {
  const auto dir = testing::ScratchDir("codec");
  std::mt19937_64 rng(13);
  const std::vector<QuantizedGroup> groups = {MakeGroup(4, 3, SparseSymbols(48, 0.5, rng))};
  const std::string path = (dir / "s.gfxb").string();
  WriteBitstream(groups, path);
  EXPECT_EQ(ReadBitstream(path), groups);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  try {
    ReadBitstream((dir / "missing.gfxb").string());
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrorCode::kIo);
  }
}

}  // namespace
}  // namespace gfix
