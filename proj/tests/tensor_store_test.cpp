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
#include <limits>
#include <random>

#include "gfix/archive.hpp"
#include "gfix/tensor.hpp"
#include "test_util.hpp"

namespace gfix {
namespace {

std::vector<double> Iota(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return v;
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor("t", {}, DType::kF64, {}), InvalidArgument);
  EXPECT_THROW(Tensor("t", {2, 0}, DType::kF64, {}), InvalidArgument);
  EXPECT_THROW(Tensor("t", {2, 2}, DType::kF64, {1, 2, 3}), InvalidArgument);
}

TEST(Tensor, RejectsNonFiniteUnlessPermitted) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Tensor("t", {2}, DType::kF64, {1.0, nan}), FormatError);
  EXPECT_NO_THROW(Tensor("t", {2}, DType::kF64, {1.0, nan}, /*allow_non_finite=*/true));
}

TEST(Tensor, F32StorageRoundsElements) {
  Tensor t("t", {1}, DType::kF32, {0.1});
  EXPECT_EQ(t.data()[0], static_cast<double>(0.1f));
}

TEST(Reshape2d, DimensionArithmetic) {
  Tensor t("w", {4, 3, 3}, DType::kF64, Iota(36));
  Matrix m = Reshape2d(t, 1);
  EXPECT_EQ(m.rows(), 4u);
  EXPECT_EQ(m.cols(), 9u);

  Tensor sq("s", {6, 6}, DType::kF64, Iota(36));
  Matrix id = Reshape2d(sq, 1);
  EXPECT_EQ(id.rows(), 6u);
  EXPECT_EQ(id.cols(), 6u);
  EXPECT_EQ(id.data(), sq.data());
}

TEST(Reshape2d, FourDimensionalIndexing) {
  Tensor t("w", {2, 2, 2, 2}, DType::kF64, Iota(16));
  Matrix m = Reshape2d(t, 2);
  ASSERT_EQ(m.rows(), 4u);
  ASSERT_EQ(m.cols(), 4u);
  // Element (i, j) is flat element i*4 + j; enumerated from the 4-d index
  // (a, b, c, d) with i = 2a + b, j = 2c + d.
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t d = 0; d < 2; ++d) {
          const std::size_t flat = ((a * 2 + b) * 2 + c) * 2 + d;
          EXPECT_EQ(m(2 * a + b, 2 * c + d), static_cast<double>(flat));
        }
}

TEST(Reshape2d, SplitAxisOutOfRange) {
  Tensor t("w", {4, 3}, DType::kF64, Iota(12));
  EXPECT_THROW(Reshape2d(t, 0), InvalidArgument);
  EXPECT_THROW(Reshape2d(t, 2), InvalidArgument);
  Tensor v("v", {4}, DType::kF64, Iota(4));
  EXPECT_THROW(Reshape2d(v, 1), InvalidArgument);
}

TEST(Reshape2d, InverseRestoresTensor) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> shape;
    const std::size_t rank = testing::RandomSize(rng, 2, 5);
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(testing::RandomSize(rng, 1, 4));
    const std::size_t n = ShapeProduct(shape);
    Tensor t("x", shape, DType::kF64, testing::RandomMatrix(1, n, rng).data());
    const std::size_t split = testing::RandomSize(rng, 1, rank - 1);
    EXPECT_EQ(ReshapeLike(Reshape2d(t, split), t), t);
  }
}

TEST(Archive, EmptyArchiveIsSixteenBytes) {
  TensorArchive empty;
  const auto bytes = SerializeArchive(empty);
  ASSERT_EQ(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GFXT");
  EXPECT_EQ(ParseArchive(bytes), empty);
}

TEST(Archive, ZeroTensorPayload) {
  TensorArchive a;
  a.Add(Tensor("z", {2, 2}, DType::kF32, {0, 0, 0, 0}));
  const auto bytes = SerializeArchive(a);
  ASSERT_GE(bytes.size(), 16u + 16u);
  const std::uint32_t header_len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (bytes[11] << 24);
  ASSERT_EQ(bytes.size(), 16u + header_len + 16u);
  for (std::size_t i = 16 + header_len; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
  EXPECT_EQ(ParseArchive(bytes), a);
}

TEST(Archive, RandomRoundTripThroughFile) {
  std::mt19937_64 rng(11);
  TensorArchive a;
  a.metadata()["producer"] = "test";
  a.metadata()["note"] = "ünïcode ok";
  for (int i = 0; i < 100; ++i) {
    const std::size_t rows = testing::RandomSize(rng, 1, 6);
    const std::size_t cols = testing::RandomSize(rng, 1, 6);
    const DType dtype = (i % 2) ? DType::kF32 : DType::kF64;
    a.Add(Tensor("t" + std::to_string(i), {rows, cols}, dtype,
                 testing::RandomMatrix(rows, cols, rng, 3.0).data()));
  }
  const auto dir = testing::ScratchDir("archive");
  const std::string path = (dir / "a.gfxt").string();
  WriteArchive(a, path);
  const TensorArchive b = ReadArchive(path);
  EXPECT_EQ(a, b);
  // Identical input serializes identically.
  EXPECT_EQ(SerializeArchive(a), SerializeArchive(b));
}

TEST(Archive, DuplicateNamesRejected) {
  TensorArchive a;
  a.Add(Tensor("x", {1}, DType::kF64, {1.0}));
  EXPECT_THROW(a.Add(Tensor("x", {1}, DType::kF64, {2.0})), InvalidArgument);
}

FormatErrorCode CodeOf(const std::vector<std::uint8_t>& bytes) {
  try {
    ParseArchive(bytes);
  } catch (const FormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a format error";
  return FormatErrorCode::kIo;
}

TEST(Archive, DistinctErrorsPerCorruption) {
  TensorArchive a;
  a.Add(Tensor("w", {3, 2}, DType::kF64, {1, 2, 3, 4, 5, 6}));
  const auto good = SerializeArchive(a);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(CodeOf(bad_magic), FormatErrorCode::kBadMagic);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(CodeOf(bad_version), FormatErrorCode::kVersionMismatch);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  EXPECT_EQ(CodeOf(truncated), FormatErrorCode::kTruncated);

  auto extra = good;
  extra.push_back(0);
  EXPECT_EQ(CodeOf(extra), FormatErrorCode::kShapePayloadMismatch);
}

TEST(Archive, EveryHeaderByteFlipIsRejected) {
  TensorArchive a;
  a.metadata()["k"] = "v";
  a.Add(Tensor("w", {3, 2}, DType::kF32, {1, 2, 3, 4, 5, 6}));
  a.Add(Tensor("b", {2}, DType::kF64, {7, 8}));
  const auto good = SerializeArchive(a);
  const std::uint32_t header_len = good[8] | (good[9] << 8) | (good[10] << 16) | (good[11] << 24);
  for (std::size_t i = 0; i < 16 + header_len; ++i) {
    for (std::uint8_t mask : {0x01, 0x80, 0xFF}) {
      auto bytes = good;
      bytes[i] ^= mask;
      EXPECT_THROW(ParseArchive(bytes), FormatError) << "byte " << i << " mask " << int(mask);
    }
  }
}

TEST(Archive, NonFinitePayloadRejectedByDefault) {
  TensorArchive a;
  a.Add(Tensor("w", {2}, DType::kF64, {1.0, std::numeric_limits<double>::infinity()}, true));
  const auto bytes = SerializeArchive(a);
  EXPECT_EQ(CodeOf(bytes), FormatErrorCode::kNonFinite);
  EXPECT_NO_THROW(ParseArchive(bytes, /*allow_non_finite=*/true));
}

TEST(Archive, MissingFileIsIoError) {
  try {
    ReadArchive("/nonexistent/path.gfxt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatErrorCode::kIo);
  }
}

}  // namespace
}  // namespace gfix
