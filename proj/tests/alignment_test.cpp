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
#include <random>

#include "gfix/alignment.hpp"
#include "test_util.hpp"

namespace gfix {
namespace {

using testing::ClusteredSamples;
using testing::RandomMatrix;
using testing::StepRange;

SampleSet Gaussian(std::size_t n, std::size_t d, double mean, std::mt19937_64& rng) {
  SampleSet s{RandomMatrix(n, d, rng), "gaussian"};
  for (double& v : s.samples.data()) v += mean;
  return s;
}

TEST(NoiseSchedule, LinearDefaults) {
  const NoiseSchedule s = NoiseSchedule::Linear();
  ASSERT_EQ(s.steps(), 1000u);
  EXPECT_DOUBLE_EQ(s.betas.front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.betas.back(), 0.02);
  EXPECT_DOUBLE_EQ(s.alpha_bars.front(), 1.0 - 1e-4);
  for (std::size_t t = 1; t < s.steps(); ++t) {
    EXPECT_LT(s.alpha_bars[t], s.alpha_bars[t - 1]);
    EXPECT_GT(s.alpha_bars[t], 0.0);
  }
  EXPECT_THROW(NoiseSchedule::Linear(0), InvalidArgument);
  EXPECT_THROW(NoiseSchedule::Linear(10, 0.0, 0.02), InvalidArgument);
}

TEST(ForwardNoise, FirstStepIsNearIdentity) {
  std::mt19937_64 rng(1);
  const SampleSet x0 = Gaussian(200, 4, 0.0, rng);
  const NoiseSchedule s = NoiseSchedule::Linear();
  const SampleSet x = ForwardNoise(x0, 0, s, 5);
  const double weight = std::sqrt(1.0 - s.alpha_bars[0]);
  EXPECT_NEAR(weight, 0.01, 1e-4);
  // |x − x0| ≤ (1 − √ᾱ)|x0| + weight·|ε|, with |ε| < 6 for these draws.
  for (std::size_t i = 0; i < x.samples.data().size(); ++i) {
    EXPECT_LE(std::abs(x.samples.data()[i] - x0.samples.data()[i]),
              1e-4 * std::abs(x0.samples.data()[i]) + 6 * weight);
  }
}

TEST(ForwardNoise, LastStepVariance) {
  std::mt19937_64 rng(2);
  SampleSet x0{Matrix(100000, 1), "scalar"};
  std::normal_distribution<double> d(0.0, 2.0);
  for (double& v : x0.samples.data()) v = d(rng);
  const NoiseSchedule s = NoiseSchedule::Linear();
  const std::size_t t = s.steps() - 1;
  const SampleSet x = ForwardNoise(x0, t, s, 77);
  double mean = 0.0, var = 0.0, var0 = 0.0, mean0 = 0.0;
  for (double v : x0.samples.data()) mean0 += v / 1e5;
  for (double v : x0.samples.data()) var0 += (v - mean0) * (v - mean0) / 1e5;
  for (double v : x.samples.data()) mean += v / 1e5;
  for (double v : x.samples.data()) var += (v - mean) * (v - mean) / 1e5;
  const double expected = 1.0 - s.alpha_bars[t] + s.alpha_bars[t] * var0;
  EXPECT_NEAR(var, expected, 0.02 * expected);
}

TEST(ForwardNoise, DeterministicAndRangeChecked) {
  std::mt19937_64 rng(3);
  const SampleSet x0 = Gaussian(10, 3, 0.0, rng);
  const NoiseSchedule s = NoiseSchedule::Linear();
  EXPECT_EQ(ForwardNoise(x0, 300, s, 9).samples, ForwardNoise(x0, 300, s, 9).samples);
  EXPECT_NE(ForwardNoise(x0, 300, s, 9).samples, ForwardNoise(x0, 300, s, 10).samples);
  EXPECT_THROW(ForwardNoise(x0, 1000, s, 9), InvalidArgument);
}

TEST(GaussianNoise, Moments) {
  GaussianNoise g(123);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = g();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Mmd2, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(4);
  const SampleSet x = Gaussian(50, 5, 0.0, rng);
  EXPECT_NEAR(Mmd2(x, x, 1.3), 0.0, 1e-12);
}

TEST(Mmd2, TightClustersMatchClosedForm) {
  const double delta = 1.5, sigma = 0.7;
  const SampleSet x{Matrix::FromRows({{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}), "x"};
  const SampleSet y{Matrix::FromRows({{delta, 0.0}, {delta, 0.0}}), "y"};
  const double expected = 2.0 * (1.0 - std::exp(-delta * delta / (2 * sigma * sigma)));
  EXPECT_NEAR(Mmd2(x, y, sigma), expected, 1e-14);
}

TEST(Mmd2, FartherShiftScoresHigher) {
  std::mt19937_64 rng(5);
  const SampleSet base = Gaussian(500, 1, 0.0, rng);
  std::mt19937_64 rng_far(6), rng_near(6);
  const SampleSet far = Gaussian(500, 1, 3.0, rng_far);
  const SampleSet near = Gaussian(500, 1, 0.1, rng_near);
  EXPECT_GT(Mmd2(base, far, 1.0), Mmd2(base, near, 1.0));
}

TEST(Mmd2, SymmetricNonNegativeScaleInvariant) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = testing::RandomSize(rng, 1, 16);
    const SampleSet x = Gaussian(testing::RandomSize(rng, 2, 40), d, 0.0, rng);
    const SampleSet y = Gaussian(testing::RandomSize(rng, 2, 40), d, 0.3 * trial / 50, rng);
    const double bw = 0.2 + (rng() % 100) / 25.0;
    const double v = Mmd2(x, y, bw);
    EXPECT_EQ(v, Mmd2(y, x, bw));
    EXPECT_GE(v, 0.0);
    EXPECT_EQ(Mmd2(x, y, bw, MmdEstimator::kUnbiased), Mmd2(y, x, bw, MmdEstimator::kUnbiased));
    const double c = 0.1 + (rng() % 1000) / 100.0;
    SampleSet xs = x, ys = y;
    for (double& e : xs.samples.data()) e *= c;
    for (double& e : ys.samples.data()) e *= c;
    EXPECT_NEAR(Mmd2(xs, ys, bw * c), v, 1e-10);
  }
}

TEST(Mmd2, UnbiasedCanBeNegative) {
  std::mt19937_64 rng(8);
  bool saw_negative = false;
  for (int trial = 0; trial < 50 && !saw_negative; ++trial) {
    const SampleSet x = Gaussian(10, 2, 0.0, rng);
    const SampleSet y = Gaussian(10, 2, 0.0, rng);
    saw_negative = Mmd2(x, y, 1.0, MmdEstimator::kUnbiased) < 0.0;
  }
  EXPECT_TRUE(saw_negative);
}

TEST(Mmd2, Errors) {
  std::mt19937_64 rng(9);
  const SampleSet x = Gaussian(5, 2, 0.0, rng);
  EXPECT_THROW(Mmd2(x, Gaussian(5, 3, 0.0, rng), 1.0), InvalidArgument);
  EXPECT_THROW(Mmd2(x, x, 0.0), InvalidArgument);
  EXPECT_THROW(Mmd2(x, x, -1.0), InvalidArgument);
  EXPECT_THROW(Mmd2(x, Gaussian(1, 2, 0.0, rng), 1.0), InvalidArgument);
}

TEST(MedianHeuristic, KnownConfiguration) {
  // Pooled points 0, 1, 3, 7 on a line: distances 1,2,3,4,6,7; upper median 4.
  const SampleSet x{Matrix::FromRows({{0.0}, {1.0}}), "x"};
  const SampleSet y{Matrix::FromRows({{3.0}, {7.0}}), "y"};
  EXPECT_DOUBLE_EQ(MedianHeuristicBandwidth(x, y), 4.0);
  const SampleSet z{Matrix(3, 2), "z"};
  EXPECT_THROW(MedianHeuristicBandwidth(z, z), NumericalError);
}

TEST(MmdScan, CleanInputBottomsOutAtFirstStep) {
  std::mt19937_64 rng(10);
  const SampleSet ref = ClusteredSamples(64, 8, rng);
  const auto scan = MmdScan(ref, ref, NoiseSchedule::Linear(), StepRange(0, 1000, 50));
  EXPECT_EQ(SelectStepsize(scan), 0u);
  double peak = 0.0;
  for (const auto& p : scan) {
    EXPECT_GE(p.normalized, 0.0);
    EXPECT_LE(p.normalized, 1.0);
    peak = std::max(peak, p.normalized);
  }
  EXPECT_EQ(peak, 1.0);
}

TEST(MmdScan, RecoversPlantedStep) {
  std::mt19937_64 rng(11);
  const NoiseSchedule s = NoiseSchedule::Linear();
  // Past t ≈ 500 the noised clusters are indistinguishable from N(0, I) at
  // this sample size, so the scan stops there.
  const auto t_list = StepRange(0, 500, 25);
  for (std::size_t d : {8u, 64u}) {
    const SampleSet ref = ClusteredSamples(96, d, rng);
    for (std::size_t idx : {3u, 8u, 14u, 18u}) {
      const std::size_t planted = t_list[idx];
      const SampleSet degraded = ForwardNoise(ref, planted, s, 0xabcdef + planted);
      const auto scan = MmdScan(degraded, ref, s, t_list);
      const std::size_t got = SelectStepsize(scan);
      const auto pos = static_cast<long>(std::find(t_list.begin(), t_list.end(), got) - t_list.begin());
      EXPECT_LE(std::abs(pos - static_cast<long>(idx)), 1) << "d=" << d << " t*=" << planted;
      EXPECT_TRUE(testing::SingleLocalMinimum(scan)) << "d=" << d << " t*=" << planted;
    }
  }
}

TEST(MmdScan, IncreasingDegradationMovesTheStepUp) {
  std::mt19937_64 rng(12);
  const NoiseSchedule s = NoiseSchedule::Linear();
  const SampleSet ref = ClusteredSamples(80, 16, rng);
  const auto t_list = StepRange(0, 1000, 50);
  ScanOptions opts;
  opts.bandwidth = 4.0;
  std::size_t prev = 0;
  for (std::size_t planted = 0; planted < 1000; planted += 100) {
    const SampleSet degraded = ForwardNoise(ref, planted, s, 4242);
    const std::size_t got = SelectStepsize(degraded, ref, s, t_list, opts);
    EXPECT_GE(got, prev);
    prev = got;
  }
}

TEST(MmdScan, ZeroProfileNormalizesToOne) {
  // Without noise the scan is identically zero: every point reports 1.
  NoiseSchedule s;
  s.betas = {0.5, 0.5};
  s.alpha_bars = {1.0, 1.0};
  std::mt19937_64 rng(13);
  const SampleSet ref = Gaussian(6, 2, 0.0, rng);
  const auto scan = MmdScan(ref, ref, s, {0, 1});
  for (const auto& p : scan) {
    EXPECT_EQ(p.mmd2, 0.0);
    EXPECT_EQ(p.normalized, 1.0);
  }
  EXPECT_EQ(SelectStepsize(scan), 0u);
}

TEST(SelectStepsize, TiesGoToSmallerStepAndEmptyRejected) {
  const std::vector<ScanPoint> scan = {{30, 0.5, 1.0}, {10, 0.2, 0.4}, {20, 0.2, 0.4}};
  EXPECT_EQ(SelectStepsize(scan), 10u);
  EXPECT_THROW(SelectStepsize(std::vector<ScanPoint>{}), InvalidArgument);
  std::mt19937_64 rng(14);
  const SampleSet ref = Gaussian(4, 2, 0.0, rng);
  EXPECT_THROW(SelectStepsize(ref, ref, NoiseSchedule::Linear(), {}), InvalidArgument);
  EXPECT_THROW(MmdScan(ref, ref, NoiseSchedule::Linear(), {1000}), InvalidArgument);
}

}  // namespace
}  // namespace gfix
