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

// Noise/artifact alignment analysis.
//
// Degraded samples are compared against reference samples pushed forward
// through the diffusion noising process at a range of schedule steps. The
// step whose noised references are closest in kernel MMD is the denoising
// step size that best matches the degradation.

#ifndef GFIX_ALIGNMENT_HPP_
#define GFIX_ALIGNMENT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gfix/common.hpp"
#include "gfix/linalg.hpp"

namespace gfix {

struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;  // ᾱ_t = Π_{s<=t} (1 − β_s)

  std::size_t steps() const { return betas.size(); }

  // β_t linear in t from beta_start (t = 0) to beta_end (t = T − 1).
  static NoiseSchedule Linear(std::size_t total_steps = 1000, double beta_start = 1e-4,
                              double beta_end = 0.02) {
    if (total_steps < 1) throw InvalidArgument("schedule needs at least one step");
    if (!(beta_start > 0.0 && beta_end > 0.0 && beta_start < 1.0 && beta_end < 1.0)) {
      throw InvalidArgument("betas must lie in (0, 1)");
    }
    NoiseSchedule s;
    s.betas.resize(total_steps);
    s.alpha_bars.resize(total_steps);
    double prod = 1.0;
    for (std::size_t t = 0; t < total_steps; ++t) {
      const double frac =
          total_steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(total_steps - 1);
      s.betas[t] = beta_start + (beta_end - beta_start) * frac;
      prod *= 1.0 - s.betas[t];
      s.alpha_bars[t] = prod;
    }
    return s;
  }
};

// n samples of dimension d, one per row.
struct SampleSet {
  Matrix samples;
  std::string label;

  std::size_t count() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
};

// Standard normal draws via Box-Muller on a 64-bit Mersenne twister, so the
// stream is identical on every standard library.
class GaussianNoise {
 public:
  explicit GaussianNoise(std::uint64_t seed) : engine_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1], u2 in [0, 1).
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// x_t = √ᾱ_t·x₀ + √(1 − ᾱ_t)·ε, ε ~ N(0, I), drawn row-major from `seed`.
inline SampleSet ForwardNoise(const SampleSet& x0, std::size_t t, const NoiseSchedule& schedule,
                              std::uint64_t seed) {
  if (t >= schedule.steps()) {
    throw InvalidArgument("step " + std::to_string(t) + " outside schedule of " +
                          std::to_string(schedule.steps()));
  }
  const double signal = std::sqrt(schedule.alpha_bars[t]);
  const double noise_scale = std::sqrt(1.0 - schedule.alpha_bars[t]);
  GaussianNoise eps(seed);
  SampleSet out{x0.samples, x0.label + "@t" + std::to_string(t)};
  for (double& v : out.samples.data()) v = signal * v + noise_scale * eps();
  return out;
}

namespace detail {

inline double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

// Σ_ij k(x_i, y_j), optionally skipping i == j.
inline double KernelSum(const Matrix& x, const Matrix& y, double inv_two_bw2, bool skip_diagonal) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    double row_sum = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      row_sum += std::exp(-SquaredDistance(xi, y.row(j)) * inv_two_bw2);
    }
    total += row_sum;
  }
  return total;
}

// Strict weak order on sample sets, used to evaluate mmd2 in an argument-order
// independent way.
inline bool CanonicallyBefore(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data().begin(), a.data().end(), b.data().begin(),
                                      b.data().end());
}

inline void CheckMmdInputs(const SampleSet& x, const SampleSet& y, double bandwidth) {
  if (x.dim() != y.dim()) {
    throw InvalidArgument("sample dimension mismatch: " + std::to_string(x.dim()) + " vs " +
                          std::to_string(y.dim()));
  }
  if (x.count() < 2 || y.count() < 2) throw InvalidArgument("mmd needs at least two samples per set");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidArgument("kernel bandwidth must be positive");
  }
}

}  // namespace detail

enum class MmdEstimator { kBiased, kUnbiased };

// Squared MMD with the RBF kernel k(a, b) = exp(−||a − b||² / (2·bandwidth²)).
// The biased (V-statistic) form is a squared RKHS norm and is clamped at zero
// against roundoff; the unbiased form can go negative.
inline double Mmd2(const SampleSet& x_in, const SampleSet& y_in, double bandwidth,
                   MmdEstimator estimator = MmdEstimator::kBiased) {
  detail::CheckMmdInputs(x_in, y_in, bandwidth);
  const bool swap = detail::CanonicallyBefore(y_in.samples, x_in.samples);
  const Matrix& x = swap ? y_in.samples : x_in.samples;
  const Matrix& y = swap ? x_in.samples : y_in.samples;
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  if (estimator == MmdEstimator::kBiased) {
    const double kxx = detail::KernelSum(x, x, inv, false) / (n * n);
    const double kyy = detail::KernelSum(y, y, inv, false) / (m * m);
    const double kxy = detail::KernelSum(x, y, inv, false) / (n * m);
    return std::max(0.0, kxx + kyy - 2.0 * kxy);
  }
  const double kxx = detail::KernelSum(x, x, inv, true) / (n * (n - 1.0));
  const double kyy = detail::KernelSum(y, y, inv, true) / (m * (m - 1.0));
  const double kxy = detail::KernelSum(x, y, inv, false) / (n * m);
  return kxx + kyy - 2.0 * kxy;
}

// Median pairwise Euclidean distance over the pooled samples.
inline double MedianHeuristicBandwidth(const SampleSet& x, const SampleSet& y) {
  std::vector<const double*> rows;
  for (std::size_t i = 0; i < x.count(); ++i) rows.push_back(x.samples.row(i).data());
  for (std::size_t i = 0; i < y.count(); ++i) rows.push_back(y.samples.row(i).data());
  const std::size_t d = x.dim();
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dists.push_back(std::sqrt(detail::SquaredDistance({rows[i], d}, {rows[j], d})));
  if (dists.empty()) throw InvalidArgument("median heuristic needs at least two samples");
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  const double med = *mid;
  if (!(med > 0.0)) throw NumericalError("median pairwise distance is zero; pass a bandwidth");
  return med;
}

struct ScanPoint {
  std::size_t t = 0;
  double mmd2 = 0.0;
  double normalized = 0.0;
};

struct ScanOptions {
  std::optional<double> bandwidth;  // median heuristic when unset
  std::uint64_t seed = 0x6a09e667;
  MmdEstimator estimator = MmdEstimator::kBiased;
};

// mmd2(degraded, ForwardNoise(reference, t)) for each t, all with the same
// noise draw, normalized by the largest value in the scan. The bandwidth is
// fixed across the scan.
inline std::vector<ScanPoint> MmdScan(const SampleSet& degraded, const SampleSet& reference,
                                      const NoiseSchedule& schedule,
                                      const std::vector<std::size_t>& t_list,
                                      const ScanOptions& opts = {}) {
  if (t_list.empty()) throw InvalidArgument("empty step list");
  for (std::size_t t : t_list) {
    if (t >= schedule.steps()) {
      throw InvalidArgument("step " + std::to_string(t) + " outside schedule of " +
                            std::to_string(schedule.steps()));
    }
  }
  const double bandwidth = opts.bandwidth ? *opts.bandwidth
                                          : MedianHeuristicBandwidth(degraded, reference);
  std::vector<ScanPoint> out;
  out.reserve(t_list.size());
  double peak = 0.0;
  for (std::size_t t : t_list) {
    const SampleSet noised = ForwardNoise(reference, t, schedule, opts.seed);
    const double v = Mmd2(degraded, noised, bandwidth, opts.estimator);
    out.push_back({t, v, 0.0});
    peak = std::max(peak, v);
  }
  for (auto& p : out) p.normalized = peak > 0.0 ? std::max(0.0, p.mmd2) / peak : 1.0;
  return out;
}

// Schedule step minimizing the scan; ties go to the smaller t.
inline std::size_t SelectStepsize(const std::vector<ScanPoint>& scan) {
  if (scan.empty()) throw InvalidArgument("empty scan");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scan.size(); ++i) {
    if (scan[i].mmd2 < scan[best].mmd2 ||
        (scan[i].mmd2 == scan[best].mmd2 && scan[i].t < scan[best].t)) {
      best = i;
    }
  }
  return scan[best].t;
}

inline std::size_t SelectStepsize(const SampleSet& degraded, const SampleSet& reference,
                                  const NoiseSchedule& schedule,
                                  const std::vector<std::size_t>& t_list,
                                  const ScanOptions& opts = {}) {
  return SelectStepsize(MmdScan(degraded, reference, schedule, t_list, opts));
}

}  // namespace gfix

#endif  // GFIX_ALIGNMENT_HPP_
