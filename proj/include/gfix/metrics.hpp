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

#ifndef GFIX_METRICS_HPP_
#define GFIX_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "gfix/common.hpp"
#include "gfix/tensor.hpp"

namespace gfix {

enum class QualityOrientation { kHigherBetter, kLowerBetter };

struct RdPoint {
  double rate = 0.0;
  double quality = 0.0;
};

struct RdCurvePoints {
  std::vector<RdPoint> points;
  QualityOrientation orientation = QualityOrientation::kHigherBetter;
};

// log10(rate) as a function of quality, piecewise cubic. Each piece is
// c0 + c1·s + c2·s² + c3·s³ in the local coordinate s = q − origin.
class LogRateFit {
 public:
  struct Piece {
    double lo = 0.0, hi = 0.0, origin = 0.0;
    std::array<double, 4> c{};
  };

  explicit LogRateFit(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {}

  double lo() const { return pieces_.front().lo; }
  double hi() const { return pieces_.back().hi; }
  const std::vector<Piece>& pieces() const { return pieces_; }

  double operator()(double q) const {
    const Piece& p = PieceFor(q);
    const double s = q - p.origin;
    return p.c[0] + s * (p.c[1] + s * (p.c[2] + s * p.c[3]));
  }

  // Exact ∫_a^b via the polynomial antiderivative of each overlapping piece.
  double Integrate(double a, double b) const {
    double total = 0.0;
    for (const auto& p : pieces_) {
      const double x0 = std::max(a, p.lo);
      const double x1 = std::min(b, p.hi);
      if (x1 <= x0) continue;
      total += Antiderivative(p, x1 - p.origin) - Antiderivative(p, x0 - p.origin);
    }
    return total;
  }

 private:
  static double Antiderivative(const Piece& p, double s) {
    return s * (p.c[0] + s * (p.c[1] / 2.0 + s * (p.c[2] / 3.0 + s * p.c[3] / 4.0)));
  }
  const Piece& PieceFor(double q) const {
    for (const auto& p : pieces_)
      if (q <= p.hi) return p;
    return pieces_.back();
  }

  std::vector<Piece> pieces_;
};

namespace detail {

// Gaussian elimination with partial pivoting on a 4×4 system.
inline std::array<double, 4> Solve4(std::array<std::array<double, 5>, 4> m) {
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (m[piv][col] == 0.0) throw NumericalError("singular cubic fit");
    std::swap(m[piv], m[col]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int k = col; k < 5; ++k) m[r][k] -= f * m[col][k];
    }
  }
  return {m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2], m[3][4] / m[3][3]};
}

inline int Sign(double v) { return (v > 0.0) - (v < 0.0); }

// Shape-preserving endpoint slope (three-point, clipped as in PCHIP).
inline double PchipEdgeSlope(double h0, double h1, double d0, double d1) {
  double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if (Sign(s) != Sign(d0)) {
    s = 0.0;
  } else if (Sign(d0) != Sign(d1) && std::abs(s) > std::abs(3.0 * d0)) {
    s = 3.0 * d0;
  }
  return s;
}

}  // namespace detail

// Single cubic through exactly four points; PCHIP (Fritsch-Carlson slopes)
// through five or more. `q` must be strictly increasing.
inline LogRateFit FitLogRate(const std::vector<double>& q, const std::vector<double>& y) {
  const std::size_t n = q.size();
  if (n < 4) throw InvalidArgument("bd-rate needs at least 4 points per curve");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(q[i] > q[i - 1])) throw InvalidArgument("duplicate quality values in rd curve");
  }
  if (n == 4) {
    const double origin = q[0];
    std::array<std::array<double, 5>, 4> m{};
    for (int i = 0; i < 4; ++i) {
      const double s = q[i] - origin;
      m[i] = {1.0, s, s * s, s * s * s, y[i]};
    }
    LogRateFit::Piece p{q[0], q[3], origin, detail::Solve4(m)};
    return LogRateFit({p});
  }

  std::vector<double> h(n - 1), delta(n - 1), slope(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = q[k + 1] - q[k];
    delta[k] = (y[k + 1] - y[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) {
      slope[k] = 0.0;
    } else {
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      slope[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
  }
  slope[0] = detail::PchipEdgeSlope(h[0], h[1], delta[0], delta[1]);
  slope[n - 1] = detail::PchipEdgeSlope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);

  std::vector<LogRateFit::Piece> pieces;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    LogRateFit::Piece p;
    p.lo = q[k];
    p.hi = q[k + 1];
    p.origin = q[k];
    p.c[0] = y[k];
    p.c[1] = slope[k];
    p.c[2] = (3.0 * delta[k] - 2.0 * slope[k] - slope[k + 1]) / h[k];
    p.c[3] = (slope[k] + slope[k + 1] - 2.0 * delta[k]) / (h[k] * h[k]);
    pieces.push_back(p);
  }
  return LogRateFit(std::move(pieces));
}

namespace detail {

// Sorted (quality, log10 rate) columns with lower-better qualities negated.
inline std::pair<std::vector<double>, std::vector<double>> PrepareCurve(const RdCurvePoints& c) {
  if (c.points.size() < 4) throw InvalidArgument("bd-rate needs at least 4 points per curve");
  std::vector<RdPoint> pts = c.points;
  for (const auto& p : pts) {
    if (!(p.rate > 0.0) || !std::isfinite(p.rate) || !std::isfinite(p.quality)) {
      throw InvalidArgument("rd curve rates must be positive and values finite");
    }
  }
  if (c.orientation == QualityOrientation::kLowerBetter) {
    for (auto& p : pts) p.quality = -p.quality;
  }
  std::sort(pts.begin(), pts.end(),
            [](const RdPoint& a, const RdPoint& b) { return a.quality < b.quality; });
  std::vector<double> q, y;
  for (const auto& p : pts) {
    q.push_back(p.quality);
    y.push_back(std::log10(p.rate));
  }
  std::vector<double> rates;
  for (const auto& p : pts) rates.push_back(p.rate);
  std::sort(rates.begin(), rates.end());
  if (std::adjacent_find(rates.begin(), rates.end()) != rates.end()) {
    throw InvalidArgument("duplicate rate values in rd curve");
  }
  return {q, y};
}

}  // namespace detail

// Average rate difference of `test` against `anchor` at equal quality, in
// percent. Negative means the test curve needs less rate.
inline double BdRate(const RdCurvePoints& test, const RdCurvePoints& anchor) {
  const auto [qt, yt] = detail::PrepareCurve(test);
  const auto [qa, ya] = detail::PrepareCurve(anchor);
  const LogRateFit ft = FitLogRate(qt, yt);
  const LogRateFit fa = FitLogRate(qa, ya);
  const double lo = std::max(ft.lo(), fa.lo());
  const double hi = std::min(ft.hi(), fa.hi());
  if (!(hi > lo)) throw InvalidArgument("rd curves have no overlapping quality range");
  const double avg = (ft.Integrate(lo, hi) - fa.Integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

struct Psnr {
  double db = 0.0;
  bool identical = false;  // MSE == 0; db is meaningless

  std::string ToString(int decimals = 4) const {
    if (identical) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, db);
    return buf;
  }
};

inline Psnr ComputePsnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("psnr shape mismatch: " + ShapeString(a.shape()) + " vs " +
                          ShapeString(b.shape()));
  }
  if (!(peak > 0.0)) throw InvalidArgument("psnr peak must be positive");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sse += d * d;
  }
  if (sse == 0.0) return {0.0, true};
  const double mse = sse / static_cast<double>(a.size());
  return {10.0 * std::log10(peak * peak / mse), false};
}

}  // namespace gfix

#endif  // GFIX_METRICS_HPP_
