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

// Dense row-major matrices and the truncated SVD used to build adapters.

#ifndef GFIX_LINALG_HPP_
#define GFIX_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfix/common.hpp"

namespace gfix {

// Dense row-major f64 matrix. All numerics run in f64 regardless of the
// storage dtype of the tensor they came from.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw InvalidArgument("matrix data length " + std::to_string(data_.size()) +
                            " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix Identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix Diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }
  // Nested-list literal, handy for fixtures.
  static Matrix FromRows(const std::vector<std::vector<double>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.front().size();
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw InvalidArgument("ragged row literal");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix Transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix Matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul inner dimension mismatch: " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

inline void RequireSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) +
                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                          "x" + std::to_string(b.cols()));
  }
}

inline Matrix Add(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

inline Matrix Subtract(const Matrix& a, const Matrix& b) {
  RequireSameShape(a, b, "subtract");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix Scale(const Matrix& a, double s) {
  Matrix c = a;
  for (double& v : c.data()) v *= s;
  return c;
}

inline double FrobNormSquared(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

inline double FrobNorm(const Matrix& a) { return std::sqrt(FrobNormSquared(a)); }

inline double MaxAbs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline bool AllFinite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

// W ≈ u · diag(d) · vᵀ with u: m×k, v: n×k, d non-increasing.
struct SvdFactors {
  Matrix u;
  std::vector<double> d;
  Matrix v;

  std::size_t rank() const { return d.size(); }
};

inline Matrix Reconstruct(const SvdFactors& f) {
  Matrix ud = f.u;
  for (std::size_t i = 0; i < ud.rows(); ++i)
    for (std::size_t j = 0; j < ud.cols(); ++j) ud(i, j) *= f.d[j];
  return Matmul(ud, Transpose(f.v));
}

struct SvdOptions {
  // Pairs whose normalized inner product is below this are treated as
  // already orthogonal.
  double tolerance = 1e-12;
  int max_sweeps = 60;
};

namespace detail {

// One-sided (Hestenes) Jacobi on the columns of `a` (m×n, m >= n). On return
// the columns of `a` are mutually orthogonal and `v` holds the accumulated
// right rotations.
inline void HestenesJacobi(Matrix& a, Matrix& v, const SvdOptions& opts) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  // Column-major scratch keeps the inner loops contiguous.
  std::vector<double> cols(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) cols[j * m + i] = a(i, j);
  std::vector<double> vcols(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) vcols[j * n + j] = 1.0;

  std::vector<double> norms(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += cols[j * m + i] * cols[j * m + i];
    norms[j] = s;
    total += s;
  }
  // Columns whose energy is at roundoff level relative to the whole matrix
  // carry no information; rotating them only chases noise.
  const double negligible = total * 1e-30;

  bool converged = false;
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      double* cp = &cols[p * m];
      double* vp = &vcols[p * n];
      for (std::size_t q = p + 1; q < n; ++q) {
        double* cq = &cols[q * m];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += cp[i] * cp[i];
          beta += cq[i] * cq[i];
          gamma += cp[i] * cq[i];
        }
        norms[p] = alpha;
        norms[q] = beta;
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= opts.tolerance * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = cp[i];
          const double y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
        double* vq = &vcols[q * n];
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
  }
  if (!converged) {
    throw NumericalError("jacobi svd did not converge within " +
                         std::to_string(opts.max_sweeps) + " sweeps");
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = cols[j * m + i];
  v = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) v(i, j) = vcols[j * n + i];
}

// Replaces column `j` of `u` by a unit vector orthogonal to columns [0, j).
inline void CompleteColumn(Matrix& u, std::size_t j) {
  const std::size_t m = u.rows();
  for (std::size_t e = 0; e < m; ++e) {
    std::vector<double> cand(m, 0.0);
    cand[e] = 1.0;
    // Two Gram-Schmidt passes for numerical orthogonality.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += u(i, k) * cand[i];
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, k);
      }
    }
    double norm = 0.0;
    for (double x : cand) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.5) {
      for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / norm;
      return;
    }
  }
  throw NumericalError("cannot complete orthonormal basis");
}

inline SvdFactors SvdTall(const Matrix& w, const SvdOptions& opts) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  Matrix a = w;
  Matrix v;
  HestenesJacobi(a, v, opts);

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, j);
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  SvdFactors f{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  const double smax = n > 0 ? sigma[order[0]] : 0.0;
  const double zero_cut = smax * 1e-13 * static_cast<double>(std::max(m, n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    f.d[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) f.v(i, k) = v(i, j);
    if (sigma[j] > zero_cut && sigma[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) f.u(i, k) = a(i, j) / sigma[j];
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!(f.d[k] > zero_cut && f.d[k] > 0.0)) CompleteColumn(f.u, k);
  }

  // Sign convention: the largest-magnitude entry of every u column is
  // non-negative (first such entry on ties).
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (std::abs(f.u(i, k)) > std::abs(f.u(best, k))) best = i;
    if (f.u(best, k) < 0.0) {
      for (std::size_t i = 0; i < m; ++i) f.u(i, k) = -f.u(i, k);
      for (std::size_t i = 0; i < n; ++i) f.v(i, k) = -f.v(i, k);
    }
  }
  return f;
}

}  // namespace detail

// Full thin SVD, k = min(m, n).
inline SvdFactors Svd(const Matrix& w, const SvdOptions& opts = {}) {
  if (w.rows() == 0 || w.cols() == 0) throw InvalidArgument("svd of empty matrix");
  if (!AllFinite(w)) throw InvalidArgument("svd input contains non-finite values");
  if (w.rows() >= w.cols()) return detail::SvdTall(w, opts);

  // Wide case: factor Wᵀ = U' D V'ᵀ, so W = V' D U'ᵀ. The sign convention is
  // re-applied to the new u.
  SvdFactors t = detail::SvdTall(Transpose(w), opts);
  SvdFactors f{std::move(t.v), std::move(t.d), std::move(t.u)};
  for (std::size_t k = 0; k < f.rank(); ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < f.u.rows(); ++i)
      if (std::abs(f.u(i, k)) > std::abs(f.u(best, k))) best = i;
    if (f.u(best, k) < 0.0) {
      for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, k) = -f.u(i, k);
      for (std::size_t i = 0; i < f.v.rows(); ++i) f.v(i, k) = -f.v(i, k);
    }
  }
  return f;
}

// Keeps the leading r singular triplets.
inline SvdFactors Truncate(const SvdFactors& f, std::size_t r) {
  if (r < 1 || r > f.rank()) {
    throw InvalidArgument("truncation rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(f.rank()) + "]");
  }
  SvdFactors out{Matrix(f.u.rows(), r), std::vector<double>(f.d.begin(), f.d.begin() + r),
                 Matrix(f.v.rows(), r)};
  for (std::size_t i = 0; i < f.u.rows(); ++i)
    for (std::size_t k = 0; k < r; ++k) out.u(i, k) = f.u(i, k);
  for (std::size_t i = 0; i < f.v.rows(); ++i)
    for (std::size_t k = 0; k < r; ++k) out.v(i, k) = f.v(i, k);
  return out;
}

}  // namespace gfix

#endif  // GFIX_LINALG_HPP_
