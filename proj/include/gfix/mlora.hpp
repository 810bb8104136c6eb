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

// Modulated low-rank adapters.
//
// A base weight W0 (m×n) is factored once by truncated SVD into frozen
// factors A = U_r·D_r (m×r) and B = V_rᵀ (r×n). Only the r×r modulation map M
// is trained and transmitted; the weight update is ΔW = A·M·B.

#ifndef GFIX_MLORA_HPP_
#define GFIX_MLORA_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gfix/archive.hpp"
#include "gfix/linalg.hpp"
#include "gfix/tensor.hpp"

namespace gfix {

// Kept singular values must exceed this fraction of the largest one;
// the fit divides by them.
inline constexpr double kIllConditionedRatio = 1e-12;

struct MloraAdapter {
  std::string layer_id;
  Matrix a;                       // m×r, U_r·diag(d_r)
  Matrix b;                       // r×n, V_rᵀ
  Matrix m_map;                   // r×r
  std::vector<double> singular;   // d_r, cached for the closed-form fit

  std::size_t rank() const { return m_map.rows(); }
  std::size_t rows() const { return a.rows(); }
  std::size_t cols() const { return b.cols(); }
};

namespace detail {

inline void CheckConditioning(const std::vector<double>& d, double dmax, const std::string& layer) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > kIllConditionedRatio * dmax)) {
      std::ostringstream msg;
      msg << "layer '" << layer << "': kept singular value " << i << " = " << d[i]
          << " is below " << kIllConditionedRatio << " * d_max (" << dmax << ")";
      throw NumericalError(msg.str());
    }
  }
}

}  // namespace detail

inline MloraAdapter InitAdapter(const Matrix& w0, std::size_t r, std::string layer_id = "layer") {
  const std::size_t k = std::min(w0.rows(), w0.cols());
  if (r < 1 || r > k) {
    throw InvalidArgument("layer '" + layer_id + "': rank " + std::to_string(r) +
                          " outside [1, " + std::to_string(k) + "]");
  }
  if (!AllFinite(w0)) throw InvalidArgument("layer '" + layer_id + "': non-finite base weight");
  const SvdFactors f = Truncate(Svd(w0), r);
  detail::CheckConditioning(f.d, f.d.front(), layer_id);

  MloraAdapter ad;
  ad.layer_id = std::move(layer_id);
  ad.a = f.u;
  for (std::size_t i = 0; i < ad.a.rows(); ++i)
    for (std::size_t j = 0; j < r; ++j) ad.a(i, j) *= f.d[j];
  ad.b = Transpose(f.v);
  ad.m_map = Matrix(r, r);
  ad.singular = f.d;
  return ad;
}

// ΔW = A·M·B for an arbitrary map of the adapter's rank.
inline Matrix Delta(const MloraAdapter& ad, const Matrix& m_map) {
  if (m_map.rows() != ad.a.cols() || m_map.cols() != ad.b.rows()) {
    throw InvalidArgument("layer '" + ad.layer_id + "': modulation map is " +
                          std::to_string(m_map.rows()) + "x" + std::to_string(m_map.cols()) +
                          ", adapter rank is " + std::to_string(ad.a.cols()));
  }
  return Matmul(Matmul(ad.a, m_map), ad.b);
}

inline Matrix Delta(const MloraAdapter& ad) { return Delta(ad, ad.m_map); }

inline Matrix Apply(const Matrix& w0, const MloraAdapter& ad) {
  if (w0.rows() != ad.rows() || w0.cols() != ad.cols()) {
    throw InvalidArgument("layer '" + ad.layer_id + "': base is " + std::to_string(w0.rows()) +
                          "x" + std::to_string(w0.cols()) + ", adapter expects " +
                          std::to_string(ad.rows()) + "x" + std::to_string(ad.cols()));
  }
  return Add(w0, Delta(ad));
}

// Least-squares modulation map: argmin_M ||target − A·M·B||_F, which for SVD
// factors is D_r⁻¹·U_rᵀ·target·V_r = diag(1/d²)·Aᵀ·target·Bᵀ.
inline Matrix FitModulation(const MloraAdapter& ad, const Matrix& target_delta) {
  if (target_delta.rows() != ad.rows() || target_delta.cols() != ad.cols()) {
    throw InvalidArgument("layer '" + ad.layer_id + "': target is " +
                          std::to_string(target_delta.rows()) + "x" +
                          std::to_string(target_delta.cols()) + ", adapter expects " +
                          std::to_string(ad.rows()) + "x" + std::to_string(ad.cols()));
  }
  if (!AllFinite(target_delta)) {
    throw InvalidArgument("layer '" + ad.layer_id + "': non-finite target delta");
  }
  double dmax = 0.0;
  for (double d : ad.singular) dmax = std::max(dmax, d);
  detail::CheckConditioning(ad.singular, dmax, ad.layer_id);

  // U_rᵀ·T·V_r with U_r = A·D⁻¹ and V_r = Bᵀ.
  Matrix proj = Matmul(Matmul(Transpose(ad.a), target_delta), Transpose(ad.b));
  for (std::size_t i = 0; i < proj.rows(); ++i) {
    const double inv = 1.0 / (ad.singular[i] * ad.singular[i]);
    for (std::size_t j = 0; j < proj.cols(); ++j) proj(i, j) *= inv;
  }
  return proj;
}

struct LayerDims {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t r = 0;
};

struct SizeReport {
  std::uint64_t lora_params = 0;
  std::uint64_t mlora_params = 0;
  std::uint64_t lora_bytes = 0;
  std::uint64_t mlora_bytes = 0;
  double ratio = 0.0;
};

// Parameter accounting: vanilla LoRA transmits A and B (r·(m+n) values per
// layer), the modulated variant only M (r² values).
inline SizeReport MakeSizeReport(const std::vector<LayerDims>& layers, DType dtype = DType::kF32) {
  SizeReport rep;
  for (const auto& l : layers) {
    if (l.m == 0 || l.n == 0 || l.r == 0) throw InvalidArgument("layer dimensions must be positive");
    rep.lora_params += static_cast<std::uint64_t>(l.r) * (l.m + l.n);
    rep.mlora_params += static_cast<std::uint64_t>(l.r) * l.r;
  }
  rep.lora_bytes = rep.lora_params * DTypeWidth(dtype);
  rep.mlora_bytes = rep.mlora_params * DTypeWidth(dtype);
  rep.ratio = rep.mlora_params == 0
                  ? 0.0
                  : static_cast<double>(rep.lora_params) / static_cast<double>(rep.mlora_params);
  return rep;
}

// Adapters are stored as `<layer_id>.A`, `<layer_id>.B`, `<layer_id>.M` with
// metadata `<layer_id>.rank` and `<layer_id>.base_shape` ("m,n").
inline void StoreAdapter(TensorArchive& archive, const MloraAdapter& ad) {
  archive.Put(Tensor::FromMatrix(ad.layer_id + ".A", ad.a));
  archive.Put(Tensor::FromMatrix(ad.layer_id + ".B", ad.b));
  archive.Put(Tensor::FromMatrix(ad.layer_id + ".M", ad.m_map));
  archive.metadata()[ad.layer_id + ".rank"] = std::to_string(ad.rank());
  archive.metadata()[ad.layer_id + ".base_shape"] =
      std::to_string(ad.rows()) + "," + std::to_string(ad.cols());
}

inline MloraAdapter LoadAdapter(const TensorArchive& archive, const std::string& layer_id) {
  auto as_matrix = [&](const std::string& suffix) {
    const Tensor& t = archive.Get(layer_id + suffix);
    if (t.rank() != 2) throw InvalidArgument(t.name() + " is not a matrix");
    return Reshape2d(t, 1);
  };
  MloraAdapter ad;
  ad.layer_id = layer_id;
  ad.a = as_matrix(".A");
  ad.b = as_matrix(".B");
  ad.m_map = as_matrix(".M");
  const std::size_t r = ad.a.cols();
  if (ad.b.rows() != r || ad.m_map.rows() != r || ad.m_map.cols() != r) {
    throw InvalidArgument("layer '" + layer_id + "': inconsistent adapter factor shapes");
  }
  auto it = archive.metadata().find(layer_id + ".rank");
  if (it != archive.metadata().end() && it->second != std::to_string(r)) {
    throw InvalidArgument("layer '" + layer_id + "': rank metadata disagrees with factors");
  }
  // A = U·D with orthonormal U, so the column norms of A are d.
  ad.singular.assign(r, 0.0);
  for (std::size_t i = 0; i < ad.a.rows(); ++i)
    for (std::size_t j = 0; j < r; ++j) ad.singular[j] += ad.a(i, j) * ad.a(i, j);
  for (double& d : ad.singular) d = std::sqrt(d);
  return ad;
}

}  // namespace gfix

#endif  // GFIX_MLORA_HPP_
