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

#ifndef GFIX_TENSOR_HPP_
#define GFIX_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gfix/common.hpp"
#include "gfix/linalg.hpp"

namespace gfix {

enum class DType : std::uint8_t { kF32, kF64 };

inline const char* DTypeName(DType t) { return t == DType::kF32 ? "f32" : "f64"; }
inline std::size_t DTypeWidth(DType t) { return t == DType::kF32 ? 4 : 8; }

inline std::size_t ShapeProduct(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string ShapeString(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Named dense row-major tensor. Elements are held as f64; an f32 tensor keeps
// every element exactly representable as a float so that storing it loses
// nothing.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::string name, std::vector<std::size_t> shape, DType dtype, std::vector<double> data,
         bool allow_non_finite = false)
      : name_(std::move(name)), shape_(std::move(shape)), dtype_(dtype), data_(std::move(data)) {
    if (shape_.empty()) throw InvalidArgument("tensor '" + name_ + "' has empty shape");
    for (std::size_t d : shape_) {
      if (d < 1) throw InvalidArgument("tensor '" + name_ + "' has a zero dimension");
    }
    if (ShapeProduct(shape_) != data_.size()) {
      throw InvalidArgument("tensor '" + name_ + "' shape " + ShapeString(shape_) +
                            " disagrees with " + std::to_string(data_.size()) + " elements");
    }
    if (dtype_ == DType::kF32) {
      for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
    }
    if (!allow_non_finite) {
      for (double v : data_) {
        if (!std::isfinite(v)) {
          throw FormatError(FormatErrorCode::kNonFinite, "tensor '" + name_ + "'");
        }
      }
    }
  }

  static Tensor FromMatrix(std::string name, const Matrix& m, DType dtype = DType::kF64) {
    return Tensor(std::move(name), {m.rows(), m.cols()}, dtype, m.data());
  }

  const std::string& name() const { return name_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  DType dtype() const { return dtype_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  bool operator==(const Tensor&) const = default;

 private:
  std::string name_;
  std::vector<std::size_t> shape_;
  DType dtype_ = DType::kF64;
  std::vector<double> data_;
};

// Views the tensor as an m×n matrix with m = prod(shape[0:split_axis]) and
// n = prod(shape[split_axis:]). Row-major order makes this a pure relabeling.
inline Matrix Reshape2d(const Tensor& t, std::size_t split_axis) {
  if (split_axis < 1 || split_axis >= t.rank()) {
    throw InvalidArgument("split_axis " + std::to_string(split_axis) + " outside [1, " +
                          std::to_string(t.rank()) + ") for tensor '" + t.name() + "'");
  }
  std::size_t m = 1;
  for (std::size_t i = 0; i < split_axis; ++i) m *= t.shape()[i];
  return Matrix(m, t.size() / m, t.data());
}

// Inverse of Reshape2d: pours a matrix back into `like`'s shape and dtype.
inline Tensor ReshapeLike(const Matrix& m, const Tensor& like) {
  if (m.size() != like.size()) {
    throw InvalidArgument("cannot reshape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + " into " + ShapeString(like.shape()));
  }
  return Tensor(like.name(), like.shape(), like.dtype(), m.data());
}

}  // namespace gfix

#endif  // GFIX_TENSOR_HPP_
