/*
 * Copyright 2026 The pemb Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pemb/tensor.h"

#include <cmath>
#include <sstream>
#include <utility>

#include "pemb/errors.h"

namespace pemb {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(NumElements(shape_), fill) {
  for (std::size_t e : shape_) {
    if (e == 0) throw ContractError("tensor extents must be positive");
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t e : shape_) {
    if (e == 0) throw ContractError("tensor extents must be positive");
  }
  if (values_.size() != NumElements(shape_)) {
    throw ContractError("tensor value count " + std::to_string(values_.size()) +
                        " does not match shape " + ShapeString(shape_));
  }
}

Tensor Tensor::Vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() <= 1) return 1;
  return values_.size() / shape_.back();
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("item() on tensor of shape " + ShapeString(shape_));
  }
  return values_[0];
}

Tensor Tensor::Row(std::size_t r) const {
  auto span = row(r);
  return Tensor::Vector(std::vector<double>(span.begin(), span.end()));
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != values_.size()) {
    throw ContractError("cannot reshape " + ShapeString(shape_) + " to " +
                        ShapeString(shape));
  }
  return Tensor(std::move(shape), values_);
}

bool Tensor::AllFinite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::CheckFinite(const std::string& what) const {
  if (!AllFinite()) throw NumericalError("non-finite value in " + what);
}

double Dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

std::vector<double> Normalized(std::span<const double> a) {
  const double n = Norm(a);
  if (!(n > 0.0)) throw DegenerateInputError("cannot normalize zero vector");
  std::vector<double> out(a.begin(), a.end());
  for (double& v : out) v /= n;
  return out;
}

}  // namespace pemb
