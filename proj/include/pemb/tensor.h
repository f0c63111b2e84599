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

#ifndef PEMB_TENSOR_H_
#define PEMB_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pemb {

using Shape = std::vector<std::size_t>;

// Dense row-major array of doubles. Values are expected to be finite;
// CheckFinite() turns a violation into a NumericalError.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Scalar(double v) { return Tensor({1}, {v}); }
  static Tensor Vector(std::vector<double> values);
  static Tensor Vector(std::initializer_list<double> values) {
    return Vector(std::vector<double>(values));
  }
  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  // Rows/cols view a tensor as a matrix: everything but the last axis
  // is folded into rows.
  std::size_t rows() const;
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return values_[r * cols() + c];
  }
  double item() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(values_).subspan(r * cols(), cols());
  }
  Tensor Row(std::size_t r) const;

  Tensor Reshaped(Shape shape) const;
  bool AllFinite() const;
  void CheckFinite(const std::string& what) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Small dense helpers shared by value-level (non-graph) code paths.
double Dot(std::span<const double> a, std::span<const double> b);
double Norm(std::span<const double> a);
std::vector<double> Normalized(std::span<const double> a);

}  // namespace pemb

#endif  // PEMB_TENSOR_H_
