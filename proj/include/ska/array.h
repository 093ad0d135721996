// Copyright (c) 2026 The ska-tdnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SKA_ARRAY_H_
#define SKA_ARRAY_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ska {

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Dense row-major array of doubles. Extents are always positive and the
// element count always equals the product of the extents.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array Scalar(double value) { return Array({1}, {value}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int axis) const;
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vector() const { return data_; }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  // Multi-index access, bounds-checked. Intended for tests and slow paths.
  double& at(std::initializer_list<int64_t> index);
  double at(std::initializer_list<int64_t> index) const;

  Array Reshaped(Shape shape) const;
  void Fill(double value);
  bool AllFinite() const;
  double item() const;

 private:
  int64_t Offset(std::initializer_list<int64_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

// Throws NumericError naming `what` when any element is NaN or infinite.
void CheckFinite(const Array& array, const std::string& what);

double MaxAbsDiff(const Array& a, const Array& b);

}  // namespace ska

#endif  // SKA_ARRAY_H_
