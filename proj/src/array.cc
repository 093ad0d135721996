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

#include "ska/array.h"

#include <cmath>
#include <sstream>
#include <utility>

#include "ska/error.h"

namespace ska {

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t extent : shape) n *= extent;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {

void ValidateShape(const Shape& shape) {
  if (shape.empty()) throw ContractError("array shape must have rank >= 1");
  for (int64_t extent : shape) {
    if (extent < 1) {
      throw ContractError("array extents must be positive, got " +
                          ShapeString(shape));
    }
  }
}

}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  ValidateShape(shape_);
  data_.assign(NumElements(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  ValidateShape(shape_);
  if (NumElements(shape_) != static_cast<int64_t>(data_.size())) {
    throw ContractError("array data length " + std::to_string(data_.size()) +
                        " does not match shape " + ShapeString(shape_));
  }
}

int64_t Array::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ContractError("axis out of range for shape " + ShapeString(shape_));
  }
  return shape_[axis];
}

int64_t Array::Offset(std::initializer_list<int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw ContractError("index rank mismatch for shape " + ShapeString(shape_));
  }
  int64_t offset = 0;
  int axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) {
      throw ContractError("index out of range for shape " +
                          ShapeString(shape_));
    }
    offset = offset * shape_[axis] + i;
    ++axis;
  }
  return offset;
}

double& Array::at(std::initializer_list<int64_t> index) {
  return data_[Offset(index)];
}

double Array::at(std::initializer_list<int64_t> index) const {
  return data_[Offset(index)];
}

Array Array::Reshaped(Shape shape) const {
  if (NumElements(shape) != size()) {
    throw ContractError("cannot reshape " + ShapeString(shape_) + " to " +
                        ShapeString(shape));
  }
  return Array(std::move(shape), data_);
}

void Array::Fill(double value) {
  for (double& v : data_) v = value;
}

bool Array::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Array::item() const {
  if (size() != 1) {
    throw ContractError("item() requires a single element, shape is " +
                        ShapeString(shape_));
  }
  return data_[0];
}

void CheckFinite(const Array& array, const std::string& what) {
  if (!array.AllFinite()) {
    throw NumericError("non-finite values in " + what);
  }
}

double MaxAbsDiff(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    throw ContractError("MaxAbsDiff shape mismatch " + ShapeString(a.shape()) +
                        " vs " + ShapeString(b.shape()));
  }
  double worst = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

}  // namespace ska
