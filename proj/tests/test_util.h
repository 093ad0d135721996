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

#ifndef SKA_TESTS_TEST_UTIL_H_
#define SKA_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <random>

#include "ska/array.h"
#include "ska/autograd.h"

namespace ska::testing {

inline Array RandomArray(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Array a(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : a.values()) v = normal(rng);
  return a;
}

inline Tensor RandomParam(Shape shape, std::mt19937_64& rng,
                          double scale = 1.0) {
  return Tensor::Parameter(RandomArray(std::move(shape), rng, scale));
}

// Fixed random projection of a tensor to a scalar, so gradient checks see
// a non-trivial upstream gradient.
inline Array ProjectionWeights(const Shape& shape, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return RandomArray(shape, rng);
}

}  // namespace ska::testing

#endif  // SKA_TESTS_TEST_UTIL_H_
