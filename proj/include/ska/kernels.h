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

#ifndef SKA_KERNELS_H_
#define SKA_KERNELS_H_

#include <cstdint>

#include "ska/array.h"

namespace ska {

enum class Padding { kSame, kValid };

// Geometry of a 2-D cross-correlation over a (B, Ci, H, W) input with a
// (Co, Ci, KH, KW) weight. 1-D convolutions use H == KH == 1.
struct ConvGeometry {
  int64_t batch = 0;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t in_h = 0, in_w = 0;
  int64_t out_h = 0, out_w = 0;
  int64_t kernel_h = 1, kernel_w = 1;
  int64_t stride_h = 1, stride_w = 1;
  int64_t dilation_h = 1, dilation_w = 1;
  int64_t pad_h = 0, pad_w = 0;
};

// Throws ConfigError on inconsistent shapes or even kernel extents.
ConvGeometry MakeConvGeometry(const Shape& input, const Shape& weight,
                              int64_t stride_h, int64_t stride_w,
                              int64_t dilation_h, int64_t dilation_w,
                              Padding padding);

// OpenMP kernels. Work is split over independent outputs only, so results
// are bit-identical for any thread count.
namespace kernels {

void ConvForward(const ConvGeometry& g, const double* input,
                 const double* weight, const double* bias, double* output);
void ConvBackwardInput(const ConvGeometry& g, const double* grad_output,
                       const double* weight, double* grad_input);
// Accumulates into grad_weight and grad_bias (grad_bias may be null).
void ConvBackwardWeight(const ConvGeometry& g, const double* grad_output,
                        const double* input, double* grad_weight,
                        double* grad_bias);

// y (rows x out) = x (rows x in) * w^T (+ b)
void Linear(int64_t rows, int64_t in, int64_t out, const double* x,
            const double* w, const double* b, double* y);

}  // namespace kernels

// Direct serial loops, one output element at a time. Slow; kept as the
// baseline the parallel kernels are tested and benchmarked against.
namespace reference {

void ConvForward(const ConvGeometry& g, const double* input,
                 const double* weight, const double* bias, double* output);
void ConvBackwardInput(const ConvGeometry& g, const double* grad_output,
                       const double* weight, double* grad_input);
void ConvBackwardWeight(const ConvGeometry& g, const double* grad_output,
                        const double* input, double* grad_weight,
                        double* grad_bias);
void Linear(int64_t rows, int64_t in, int64_t out, const double* x,
            const double* w, const double* b, double* y);

}  // namespace reference

}  // namespace ska

#endif  // SKA_KERNELS_H_
