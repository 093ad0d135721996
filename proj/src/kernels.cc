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

#include "ska/kernels.h"

#include <algorithm>
#include <vector>

#include "ska/error.h"

namespace ska {

ConvGeometry MakeConvGeometry(const Shape& input, const Shape& weight,
                              int64_t stride_h, int64_t stride_w,
                              int64_t dilation_h, int64_t dilation_w,
                              Padding padding) {
  if (input.size() != 4 || weight.size() != 4) {
    throw ConfigError("convolution expects rank-4 input and weight, got " +
                      ShapeString(input) + " and " + ShapeString(weight));
  }
  if (input[1] != weight[1]) {
    throw ConfigError("convolution weight " + ShapeString(weight) +
                      " does not match input channels of " +
                      ShapeString(input));
  }
  if (weight[2] % 2 == 0 || weight[3] % 2 == 0) {
    throw ConfigError("convolution kernel extents must be odd, got " +
                      ShapeString(weight));
  }
  if (stride_h < 1 || stride_w < 1 || dilation_h < 1 || dilation_w < 1) {
    throw ConfigError("convolution stride and dilation must be >= 1");
  }
  ConvGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = weight[0];
  g.kernel_h = weight[2];
  g.kernel_w = weight[3];
  g.stride_h = stride_h;
  g.stride_w = stride_w;
  g.dilation_h = dilation_h;
  g.dilation_w = dilation_w;
  if (padding == Padding::kSame) {
    g.pad_h = dilation_h * (g.kernel_h - 1) / 2;
    g.pad_w = dilation_w * (g.kernel_w - 1) / 2;
  }
  const int64_t span_h = dilation_h * (g.kernel_h - 1) + 1;
  const int64_t span_w = dilation_w * (g.kernel_w - 1) + 1;
  if (g.in_h + 2 * g.pad_h < span_h || g.in_w + 2 * g.pad_w < span_w) {
    throw ConfigError("convolution input " + ShapeString(input) +
                      " is smaller than the kernel span");
  }
  g.out_h = (g.in_h + 2 * g.pad_h - span_h) / stride_h + 1;
  g.out_w = (g.in_w + 2 * g.pad_w - span_w) / stride_w + 1;
  return g;
}

namespace {

// Output positions o in [0, out_w) whose input index o * stride + offset
// lands inside [0, in_w).
inline void ValidRange(int64_t offset, int64_t stride, int64_t in_w,
                       int64_t out_w, int64_t* lo, int64_t* hi) {
  int64_t first = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int64_t last = in_w - 1 - offset;
  int64_t end = last < 0 ? 0 : last / stride + 1;
  *lo = std::min(first, out_w);
  *hi = std::max(*lo, std::min(end, out_w));
}

}  // namespace

namespace kernels {

namespace {

// Target number of output positions per tile; keeps a tile of four output
// rows and one column row resident in L1.
constexpr int64_t kTileCols = 512;

int64_t TileRows(const ConvGeometry& g) {
  return std::max<int64_t>(1, kTileCols / std::max<int64_t>(1, g.out_w));
}

bool IsPointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride_h == 1 &&
         g.stride_w == 1 && g.pad_h == 0 && g.pad_w == 0;
}

// Column matrix (Ci * KH * KW, P) of one batch item restricted to output
// rows [h0, h0 + rows). Row k = (ci, i, j) in weight order.
struct Columns {
  const double* data = nullptr;
  int64_t ld = 0;
};

Columns Im2Col(const ConvGeometry& g, const double* x, int64_t h0,
               int64_t rows, std::vector<double>& buffer) {
  const int64_t plane_in = g.in_h * g.in_w;
  if (IsPointwise(g)) return {x + h0 * g.in_w, plane_in};
  const int64_t p_count = rows * g.out_w;
  const int64_t ksize = g.kernel_h * g.kernel_w;
  buffer.resize(static_cast<size_t>(g.in_channels * ksize * p_count));
  double* cols = buffer.data();
#pragma omp parallel for schedule(static) if (g.in_channels * p_count > 8192)
  for (int64_t ci = 0; ci < g.in_channels; ++ci) {
    const double* xc = x + ci * plane_in;
    for (int64_t i = 0; i < g.kernel_h; ++i) {
      for (int64_t j = 0; j < g.kernel_w; ++j) {
        double* dst = cols + ((ci * g.kernel_h + i) * g.kernel_w + j) * p_count;
        const int64_t off = j * g.dilation_w - g.pad_w;
        int64_t lo, hi_w;
        ValidRange(off, g.stride_w, g.in_w, g.out_w, &lo, &hi_w);
        for (int64_t r = 0; r < rows; ++r) {
          double* d = dst + r * g.out_w;
          const int64_t hi = (h0 + r) * g.stride_h - g.pad_h + i * g.dilation_h;
          if (hi < 0 || hi >= g.in_h) {
            std::fill(d, d + g.out_w, 0.0);
            continue;
          }
          const double* xrow = xc + hi * g.in_w;
          std::fill(d, d + lo, 0.0);
          if (g.stride_w == 1) {
            std::copy(xrow + lo + off, xrow + hi_w + off, d + lo);
          } else {
            for (int64_t wo = lo; wo < hi_w; ++wo) {
              d[wo] = xrow[wo * g.stride_w + off];
            }
          }
          std::fill(d + hi_w, d + g.out_w, 0.0);
        }
      }
    }
  }
  return {cols, p_count};
}

// Scatter-adds a (Ci * KH * KW, P) column gradient back into one batch item.
void Col2Im(const ConvGeometry& g, const double* cols, int64_t h0,
            int64_t rows, double* gx) {
  const int64_t plane_in = g.in_h * g.in_w;
  const int64_t p_count = rows * g.out_w;
#pragma omp parallel for schedule(static) if (g.in_channels * p_count > 8192)
  for (int64_t ci = 0; ci < g.in_channels; ++ci) {
    double* gc = gx + ci * plane_in;
    for (int64_t i = 0; i < g.kernel_h; ++i) {
      for (int64_t j = 0; j < g.kernel_w; ++j) {
        const double* src =
            cols + ((ci * g.kernel_h + i) * g.kernel_w + j) * p_count;
        const int64_t off = j * g.dilation_w - g.pad_w;
        int64_t lo, hi_w;
        ValidRange(off, g.stride_w, g.in_w, g.out_w, &lo, &hi_w);
        for (int64_t r = 0; r < rows; ++r) {
          const int64_t hi = (h0 + r) * g.stride_h - g.pad_h + i * g.dilation_h;
          if (hi < 0 || hi >= g.in_h) continue;
          const double* s = src + r * g.out_w;
          double* grow = gc + hi * g.in_w;
          if (g.stride_w == 1) {
            double* d = grow + off;
#pragma omp simd
            for (int64_t wo = lo; wo < hi_w; ++wo) d[wo] += s[wo];
          } else {
            for (int64_t wo = lo; wo < hi_w; ++wo) {
              grow[wo * g.stride_w + off] += s[wo];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void ConvForward(const ConvGeometry& g, const double* input,
                 const double* weight, const double* bias, double* output) {
  const int64_t plane_in = g.in_h * g.in_w;
  const int64_t plane_out = g.out_h * g.out_w;
  const int64_t k_count = g.in_channels * g.kernel_h * g.kernel_w;
  const int64_t tile = TileRows(g);
  const int64_t co_blocks = (g.out_channels + 3) / 4;
  std::vector<double> buffer;
  for (int64_t n = 0; n < g.batch; ++n) {
    for (int64_t h0 = 0; h0 < g.out_h; h0 += tile) {
      const int64_t rows = std::min(tile, g.out_h - h0);
      const int64_t p_count = rows * g.out_w;
      const Columns c =
          Im2Col(g, input + n * g.in_channels * plane_in, h0, rows, buffer);
#pragma omp parallel for schedule(static) if (co_blocks * k_count * p_count > 32768)
      for (int64_t b = 0; b < co_blocks; ++b) {
        const int64_t co0 = 4 * b;
        const int64_t nb = std::min<int64_t>(4, g.out_channels - co0);
        double* o[4];
        for (int64_t r = 0; r < nb; ++r) {
          o[r] = output + (n * g.out_channels + co0 + r) * plane_out +
                 h0 * g.out_w;
          std::fill(o[r], o[r] + p_count, bias ? bias[co0 + r] : 0.0);
        }
        if (nb == 4) {
          double* o0 = o[0];
          double* o1 = o[1];
          double* o2 = o[2];
          double* o3 = o[3];
          const double* w = weight + co0 * k_count;
          for (int64_t k = 0; k < k_count; ++k) {
            const double w0 = w[k], w1 = w[k_count + k];
            const double w2 = w[2 * k_count + k], w3 = w[3 * k_count + k];
            const double* col = c.data + k * c.ld;
#pragma omp simd
            for (int64_t p = 0; p < p_count; ++p) {
              const double v = col[p];
              o0[p] += w0 * v;
              o1[p] += w1 * v;
              o2[p] += w2 * v;
              o3[p] += w3 * v;
            }
          }
        } else {
          for (int64_t r = 0; r < nb; ++r) {
            double* orow = o[r];
            const double* w = weight + (co0 + r) * k_count;
            for (int64_t k = 0; k < k_count; ++k) {
              const double wk = w[k];
              const double* col = c.data + k * c.ld;
#pragma omp simd
              for (int64_t p = 0; p < p_count; ++p) orow[p] += wk * col[p];
            }
          }
        }
      }
    }
  }
}

void ConvBackwardInput(const ConvGeometry& g, const double* grad_output,
                       const double* weight, double* grad_input) {
  const int64_t plane_in = g.in_h * g.in_w;
  const int64_t plane_out = g.out_h * g.out_w;
  const int64_t k_count = g.in_channels * g.kernel_h * g.kernel_w;
  const int64_t tile = TileRows(g);
  const int64_t k_blocks = (k_count + 3) / 4;
  const bool pointwise = IsPointwise(g);
  std::vector<double> gcols;
  for (int64_t n = 0; n < g.batch; ++n) {
    double* gx = grad_input + n * g.in_channels * plane_in;
    for (int64_t h0 = 0; h0 < g.out_h; h0 += tile) {
      const int64_t rows = std::min(tile, g.out_h - h0);
      const int64_t p_count = rows * g.out_w;
      // Pointwise geometry accumulates straight into the input gradient.
      double* dst_base = gx + h0 * g.in_w;
      int64_t ld = plane_in;
      if (!pointwise) {
        gcols.assign(static_cast<size_t>(k_count * p_count), 0.0);
        dst_base = gcols.data();
        ld = p_count;
      }
      const double* go = grad_output + n * g.out_channels * plane_out +
                         h0 * g.out_w;
#pragma omp parallel for schedule(static) if (k_blocks * g.out_channels * p_count > 32768)
      for (int64_t b = 0; b < k_blocks; ++b) {
        const int64_t k0 = 4 * b;
        const int64_t nb = std::min<int64_t>(4, k_count - k0);
        if (nb == 4) {
          double* d0 = dst_base + k0 * ld;
          double* d1 = d0 + ld;
          double* d2 = d1 + ld;
          double* d3 = d2 + ld;
          for (int64_t co = 0; co < g.out_channels; ++co) {
            const double* w = weight + co * k_count + k0;
            const double w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3];
            const double* gorow = go + co * plane_out;
#pragma omp simd
            for (int64_t p = 0; p < p_count; ++p) {
              const double v = gorow[p];
              d0[p] += w0 * v;
              d1[p] += w1 * v;
              d2[p] += w2 * v;
              d3[p] += w3 * v;
            }
          }
        } else {
          for (int64_t r = 0; r < nb; ++r) {
            double* d = dst_base + (k0 + r) * ld;
            for (int64_t co = 0; co < g.out_channels; ++co) {
              const double w = weight[co * k_count + k0 + r];
              const double* gorow = go + co * plane_out;
#pragma omp simd
              for (int64_t p = 0; p < p_count; ++p) d[p] += w * gorow[p];
            }
          }
        }
      }
      if (!pointwise) Col2Im(g, gcols.data(), h0, rows, gx);
    }
  }
}

void ConvBackwardWeight(const ConvGeometry& g, const double* grad_output,
                        const double* input, double* grad_weight,
                        double* grad_bias) {
  const int64_t plane_in = g.in_h * g.in_w;
  const int64_t plane_out = g.out_h * g.out_w;
  const int64_t k_count = g.in_channels * g.kernel_h * g.kernel_w;
  const int64_t tile = TileRows(g);
  std::vector<double> buffer;
  for (int64_t n = 0; n < g.batch; ++n) {
    for (int64_t h0 = 0; h0 < g.out_h; h0 += tile) {
      const int64_t rows = std::min(tile, g.out_h - h0);
      const int64_t p_count = rows * g.out_w;
      const Columns c =
          Im2Col(g, input + n * g.in_channels * plane_in, h0, rows, buffer);
      const double* go = grad_output + n * g.out_channels * plane_out +
                         h0 * g.out_w;
#pragma omp parallel for schedule(static) if (g.out_channels * k_count * p_count > 32768)
      for (int64_t co = 0; co < g.out_channels; ++co) {
        const double* gorow = go + co * plane_out;
        double* gw = grad_weight + co * k_count;
        int64_t k = 0;
        for (; k + 4 <= k_count; k += 4) {
          const double* c0 = c.data + k * c.ld;
          const double* c1 = c0 + c.ld;
          const double* c2 = c1 + c.ld;
          const double* c3 = c2 + c.ld;
          double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
          for (int64_t p = 0; p < p_count; ++p) {
            const double v = gorow[p];
            s0 += v * c0[p];
            s1 += v * c1[p];
            s2 += v * c2[p];
            s3 += v * c3[p];
          }
          gw[k] += s0;
          gw[k + 1] += s1;
          gw[k + 2] += s2;
          gw[k + 3] += s3;
        }
        for (; k < k_count; ++k) {
          const double* col = c.data + k * c.ld;
          double s = 0.0;
#pragma omp simd reduction(+ : s)
          for (int64_t p = 0; p < p_count; ++p) s += gorow[p] * col[p];
          gw[k] += s;
        }
      }
    }
  }
  if (grad_bias) {
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < g.out_channels; ++co) {
      double s = 0.0;
      for (int64_t n = 0; n < g.batch; ++n) {
        const double* go = grad_output + (n * g.out_channels + co) * plane_out;
#pragma omp simd reduction(+ : s)
        for (int64_t k = 0; k < plane_out; ++k) s += go[k];
      }
      grad_bias[co] += s;
    }
  }
}

void Linear(int64_t rows, int64_t in, int64_t out, const double* x,
            const double* w, const double* b, double* y) {
#pragma omp parallel for collapse(2) schedule(static) if (rows * out > 4096)
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t o = 0; o < out; ++o) {
      const double* xr = x + r * in;
      const double* wr = w + o * in;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (int64_t i = 0; i < in; ++i) s += xr[i] * wr[i];
      y[r * out + o] = s + (b ? b[o] : 0.0);
    }
  }
}

}  // namespace kernels

namespace reference {

void ConvForward(const ConvGeometry& g, const double* input,
                 const double* weight, const double* bias, double* output) {
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t co = 0; co < g.out_channels; ++co)
      for (int64_t ho = 0; ho < g.out_h; ++ho)
        for (int64_t wo = 0; wo < g.out_w; ++wo) {
          double s = bias ? bias[co] : 0.0;
          for (int64_t ci = 0; ci < g.in_channels; ++ci)
            for (int64_t i = 0; i < g.kernel_h; ++i)
              for (int64_t j = 0; j < g.kernel_w; ++j) {
                const int64_t hi = ho * g.stride_h - g.pad_h + i * g.dilation_h;
                const int64_t wi = wo * g.stride_w - g.pad_w + j * g.dilation_w;
                if (hi < 0 || hi >= g.in_h || wi < 0 || wi >= g.in_w) continue;
                s += weight[((co * g.in_channels + ci) * g.kernel_h + i) *
                                g.kernel_w + j] *
                     input[((n * g.in_channels + ci) * g.in_h + hi) * g.in_w +
                           wi];
              }
          output[((n * g.out_channels + co) * g.out_h + ho) * g.out_w + wo] = s;
        }
}

void ConvBackwardInput(const ConvGeometry& g, const double* grad_output,
                       const double* weight, double* grad_input) {
  for (int64_t n = 0; n < g.batch; ++n)
    for (int64_t ci = 0; ci < g.in_channels; ++ci)
      for (int64_t hi = 0; hi < g.in_h; ++hi)
        for (int64_t wi = 0; wi < g.in_w; ++wi) {
          double s = 0.0;
          for (int64_t co = 0; co < g.out_channels; ++co)
            for (int64_t i = 0; i < g.kernel_h; ++i)
              for (int64_t j = 0; j < g.kernel_w; ++j) {
                const int64_t th = hi + g.pad_h - i * g.dilation_h;
                const int64_t tw = wi + g.pad_w - j * g.dilation_w;
                if (th < 0 || tw < 0 || th % g.stride_h || tw % g.stride_w)
                  continue;
                const int64_t ho = th / g.stride_h, wo = tw / g.stride_w;
                if (ho >= g.out_h || wo >= g.out_w) continue;
                s += weight[((co * g.in_channels + ci) * g.kernel_h + i) *
                                g.kernel_w + j] *
                     grad_output[((n * g.out_channels + co) * g.out_h + ho) *
                                     g.out_w + wo];
              }
          grad_input[((n * g.in_channels + ci) * g.in_h + hi) * g.in_w + wi] +=
              s;
        }
}

void ConvBackwardWeight(const ConvGeometry& g, const double* grad_output,
                        const double* input, double* grad_weight,
                        double* grad_bias) {
  for (int64_t co = 0; co < g.out_channels; ++co) {
    for (int64_t ci = 0; ci < g.in_channels; ++ci)
      for (int64_t i = 0; i < g.kernel_h; ++i)
        for (int64_t j = 0; j < g.kernel_w; ++j) {
          double s = 0.0;
          for (int64_t n = 0; n < g.batch; ++n)
            for (int64_t ho = 0; ho < g.out_h; ++ho)
              for (int64_t wo = 0; wo < g.out_w; ++wo) {
                const int64_t hi = ho * g.stride_h - g.pad_h + i * g.dilation_h;
                const int64_t wi = wo * g.stride_w - g.pad_w + j * g.dilation_w;
                if (hi < 0 || hi >= g.in_h || wi < 0 || wi >= g.in_w) continue;
                s += grad_output[((n * g.out_channels + co) * g.out_h + ho) *
                                     g.out_w + wo] *
                     input[((n * g.in_channels + ci) * g.in_h + hi) * g.in_w +
                           wi];
              }
          grad_weight[((co * g.in_channels + ci) * g.kernel_h + i) *
                          g.kernel_w + j] += s;
        }
    if (grad_bias) {
      double s = 0.0;
      for (int64_t n = 0; n < g.batch; ++n)
        for (int64_t k = 0; k < g.out_h * g.out_w; ++k)
          s += grad_output[(n * g.out_channels + co) * g.out_h * g.out_w + k];
      grad_bias[co] += s;
    }
  }
}

void Linear(int64_t rows, int64_t in, int64_t out, const double* x,
            const double* w, const double* b, double* y) {
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t o = 0; o < out; ++o) {
      double s = b ? b[o] : 0.0;
      for (int64_t i = 0; i < in; ++i) s += x[r * in + i] * w[o * in + i];
      y[r * out + o] = s;
    }
}

}  // namespace reference

}  // namespace ska
