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

#include "ska/ops.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "ska/error.h"

namespace ska::op {

namespace {

// Adds g into the gradient of parent `i` when that parent takes gradients.
void Accumulate(Node& self, size_t i, const Array& g) {
  Node* p = self.parents[i].get();
  if (!p || !p->requires_grad) return;
  Array& dst = p->GradBuffer();
  double* d = dst.data();
  const double* s = g.data();
  const int64_t n = dst.size();
  for (int64_t k = 0; k < n; ++k) d[k] += s[k];
}

bool Wants(const Node& self, size_t i) {
  const Node* p = self.parents[i].get();
  return p && p->requires_grad;
}

int NormalizeAxis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ContractError("axis " + std::to_string(axis) +
                        " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

// Views a shape as (outer, extent, inner) around `axis`.
struct AxisSplit {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit SplitAt(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape mismatch " +
                        ShapeString(a.shape()) + " vs " +
                        ShapeString(b.shape()));
  }
}

template <typename F, typename D>
Tensor Unary(const Tensor& x, F forward, D derivative) {
  const Array& xv = x.value();
  Array y(xv.shape());
  for (int64_t i = 0; i < y.size(); ++i) y[i] = forward(xv[i]);
  return MakeResult(std::move(y), {x}, [derivative](Node& self) {
    const Array& xv = self.parents[0]->value;
    Array& gx = self.parents[0]->GradBuffer();
    for (int64_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * derivative(xv[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Add");
  Array y = a.value();
  for (int64_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return MakeResult(std::move(y), {a, b}, [](Node& self) {
    Accumulate(self, 0, self.grad);
    Accumulate(self, 1, self.grad);
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Sub");
  Array y = a.value();
  for (int64_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return MakeResult(std::move(y), {a, b}, [](Node& self) {
    Accumulate(self, 0, self.grad);
    if (Wants(self, 1)) {
      Array& gb = self.parents[1]->GradBuffer();
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Mul");
  Array y = a.value();
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return MakeResult(std::move(y), {a, b}, [](Node& self) {
    for (size_t k = 0; k < 2; ++k) {
      if (!Wants(self, k)) continue;
      const Array& other = self.parents[1 - k]->value;
      Array& g = self.parents[k]->GradBuffer();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Tensor AddN(std::span<const Tensor> terms) {
  if (terms.empty()) throw ContractError("AddN needs at least one term");
  Array y = terms[0].value();
  for (size_t k = 1; k < terms.size(); ++k) {
    RequireSameShape(terms[0], terms[k], "AddN");
    const Array& t = terms[k].value();
    for (int64_t i = 0; i < y.size(); ++i) y[i] += t[i];
  }
  std::vector<Tensor> inputs(terms.begin(), terms.end());
  return MakeResult(std::move(y), std::move(inputs), [](Node& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      Accumulate(self, k, self.grad);
    }
  });
}

Tensor Scale(const Tensor& x, double factor) {
  return Unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor AddScalar(const Tensor& x, double offset) {
  return Unary(
      x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor MulByScalar(const Tensor& x, const Tensor& s) {
  const double sv = s.value().item();
  Array y = x.value();
  for (int64_t i = 0; i < y.size(); ++i) y[i] *= sv;
  return MakeResult(std::move(y), {x, s}, [](Node& self) {
    const Array& xv = self.parents[0]->value;
    const double sv = self.parents[1]->value[0];
    if (Wants(self, 0)) {
      Array& gx = self.parents[0]->GradBuffer();
      for (int64_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * sv;
    }
    if (Wants(self, 1)) {
      double acc = 0.0;
      for (int64_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      self.parents[1]->GradBuffer()[0] += acc;
    }
  });
}

Tensor AddByScalar(const Tensor& x, const Tensor& s) {
  const double sv = s.value().item();
  Array y = x.value();
  for (int64_t i = 0; i < y.size(); ++i) y[i] += sv;
  return MakeResult(std::move(y), {x, s}, [](Node& self) {
    Accumulate(self, 0, self.grad);
    if (Wants(self, 1)) {
      double acc = 0.0;
      for (int64_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i];
      self.parents[1]->GradBuffer()[0] += acc;
    }
  });
}

Tensor Relu(const Tensor& x) {
  return Unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(const Tensor& x) {
  return Unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor Tanh(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor Exp(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor Sqrt(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor Square(const Tensor& x) {
  return Unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor ClampMin(const Tensor& x, double floor) {
  return Unary(
      x, [floor](double v) { return v > floor ? v : floor; },
      [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& o) {
  const ConvGeometry g =
      MakeConvGeometry(x.shape(), weight.shape(), o.stride_h, o.stride_w,
                       o.dilation_h, o.dilation_w, o.padding);
  if (bias.defined() && bias.shape() != Shape{g.out_channels}) {
    throw ConfigError("convolution bias " + ShapeString(bias.shape()) +
                      " does not match " + std::to_string(g.out_channels) +
                      " output channels");
  }
  Array y({g.batch, g.out_channels, g.out_h, g.out_w});
  kernels::ConvForward(g, x.value().data(), weight.value().data(),
                       bias.defined() ? bias.value().data() : nullptr,
                       y.data());
  return MakeResult(std::move(y), {x, weight, bias}, [g](Node& self) {
    if (Wants(self, 0)) {
      kernels::ConvBackwardInput(g, self.grad.data(),
                                 self.parents[1]->value.data(),
                                 self.parents[0]->GradBuffer().data());
    }
    const bool want_bias = Wants(self, 2);
    if (Wants(self, 1)) {
      kernels::ConvBackwardWeight(
          g, self.grad.data(), self.parents[0]->value.data(),
          self.parents[1]->GradBuffer().data(),
          want_bias ? self.parents[2]->GradBuffer().data() : nullptr);
    } else if (want_bias) {
      Array& gb = self.parents[2]->GradBuffer();
      const int64_t plane = g.out_h * g.out_w;
      for (int64_t n = 0; n < g.batch; ++n)
        for (int64_t c = 0; c < g.out_channels; ++c)
          for (int64_t k = 0; k < plane; ++k)
            gb[c] += self.grad[(n * g.out_channels + c) * plane + k];
    }
  });
}

Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int64_t dilation) {
  if (x.rank() != 3 || weight.rank() != 3) {
    throw ConfigError("Conv1d expects (B, C, T) input and (Co, Ci, K) weight");
  }
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  Conv2dOptions o;
  o.dilation_w = dilation;
  Tensor y = Conv2d(Reshape(x, {xs[0], xs[1], 1, xs[2]}),
                    Reshape(weight, {ws[0], ws[1], 1, ws[2]}), bias, o);
  return Reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

Tensor BatchNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Array* running_mean, Array* running_var,
                 const BatchNormOptions& o) {
  if (x.rank() < 2) throw ContractError("BatchNorm expects rank >= 2 input");
  const Shape& shape = x.shape();
  const int64_t batch = shape[0];
  const int64_t channels = shape[1];
  const int64_t inner = x.value().size() / (batch * channels);
  const int64_t count = batch * inner;
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw ContractError("BatchNorm affine parameters do not match " +
                        std::to_string(channels) + " channels");
  }
  if (!o.training || (o.update_running_stats && running_mean)) {
    if (!running_mean || !running_var ||
        running_mean->shape() != Shape{channels} ||
        running_var->shape() != Shape{channels}) {
      throw ContractError("BatchNorm running statistics do not match " +
                          std::to_string(channels) + " channels");
    }
  }
  const Array& xv = x.value();
  std::vector<double> mean(channels), inv_std(channels);
  if (o.training) {
    for (int64_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int64_t n = 0; n < batch; ++n) {
        const double* p = xv.data() + (n * channels + c) * inner;
        for (int64_t k = 0; k < inner; ++k) s += p[k];
      }
      const double mu = s / count;
      double v = 0.0;
      for (int64_t n = 0; n < batch; ++n) {
        const double* p = xv.data() + (n * channels + c) * inner;
        for (int64_t k = 0; k < inner; ++k) v += (p[k] - mu) * (p[k] - mu);
      }
      v /= count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(v + o.eps);
      if (o.update_running_stats && running_mean) {
        const double unbiased = count > 1 ? v * count / (count - 1) : v;
        (*running_mean)[c] =
            (1.0 - o.momentum) * (*running_mean)[c] + o.momentum * mu;
        (*running_var)[c] =
            (1.0 - o.momentum) * (*running_var)[c] + o.momentum * unbiased;
      }
    }
  } else {
    for (int64_t c = 0; c < channels; ++c) {
      mean[c] = (*running_mean)[c];
      inv_std[c] = 1.0 / std::sqrt((*running_var)[c] + o.eps);
    }
  }
  Array y(shape);
  const Array& gv = gamma.value();
  const Array& bv = beta.value();
  for (int64_t n = 0; n < batch; ++n) {
    for (int64_t c = 0; c < channels; ++c) {
      const double scale = gv[c] * inv_std[c];
      const double shift = bv[c] - mean[c] * scale;
      const double* p = xv.data() + (n * channels + c) * inner;
      double* q = y.data() + (n * channels + c) * inner;
      for (int64_t k = 0; k < inner; ++k) q[k] = p[k] * scale + shift;
    }
  }
  const bool training = o.training;
  return MakeResult(
      std::move(y), {x, gamma, beta},
      [=, mean = std::move(mean), inv_std = std::move(inv_std)](Node& self) {
        const Array& xv = self.parents[0]->value;
        const Array& gv = self.parents[1]->value;
        const Array& g = self.grad;
        for (int64_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t n = 0; n < batch; ++n) {
            const int64_t base = (n * channels + c) * inner;
            for (int64_t k = 0; k < inner; ++k) {
              const double xhat = (xv[base + k] - mean[c]) * inv_std[c];
              sum_g += g[base + k];
              sum_gx += g[base + k] * xhat;
            }
          }
          if (Wants(self, 1)) self.parents[1]->GradBuffer()[c] += sum_gx;
          if (Wants(self, 2)) self.parents[2]->GradBuffer()[c] += sum_g;
          if (!Wants(self, 0)) continue;
          Array& gx = self.parents[0]->GradBuffer();
          const double scale = gv[c] * inv_std[c];
          for (int64_t n = 0; n < batch; ++n) {
            const int64_t base = (n * channels + c) * inner;
            for (int64_t k = 0; k < inner; ++k) {
              if (training) {
                const double xhat = (xv[base + k] - mean[c]) * inv_std[c];
                gx[base + k] += scale * (g[base + k] - sum_g / count -
                                         xhat * sum_gx / count);
              } else {
                gx[base + k] += scale * g[base + k];
              }
            }
          }
        }
      });
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ContractError("Linear shape mismatch: input " +
                        ShapeString(x.shape()) + ", weight " +
                        ShapeString(weight.shape()));
  }
  const int64_t rows = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (bias.defined() && bias.shape() != Shape{out}) {
    throw ContractError("Linear bias does not match output width");
  }
  Array y({rows, out});
  kernels::Linear(rows, in, out, x.value().data(), weight.value().data(),
                  bias.defined() ? bias.value().data() : nullptr, y.data());
  return MakeResult(std::move(y), {x, weight, bias},
                    [rows, in, out](Node& self) {
                      const Array& g = self.grad;
                      const Array& xv = self.parents[0]->value;
                      const Array& wv = self.parents[1]->value;
                      if (Wants(self, 0)) {
                        Array& gx = self.parents[0]->GradBuffer();
                        for (int64_t r = 0; r < rows; ++r)
                          for (int64_t o = 0; o < out; ++o) {
                            const double go = g[r * out + o];
                            for (int64_t i = 0; i < in; ++i)
                              gx[r * in + i] += go * wv[o * in + i];
                          }
                      }
                      if (Wants(self, 1)) {
                        Array& gw = self.parents[1]->GradBuffer();
                        for (int64_t r = 0; r < rows; ++r)
                          for (int64_t o = 0; o < out; ++o) {
                            const double go = g[r * out + o];
                            for (int64_t i = 0; i < in; ++i)
                              gw[o * in + i] += go * xv[r * in + i];
                          }
                      }
                      if (Wants(self, 2)) {
                        Array& gb = self.parents[2]->GradBuffer();
                        for (int64_t r = 0; r < rows; ++r)
                          for (int64_t o = 0; o < out; ++o)
                            gb[o] += g[r * out + o];
                      }
                    });
}

Tensor Softmax(const Tensor& x, int axis) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  const Array& xv = x.value();
  Array y(x.shape());
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.extent * s.inner + i;
      double peak = xv[base];
      for (int64_t k = 1; k < s.extent; ++k)
        peak = std::max(peak, xv[base + k * s.inner]);
      double total = 0.0;
      for (int64_t k = 0; k < s.extent; ++k) {
        const double e = std::exp(xv[base + k * s.inner] - peak);
        y[base + k * s.inner] = e;
        total += e;
      }
      for (int64_t k = 0; k < s.extent; ++k) y[base + k * s.inner] /= total;
    }
  }
  return MakeResult(std::move(y), {x}, [s](Node& self) {
    Array& gx = self.parents[0]->GradBuffer();
    const Array& y = self.value;
    const Array& g = self.grad;
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t i = 0; i < s.inner; ++i) {
        const int64_t base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (int64_t k = 0; k < s.extent; ++k) {
          dot += g[base + k * s.inner] * y[base + k * s.inner];
        }
        for (int64_t k = 0; k < s.extent; ++k) {
          const int64_t idx = base + k * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

namespace {

Shape DropAxis(const Shape& shape, int axis) {
  Shape out;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (static_cast<int>(i) != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

Tensor ReduceAxis(const Tensor& x, int axis, double factor) {
  axis = NormalizeAxis(axis, x.rank());
  const AxisSplit s = SplitAt(x.shape(), axis);
  const Array& xv = x.value();
  Array y(DropAxis(x.shape(), axis));
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t k = 0; k < s.extent; ++k) {
      const double* src = xv.data() + (o * s.extent + k) * s.inner;
      double* dst = y.data() + o * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (factor != 1.0) {
    for (int64_t i = 0; i < y.size(); ++i) y[i] *= factor;
  }
  return MakeResult(std::move(y), {x}, [s, factor](Node& self) {
    Array& gx = self.parents[0]->GradBuffer();
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t k = 0; k < s.extent; ++k) {
        double* dst = gx.data() + (o * s.extent + k) * s.inner;
        const double* src = self.grad.data() + o * s.inner;
        for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i] * factor;
      }
    }
  });
}

}  // namespace

Tensor Sum(const Tensor& x, int axis) { return ReduceAxis(x, axis, 1.0); }

Tensor Mean(const Tensor& x, int axis) {
  const int a = NormalizeAxis(axis, x.rank());
  return ReduceAxis(x, a, 1.0 / static_cast<double>(x.dim(a)));
}

Tensor Mean(const Tensor& x, std::vector<int> axes) {
  for (int& a : axes) a = NormalizeAxis(a, x.rank());
  std::sort(axes.rbegin(), axes.rend());
  if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
    throw ContractError("Mean: repeated axis");
  }
  // Trailing contiguous axes collapse into one reduction.
  Tensor y = x;
  size_t k = 0;
  if (!axes.empty() && axes[0] == x.rank() - 1) {
    size_t run = 1;
    while (run < axes.size() && axes[run] == axes[run - 1] - 1) ++run;
    if (run > 1) {
      Shape flat(x.shape().begin(), x.shape().end() - run);
      int64_t tail = 1;
      for (size_t i = x.shape().size() - run; i < x.shape().size(); ++i)
        tail *= x.shape()[i];
      flat.push_back(tail);
      y = Mean(Reshape(y, flat), static_cast<int>(flat.size()) - 1);
      k = run;
    }
  }
  for (; k < axes.size(); ++k) y = Mean(y, axes[k]);
  return y;
}

Tensor SumAll(const Tensor& x) {
  return Sum(Reshape(x, {x.value().size()}), 0);
}

Tensor MeanAll(const Tensor& x) {
  return Mean(Reshape(x, {x.value().size()}), 0);
}

Tensor Reshape(const Tensor& x, Shape shape) {
  Array y = x.value().Reshaped(std::move(shape));
  return MakeResult(std::move(y), {x}, [](Node& self) {
    Accumulate(self, 0, self.grad);
  });
}

Tensor Concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("Concat needs at least one part");
  axis = NormalizeAxis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) throw ContractError("Concat rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ContractError("Concat shape mismatch " + ShapeString(p.shape()) +
                          " vs " + ShapeString(parts[0].shape()));
    }
    total += p.dim(axis);
  }
  out_shape[axis] = total;
  const AxisSplit s = SplitAt(out_shape, axis);
  Array y(out_shape);
  std::vector<int64_t> extents;
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t e = p.dim(axis);
    const Array& v = p.value();
    for (int64_t o = 0; o < s.outer; ++o) {
      std::copy(v.data() + o * e * s.inner, v.data() + (o + 1) * e * s.inner,
                y.data() + (o * s.extent + offset) * s.inner);
    }
    extents.push_back(e);
    offset += e;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return MakeResult(std::move(y), std::move(inputs),
                    [s, extents = std::move(extents)](Node& self) {
                      int64_t offset = 0;
                      for (size_t k = 0; k < extents.size(); ++k) {
                        const int64_t e = extents[k];
                        if (Wants(self, k)) {
                          Array& g = self.parents[k]->GradBuffer();
                          for (int64_t o = 0; o < s.outer; ++o) {
                            const double* src =
                                self.grad.data() +
                                (o * s.extent + offset) * s.inner;
                            double* dst = g.data() + o * e * s.inner;
                            for (int64_t i = 0; i < e * s.inner; ++i)
                              dst[i] += src[i];
                          }
                        }
                        offset += e;
                      }
                    });
}

Tensor Slice(const Tensor& x, int axis, int64_t start, int64_t length) {
  axis = NormalizeAxis(axis, x.rank());
  if (start < 0 || length < 1 || start + length > x.dim(axis)) {
    throw ContractError("Slice [" + std::to_string(start) + ", " +
                        std::to_string(start + length) + ") out of range for " +
                        ShapeString(x.shape()));
  }
  const AxisSplit s = SplitAt(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Array y(out_shape);
  const Array& v = x.value();
  for (int64_t o = 0; o < s.outer; ++o) {
    std::copy(v.data() + (o * s.extent + start) * s.inner,
              v.data() + (o * s.extent + start + length) * s.inner,
              y.data() + o * length * s.inner);
  }
  return MakeResult(std::move(y), {x}, [s, start, length](Node& self) {
    Array& g = self.parents[0]->GradBuffer();
    for (int64_t o = 0; o < s.outer; ++o) {
      const double* src = self.grad.data() + o * length * s.inner;
      double* dst = g.data() + (o * s.extent + start) * s.inner;
      for (int64_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Tensor Stack(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("Stack needs at least one part");
  const int rank = parts[0].rank();
  if (axis < 0) axis += rank + 1;
  if (axis < 0 || axis > rank) throw ContractError("Stack axis out of range");
  std::vector<Tensor> lifted;
  lifted.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ContractError("Stack shape mismatch");
    }
    Shape s = p.shape();
    s.insert(s.begin() + axis, 1);
    lifted.push_back(Reshape(p, s));
  }
  return Concat(lifted, axis);
}

Tensor Expand(const Tensor& x, int axis, int64_t n) {
  const int rank = x.rank();
  if (axis < 0) axis += rank + 1;
  if (axis < 0 || axis > rank || n < 1) {
    throw ContractError("Expand arguments out of range");
  }
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis; i < rank; ++i) inner *= x.shape()[i];
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + axis, n);
  Array y(out_shape);
  const Array& v = x.value();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < n; ++k)
      std::copy(v.data() + o * inner, v.data() + (o + 1) * inner,
                y.data() + (o * n + k) * inner);
  return MakeResult(std::move(y), {x}, [outer, inner, n](Node& self) {
    Array& g = self.parents[0]->GradBuffer();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t k = 0; k < n; ++k) {
        const double* src = self.grad.data() + (o * n + k) * inner;
        double* dst = g.data() + o * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

Tensor ScaleAlong(const Tensor& x, const Tensor& weights, int axis) {
  axis = NormalizeAxis(axis, x.rank());
  if (axis == 0 || weights.rank() != 2 || weights.dim(0) != x.dim(0) ||
      weights.dim(1) != x.dim(axis)) {
    throw ContractError("ScaleAlong: weights " +
                        ShapeString(weights.shape()) + " do not match axis " +
                        std::to_string(axis) + " of " +
                        ShapeString(x.shape()));
  }
  const int64_t batch = x.dim(0);
  const int64_t n = x.dim(axis);
  int64_t mid = 1, inner = 1;
  for (int i = 1; i < axis; ++i) mid *= x.shape()[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  const Array& xv = x.value();
  const Array& wv = weights.value();
  Array y(x.shape());
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t m = 0; m < mid; ++m)
      for (int64_t j = 0; j < n; ++j) {
        const double w = wv[b * n + j];
        const int64_t base = ((b * mid + m) * n + j) * inner;
        for (int64_t i = 0; i < inner; ++i) y[base + i] = xv[base + i] * w;
      }
  return MakeResult(
      std::move(y), {x, weights}, [batch, mid, n, inner](Node& self) {
        const Array& xv = self.parents[0]->value;
        const Array& wv = self.parents[1]->value;
        const Array& g = self.grad;
        const bool want_x = Wants(self, 0), want_w = Wants(self, 1);
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t m = 0; m < mid; ++m)
            for (int64_t j = 0; j < n; ++j) {
              const int64_t base = ((b * mid + m) * n + j) * inner;
              if (want_x) {
                Array& gx = self.parents[0]->GradBuffer();
                const double w = wv[b * n + j];
                for (int64_t i = 0; i < inner; ++i) gx[base + i] += g[base + i] * w;
              }
              if (want_w) {
                double acc = 0.0;
                for (int64_t i = 0; i < inner; ++i) acc += g[base + i] * xv[base + i];
                self.parents[1]->GradBuffer()[b * n + j] += acc;
              }
            }
      });
}

Tensor L2NormalizeRows(const Tensor& x, double eps) {
  if (x.rank() != 2) throw ContractError("L2NormalizeRows expects (R, D)");
  const int64_t rows = x.dim(0), d = x.dim(1);
  const Array& xv = x.value();
  Array y(x.shape());
  std::vector<double> norms(rows);
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int64_t i = 0; i < d; ++i) s += xv[r * d + i] * xv[r * d + i];
    norms[r] = std::max(std::sqrt(s), eps);
    for (int64_t i = 0; i < d; ++i) y[r * d + i] = xv[r * d + i] / norms[r];
  }
  return MakeResult(
      std::move(y), {x},
      [rows, d, eps, norms = std::move(norms)](Node& self) {
        Array& gx = self.parents[0]->GradBuffer();
        const Array& y = self.value;
        const Array& g = self.grad;
        for (int64_t r = 0; r < rows; ++r) {
          if (norms[r] <= eps) {
            for (int64_t i = 0; i < d; ++i) gx[r * d + i] += g[r * d + i] / eps;
            continue;
          }
          double dot = 0.0;
          for (int64_t i = 0; i < d; ++i) dot += y[r * d + i] * g[r * d + i];
          for (int64_t i = 0; i < d; ++i) {
            gx[r * d + i] += (g[r * d + i] - y[r * d + i] * dot) / norms[r];
          }
        }
      });
}

Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 ||
      logits.dim(0) != static_cast<int64_t>(labels.size())) {
    throw ContractError("CrossEntropy expects (R, K) logits and R labels");
  }
  const int64_t rows = logits.dim(0), k = logits.dim(1);
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ContractError("CrossEntropy label " + std::to_string(label) +
                          " outside [0, " + std::to_string(k) + ")");
    }
  }
  const Array& z = logits.value();
  Array probs({rows, k});
  double loss = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    double peak = z[r * k];
    for (int64_t j = 1; j < k; ++j) peak = std::max(peak, z[r * k + j]);
    double total = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      probs[r * k + j] = std::exp(z[r * k + j] - peak);
      total += probs[r * k + j];
    }
    for (int64_t j = 0; j < k; ++j) probs[r * k + j] /= total;
    loss += std::log(total) + peak - z[r * k + labels[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<int> label_copy(labels.begin(), labels.end());
  return MakeResult(Array::Scalar(loss), {logits},
                    [rows, k, probs = std::move(probs),
                     label_copy = std::move(label_copy)](Node& self) {
                      Array& g = self.parents[0]->GradBuffer();
                      const double scale = self.grad[0] / rows;
                      for (int64_t r = 0; r < rows; ++r) {
                        for (int64_t j = 0; j < k; ++j) {
                          const double target = j == label_copy[r] ? 1.0 : 0.0;
                          g[r * k + j] += scale * (probs[r * k + j] - target);
                        }
                      }
                    });
}

Tensor AamLogits(const Tensor& cosines, std::span<const int> labels,
                 double margin, double scale) {
  if (cosines.rank() != 2 ||
      cosines.dim(0) != static_cast<int64_t>(labels.size())) {
    throw ContractError("AamLogits expects (R, K) cosines and R labels");
  }
  const int64_t rows = cosines.dim(0), k = cosines.dim(1);
  const double cos_m = std::cos(margin), sin_m = std::sin(margin);
  const double threshold = std::cos(M_PI - margin);
  const double fallback = std::sin(M_PI - margin) * margin;
  const Array& c = cosines.value();
  Array y(cosines.shape());
  std::vector<double> target_slope(rows);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < k; ++j) y[r * k + j] = scale * c[r * k + j];
    const int label = labels[r];
    if (label < 0 || label >= k) {
      throw ContractError("AamLogits label out of range");
    }
    const double ct = c[r * k + label];
    double phi, slope;
    if (ct > threshold) {
      const double sine = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      phi = ct * cos_m - sine * sin_m;
      slope = cos_m + (sine > 1e-12 ? ct * sin_m / sine : 0.0);
    } else {
      phi = ct - fallback;
      slope = 1.0;
    }
    y[r * k + label] = scale * phi;
    target_slope[r] = slope;
  }
  std::vector<int> label_copy(labels.begin(), labels.end());
  return MakeResult(std::move(y), {cosines},
                    [rows, k, scale, target_slope = std::move(target_slope),
                     label_copy = std::move(label_copy)](Node& self) {
                      Array& g = self.parents[0]->GradBuffer();
                      for (int64_t r = 0; r < rows; ++r) {
                        for (int64_t j = 0; j < k; ++j) {
                          const double slope =
                              j == label_copy[r] ? target_slope[r] : 1.0;
                          g[r * k + j] += scale * slope * self.grad[r * k + j];
                        }
                      }
                    });
}

}  // namespace ska::op
