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

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "ska/error.h"
#include "ska/grad_check.h"
#include "ska/ops.h"
#include "ska/ska_attention.h"
#include "test_util.h"

namespace ska {
namespace {

using testing::RandomArray;

// Training-mode batch norm over every axis except 1, biased variance.
Array OracleBatchNorm(const Array& x, const Array& gamma, const Array& beta) {
  const int64_t batch = x.dim(0), channels = x.dim(1);
  const int64_t inner = x.size() / (batch * channels);
  Array y(x.shape());
  for (int64_t c = 0; c < channels; ++c) {
    long double sum = 0, sq = 0;
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < inner; ++i) sum += x[(b * channels + c) * inner + i];
    const long double n = static_cast<long double>(batch * inner);
    const long double mean = sum / n;
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < inner; ++i) {
        const long double d = x[(b * channels + c) * inner + i] - mean;
        sq += d * d;
      }
    const long double inv = 1.0L / std::sqrt(sq / n + 1e-5L);
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t k = (b * channels + c) * inner + i;
        y[k] = static_cast<double>(gamma[c] * (x[k] - mean) * inv + beta[c]);
      }
  }
  return y;
}

Array OracleRelu(Array x) {
  for (double& v : x.values()) v = v > 0 ? v : 0.0;
  return x;
}

Array OracleConv2dSame(const Array& x, const Array& w) {
  const int64_t ci_n = x.dim(1), f_n = x.dim(2), t_n = x.dim(3);
  const int64_t co_n = w.dim(0), kf = w.dim(2), kt = w.dim(3);
  Array y({x.dim(0), co_n, f_n, t_n});
  for (int64_t n = 0; n < x.dim(0); ++n)
    for (int64_t co = 0; co < co_n; ++co)
      for (int64_t f = 0; f < f_n; ++f)
        for (int64_t t = 0; t < t_n; ++t) {
          double s = 0.0;
          for (int64_t ci = 0; ci < ci_n; ++ci)
            for (int64_t i = 0; i < kf; ++i)
              for (int64_t j = 0; j < kt; ++j) {
                const int64_t ff = f + i - kf / 2, tt = t + j - kt / 2;
                if (ff < 0 || ff >= f_n || tt < 0 || tt >= t_n) continue;
                s += w.at({co, ci, i, j}) * x.at({n, ci, ff, tt});
              }
          y.at({n, co, f, t}) = s;
        }
  return y;
}

SkaConfig Config2d(int64_t in, int64_t c, int64_t f, AttentionAxis axis,
                   std::vector<int64_t> kernels = {3, 5}) {
  SkaConfig cfg;
  cfg.in_channels = in;
  cfg.channels = c;
  cfg.freq_bins = f;
  cfg.kernel_sizes = std::move(kernels);
  cfg.axis = axis;
  cfg.reduced_dim = ReducedDim(cfg.attended_extent());
  return cfg;
}

ForwardContext Training() {
  ForwardContext ctx;
  ctx.training = true;
  return ctx;
}

// Sum over branches of the attention weight at every (batch, index).
double MaxSumDeviation(const SkaAttentionTrace& trace) {
  double worst = 0.0;
  for (int64_t j = 0; j < trace.weights[0].size(); ++j) {
    double s = 0.0;
    for (const Array& w : trace.weights) s += w[j];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

TEST_CASE("ska_branches") {
  std::mt19937_64 rng(3);
  ParameterStore store(11);
  SkaLayer one(store, "one", Config2d(4, 4, 6, AttentionAxis::kChannel, {3}));
  Tensor x = Tensor::Constant(RandomArray({2, 4, 6, 8}, rng));
  std::vector<Tensor> u = SkaBranches(x, one, Training());
  REQUIRE(u.size() == 1);
  ForwardContext ctx = Training();
  ctx.update_running_stats = false;
  Tensor plain = one.branches[0].Forward(x, ctx);
  CHECK(MaxAbsDiff(u[0].value(), plain.value()) == 0.0);

  SkaLayer two(store, "two", Config2d(4, 4, 6, AttentionAxis::kChannel));
  Tensor zero = Tensor::Constant(Array({2, 4, 6, 8}, 0.0));
  for (const Tensor& b : SkaBranches(zero, two, ctx)) {
    const Array bv = b.value();
    for (double v : bv.values()) CHECK(v == 0.0);
  }

  std::vector<Tensor> ub = SkaBranches(x, two, ctx);
  REQUIRE(ub.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    const ConvBnRelu& br = two.branches[i];
    Array expect = OracleRelu(OracleBatchNorm(
        OracleConv2dSame(x.value(), br.weight.value()), br.bn.gamma.value(),
        br.bn.beta.value()));
    CHECK(ub[i].shape() == Shape{2, 4, 6, 8});
    CHECK(MaxAbsDiff(ub[i].value(), expect) < 1e-12);
  }

  Tensor wrong = Tensor::Constant(RandomArray({2, 3, 6, 8}, rng));
  CHECK_THROWS_AS(SkaBranches(wrong, two, ctx), ConfigError);
}

TEST_CASE("ska config validation") {
  CHECK_THROWS_AS(Config2d(1, 4, 4, AttentionAxis::kChannel, {3, 3}).Validate(),
                  ConfigError);
  CHECK_THROWS_AS(Config2d(1, 4, 4, AttentionAxis::kChannel, {2, 5}).Validate(),
                  ConfigError);
  CHECK_THROWS_AS(Config2d(1, 4, 4, AttentionAxis::kChannel, {}).Validate(),
                  ConfigError);
  SkaConfig oned = Config2d(4, 4, 1, AttentionAxis::kFrequency);
  oned.two_dimensional = false;
  CHECK_THROWS_AS(oned.Validate(), ConfigError);
  CHECK(ReducedDim(128) == 16);
  CHECK(ReducedDim(16) == 4);
  CHECK(ReducedDim(80) == 10);
}

TEST_CASE("fuse") {
  std::mt19937_64 rng(5);
  Tensor a = Tensor::Constant(RandomArray({1, 2, 3, 4}, rng));
  std::vector<Tensor> one{a};
  CHECK(MaxAbsDiff(Fuse(one).value(), a.value()) == 0.0);
  std::vector<Tensor> opposite{a, op::Scale(a, -1.0)};
  const Array cancelled = Fuse(opposite).value();
  for (double v : cancelled.values()) CHECK(v == 0.0);
  Tensor b = Tensor::Constant(RandomArray({1, 2, 3, 4}, rng));
  Tensor c = Tensor::Constant(RandomArray({1, 2, 3, 4}, rng));
  std::vector<Tensor> three{a, b, c};
  Array f = Fuse(three).value();
  for (int64_t i = 0; i < f.size(); ++i) {
    CHECK(f[i] == (a.value()[i] + b.value()[i]) + c.value()[i]);
  }
}

TEST_CASE("squeeze along channel and frequency") {
  Tensor constant = Tensor::Constant(Array({2, 3, 4, 5}, 1.25));
  const Array c_const = SqueezeChannel(constant).value();
  const Array f_const = SqueezeFrequency(constant).value();
  for (double v : c_const.values()) CHECK(v == 1.25);
  for (double v : f_const.values()) CHECK(v == 1.25);

  Array hot({1, 3, 4, 5}, 0.0);
  hot.at({0, 1, 2, 3}) = 1.0;
  Array sc = SqueezeChannel(Tensor::Constant(hot)).value();
  CHECK(sc.shape() == Shape{1, 3});
  CHECK(sc[1] == doctest::Approx(1.0 / 20.0).epsilon(1e-15));
  CHECK(sc[0] == 0.0);
  Array sf = SqueezeFrequency(Tensor::Constant(hot)).value();
  CHECK(sf.shape() == Shape{1, 4});
  CHECK(sf[2] == doctest::Approx(1.0 / 15.0).epsilon(1e-15));
  CHECK(sf[0] == 0.0);

  std::mt19937_64 rng(8);
  Array u = RandomArray({2, 3, 4, 5}, rng);
  Array c = SqueezeChannel(Tensor::Constant(u)).value();
  Array f = SqueezeFrequency(Tensor::Constant(u)).value();
  for (int64_t b = 0; b < 2; ++b) {
    for (int64_t ch = 0; ch < 3; ++ch) {
      long double s = 0;
      for (int64_t i = 0; i < 4; ++i)
        for (int64_t t = 0; t < 5; ++t) s += u.at({b, ch, i, t});
      CHECK(std::abs(c.at({b, ch}) - static_cast<double>(s / 20)) < 1e-14);
    }
    for (int64_t i = 0; i < 4; ++i) {
      long double s = 0;
      for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t t = 0; t < 5; ++t) s += u.at({b, ch, i, t});
      CHECK(std::abs(f.at({b, i}) - static_cast<double>(s / 15)) < 1e-14);
    }
  }
  CHECK_THROWS_AS(SqueezeFrequency(Tensor::Constant(Array({2, 3, 4}))),
                  ContractError);
}

TEST_CASE("compact") {
  ParameterStore store(1);
  BatchNormLayer bn(store, "bn", 4);
  std::mt19937_64 rng(9);
  Tensor s = Tensor::Constant(RandomArray({3, 6}, rng));

  bn.gamma.mutable_value().Fill(0.0);
  Tensor zero_w = Tensor::Constant(Array({4, 6}, 0.0));
  const Array z0 = Compact(s, zero_w, bn, Training()).value();
  for (double v : z0.values()) CHECK(v == 0.0);

  BatchNormLayer unit(store, "unit", 6);
  Array eye({6, 6}, 0.0);
  for (int64_t i = 0; i < 6; ++i) eye.at({i, i}) = 1.0;
  Array z = Compact(s, Tensor::Constant(eye), unit, ForwardContext{}).value();
  for (int64_t i = 0; i < z.size(); ++i) {
    const double expect = std::max(s.value()[i], 0.0) / std::sqrt(1.0 + 1e-5);
    CHECK(std::abs(z[i] - expect) < 1e-15);
    CHECK(std::abs(z[i] - std::max(s.value()[i], 0.0)) <=
          1e-5 * std::abs(s.value()[i]));
  }

  BatchNormLayer third(store, "third", 4);
  Array w = RandomArray({4, 6}, rng);
  Array g = RandomArray({4}, rng), be = RandomArray({4}, rng);
  third.gamma.mutable_value() = g;
  third.beta.mutable_value() = be;
  Array ws({3, 4}, 0.0);
  for (int64_t b = 0; b < 3; ++b)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t j = 0; j < 6; ++j) ws.at({b, i}) += w.at({i, j}) * s.value().at({b, j});
  Array expect = OracleRelu(OracleBatchNorm(ws, g, be));
  Array got = Compact(s, Tensor::Constant(w), third, Training()).value();
  CHECK(MaxAbsDiff(got, expect) < 1e-12);
}

TEST_CASE("select") {
  std::mt19937_64 rng(10);
  Tensor z = Tensor::Constant(RandomArray({2, 4}, rng));
  Tensor a = Tensor::Constant(RandomArray({6, 4}, rng));
  std::vector<Tensor> same{a, a, a};
  for (const Tensor& w : Select(z, same)) {
    const Array wv = w.value();
    for (double v : wv.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  std::vector<Tensor> single{a};
  const Array w1 = Select(z, single)[0].value();
  for (double v : w1.values()) CHECK(v == 1.0);

  Tensor a2 = Tensor::Constant(RandomArray({6, 4}, rng));
  std::vector<Tensor> pair{a, a2};
  std::vector<Tensor> w = Select(z, pair);
  for (int64_t b = 0; b < 2; ++b)
    for (int64_t j = 0; j < 6; ++j) {
      long double l0 = 0, l1 = 0;
      for (int64_t k = 0; k < 4; ++k) {
        l0 += static_cast<long double>(a.value().at({j, k})) * z.value().at({b, k});
        l1 += static_cast<long double>(a2.value().at({j, k})) * z.value().at({b, k});
      }
      const long double m = std::max(l0, l1);
      const long double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      CHECK(std::abs(w[0].value().at({b, j}) - static_cast<double>(e0 / (e0 + e1))) < 1e-15);
      CHECK(std::abs(w[1].value().at({b, j}) - static_cast<double>(e1 / (e0 + e1))) < 1e-15);
    }
}

TEST_CASE("recalibrate") {
  std::mt19937_64 rng(12);
  Tensor u0 = Tensor::Constant(RandomArray({2, 3, 4, 5}, rng));
  Tensor u1 = Tensor::Constant(RandomArray({2, 3, 4, 5}, rng));
  std::vector<Tensor> us{u0, u1};
  std::vector<Tensor> hard{Tensor::Constant(Array({2, 3}, 1.0)),
                           Tensor::Constant(Array({2, 3}, 0.0))};
  CHECK(MaxAbsDiff(Recalibrate(us, hard, AttentionAxis::kChannel).value(),
                   u0.value()) == 0.0);
  std::vector<Tensor> equal_branches{u0, u0};
  std::vector<Tensor> halves{Tensor::Constant(Array({2, 4}, 0.5)),
                             Tensor::Constant(Array({2, 4}, 0.5))};
  CHECK(MaxAbsDiff(
            Recalibrate(equal_branches, halves, AttentionAxis::kFrequency).value(),
            u0.value()) == 0.0);

  Array a = RandomArray({2, 4}, rng);
  Array b(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) {
    a[i] = 1.0 / (1.0 + std::exp(-a[i]));
    b[i] = 1.0 - a[i];
  }
  std::vector<Tensor> ws{Tensor::Constant(a), Tensor::Constant(b)};
  Array v = Recalibrate(us, ws, AttentionAxis::kFrequency).value();
  double worst = 0.0;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t f = 0; f < 4; ++f)
        for (int64_t t = 0; t < 5; ++t) {
          const double expect = a.at({n, f}) * u0.value().at({n, c, f, t}) +
                                b.at({n, f}) * u1.value().at({n, c, f, t});
          worst = std::max(worst, std::abs(v.at({n, c, f, t}) - expect));
        }
  CHECK(worst < 1e-14);
}

TEST_CASE("single-branch layer equals its convolution") {
  std::mt19937_64 rng(13);
  for (AttentionAxis axis : {AttentionAxis::kChannel, AttentionAxis::kFrequency}) {
    ParameterStore store(21);
    SkaLayer layer(store, "l", Config2d(3, 4, 6, axis, {3}));
    Tensor x = Tensor::Constant(RandomArray({2, 3, 6, 7}, rng));
    ForwardContext ctx = Training();
    ctx.update_running_stats = false;
    Tensor v = layer.Forward(x, ctx);
    Tensor conv = layer.branches[0].Forward(x, ctx);
    CHECK(MaxAbsDiff(v.value(), conv.value()) == 0.0);
  }
}

TEST_CASE("frequency attention is channel attention transposed") {
  // A (B, 1, F, T) fused map seen by the frequency layer and the same data
  // laid out as (B, F, 1, T) for the channel layer. With shared squeeze and
  // attention parameters the post-branch stages agree after transposition.
  std::mt19937_64 rng(14);
  const int64_t f = 6, t = 5, batch = 3;
  Array u0 = RandomArray({batch, 1, f, t}, rng);
  Array u1 = RandomArray({batch, 1, f, t}, rng);
  Array w = RandomArray({4, f}, rng);
  Array a0 = RandomArray({f, 4}, rng), a1 = RandomArray({f, 4}, rng);
  ParameterStore store(2);
  BatchNormLayer bn_f(store, "f", 4), bn_c(store, "c", 4);

  auto run = [&](const Array& x0, const Array& x1, AttentionAxis axis,
                 BatchNormLayer& bn) {
    std::vector<Tensor> us{Tensor::Constant(x0), Tensor::Constant(x1)};
    Tensor fused = Fuse(us);
    Tensor s = axis == AttentionAxis::kChannel ? SqueezeChannel(fused)
                                               : SqueezeFrequency(fused);
    Tensor z = Compact(s, Tensor::Constant(w), bn, Training());
    std::vector<Tensor> as{Tensor::Constant(a0), Tensor::Constant(a1)};
    return Recalibrate(us, Select(z, as), axis).value();
  };
  Array vf = run(u0, u1, AttentionAxis::kFrequency, bn_f);
  Array vc = run(u0.Reshaped({batch, f, 1, t}), u1.Reshaped({batch, f, 1, t}),
                 AttentionAxis::kChannel, bn_c);
  CHECK(MaxAbsDiff(vf.Reshaped({batch, f, 1, t}), vc) < 1e-14);
}

TEST_CASE("attention weights sum to one") {
  std::mt19937_64 rng(15);
  double worst = 0.0;
  bool open_interval = true;
  for (int trial = 0; trial < 50; ++trial) {
    const AttentionAxis axis =
        trial % 2 ? AttentionAxis::kFrequency : AttentionAxis::kChannel;
    ParameterStore store(100 + trial);
    SkaLayer layer(store, "l", Config2d(2, 4, 5, axis, {1, 3, 5}));
    Tensor x = Tensor::Constant(RandomArray({2, 2, 5, 6}, rng, 1.0 + trial));
    SkaAttentionTrace trace;
    layer.Forward(x, Training(), &trace);
    REQUIRE(trace.weights.size() == 3);
    worst = std::max(worst, MaxSumDeviation(trace));
    for (const Array& w : trace.weights)
      for (double v : w.values()) open_interval &= v > 0.0 && v < 1.0;
  }
  CHECK(worst < 1e-10);
  CHECK(open_interval);
}

TEST_CASE("trace records every stage") {
  std::mt19937_64 rng(16);
  ParameterStore store(3);
  SkaLayer layer(store, "l", Config2d(2, 8, 5, AttentionAxis::kChannel));
  Tensor x = Tensor::Constant(RandomArray({2, 2, 5, 6}, rng));
  SkaAttentionTrace trace;
  Tensor v = layer.Forward(x, Training(), &trace);
  CHECK(trace.fused.shape() == Shape{2, 8, 5, 6});
  CHECK(trace.pooled.shape() == Shape{2, 8});
  CHECK(trace.compact.shape() == Shape{2, 4});
  CHECK(trace.weights[0].shape() == Shape{2, 8});
  CHECK(v.shape() == Shape{2, 8, 5, 6});
}

TEST_CASE("ska layer gradient check") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    for (AttentionAxis axis : {AttentionAxis::kChannel, AttentionAxis::kFrequency}) {
      std::mt19937_64 rng(seed);
      ParameterStore store(seed + 1);
      SkaLayer layer(store, "l", Config2d(2, 4, 3, axis));
      for (auto& p : store.parameters()) {
        p.tensor.mutable_value() = RandomArray(p.tensor.shape(), rng, 0.7);
      }
      Tensor x = Tensor::Parameter(RandomArray({2, 2, 3, 5}, rng));
      Array proj = testing::ProjectionWeights({2, 4, 3, 5}, seed + 7);
      ForwardContext ctx = Training();
      ctx.update_running_stats = false;
      auto graph = [&]() {
        return op::SumAll(op::Mul(layer.Forward(x, ctx), Tensor::Constant(proj)));
      };
      std::vector<Tensor> params = store.ParameterTensors();
      params.push_back(x);
      worst = std::max(worst, MaxGradError(graph, params, 1e-6));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("one-dimensional layer") {
  std::mt19937_64 rng(17);
  ParameterStore store(4);
  SkaConfig cfg;
  cfg.in_channels = 4;
  cfg.channels = 4;
  cfg.two_dimensional = false;
  cfg.reduced_dim = ReducedDim(4);
  SkaLayer layer(store, "l", cfg);
  CHECK(layer.branches[0].weight.shape() == Shape{4, 4, 3});
  Tensor x = Tensor::Constant(RandomArray({3, 4, 9}, rng));
  SkaAttentionTrace trace;
  Tensor v = layer.Forward(x, Training(), &trace);
  CHECK(v.shape() == Shape{3, 4, 9});
  CHECK(trace.pooled.shape() == Shape{3, 4});
  CHECK(MaxSumDeviation(trace) < 1e-12);
}

}  // namespace
}  // namespace ska
