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
#include "ska/blocks.h"
#include "ska/error.h"
#include "ska/grad_check.h"
#include "ska/ops.h"
#include "test_util.h"

namespace ska {
namespace {

using testing::RandomArray;

ForwardContext Training() {
  ForwardContext ctx;
  ctx.training = true;
  ctx.update_running_stats = false;
  return ctx;
}

void Randomize(ParameterStore& store, std::mt19937_64& rng, double scale) {
  for (auto& p : store.parameters()) {
    p.tensor.mutable_value() = RandomArray(p.tensor.shape(), rng, scale);
  }
}

void ZeroAll(ParameterStore& store) {
  for (auto& p : store.parameters()) p.tensor.mutable_value().Fill(0.0);
}

Array ReluOf(const Array& x) {
  Array y = x;
  for (double& v : y.values()) v = std::max(v, 0.0);
  return y;
}

// Gradient check of sum(f(x) * P) over every parameter and the input.
double BlockGradError(ParameterStore& store, Tensor x,
                      const std::function<Tensor(const Tensor&)>& f,
                      uint64_t seed) {
  Array proj;
  {
    NoGradGuard guard;
    proj = testing::ProjectionWeights(f(x).shape(), seed);
  }
  auto graph = [&]() {
    return op::SumAll(op::Mul(f(x), Tensor::Constant(proj)));
  };
  std::vector<Tensor> params = store.ParameterTensors();
  params.push_back(x);
  return MaxGradError(graph, params, 1e-6);
}

TEST_CASE("squeeze excitation") {
  std::mt19937_64 rng(1);
  ParameterStore store(2);
  SeLayer se(store, "se", 16);
  CHECK(se.down.weight.shape() == Shape{4, 16});
  Tensor x = Tensor::Constant(RandomArray({2, 16, 7}, rng));

  se.up.weight.mutable_value().Fill(0.0);
  se.up.bias.mutable_value().Fill(60.0);
  CHECK(MaxAbsDiff(se.Forward(x).value(), x.value()) < 1e-6);

  se.up.bias.mutable_value().Fill(0.0);
  Array half = x.value();
  for (double& v : half.values()) v *= 0.5;
  CHECK(MaxAbsDiff(se.Forward(x).value(), half) == 0.0);

  Randomize(store, rng, 0.5);
  Array out = se.Forward(x).value();
  const Array& w1 = se.down.weight.value();
  const Array& b1 = se.down.bias.value();
  const Array& w2 = se.up.weight.value();
  const Array& b2 = se.up.bias.value();
  double worst = 0.0;
  bool bounded = true;
  for (int64_t b = 0; b < 2; ++b) {
    std::vector<double> g(16), h(4);
    for (int64_t c = 0; c < 16; ++c) {
      double s = 0.0;
      for (int64_t t = 0; t < 7; ++t) s += x.value().at({b, c, t});
      g[c] = s / 7;
    }
    for (int64_t i = 0; i < 4; ++i) {
      double s = b1[i];
      for (int64_t c = 0; c < 16; ++c) s += w1.at({i, c}) * g[c];
      h[i] = std::max(s, 0.0);
    }
    for (int64_t c = 0; c < 16; ++c) {
      double s = b2[c];
      for (int64_t i = 0; i < 4; ++i) s += w2.at({c, i}) * h[i];
      const double gate = 1.0 / (1.0 + std::exp(-s));
      for (int64_t t = 0; t < 7; ++t) {
        const double in = x.value().at({b, c, t});
        worst = std::max(worst, std::abs(out.at({b, c, t}) - gate * in));
        bounded &= std::abs(out.at({b, c, t})) <= std::abs(in);
      }
    }
  }
  CHECK(worst < 1e-14);
  CHECK(bounded);
}

TEST_CASE("front blocks: residual dominance and shapes") {
  std::mt19937_64 rng(3);
  for (bool cw : {true, false}) {
    ParameterStore store(4);
    FrontBlockConfig cfg{4, 4, 6, 1, cw};
    FrontBlock block(store, "b", cfg);
    CHECK_FALSE(block.has_projection());
    ZeroAll(store);
    Tensor x = Tensor::Constant(RandomArray({2, 4, 6, 5}, rng));
    CHECK(MaxAbsDiff(block.Forward(x, Training()).value(), ReluOf(x.value())) == 0.0);

    ParameterStore store2(5);
    FrontBlockConfig strided{3, 4, 7, 2, cw};
    FrontBlock down(store2, "d", strided);
    CHECK(down.has_projection());
    CHECK(strided.freq_out() == 4);
    Tensor y = down.Forward(Tensor::Constant(RandomArray({2, 3, 7, 5}, rng)), Training());
    CHECK(y.shape() == Shape{2, 4, 4, 5});
    CHECK_THROWS_AS(down.Forward(x, Training()), ConfigError);
  }
  ParameterStore a(6), b(6);
  FrontBlock fcw(a, "b", {4, 8, 10, 1, true});
  FrontBlock fw(b, "b", {4, 8, 10, 1, false});
  CHECK(a.NumParameters() > b.NumParameters());
}

TEST_CASE("front blocks: gradient check") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    for (bool cw : {true, false}) {
      std::mt19937_64 rng(seed);
      ParameterStore store(seed);
      FrontBlock block(store, "b", {2, 4, 5, 2, cw});
      Randomize(store, rng, 0.6);
      Tensor x = Tensor::Parameter(RandomArray({2, 2, 5, 4}, rng));
      worst = std::max(worst, BlockGradError(store, x, [&](const Tensor& in) {
        return block.Forward(in, Training());
      }, seed + 50));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("multi-scale split round trip") {
  std::mt19937_64 rng(7);
  Tensor x = Tensor::Constant(RandomArray({2, 12, 5}, rng));
  auto identity = [](int64_t, const Tensor& in) { return in; };
  for (int64_t s : {1, 2, 3, 4, 6, 12}) {
    CHECK(MaxAbsDiff(MultiScaleSplit(x, s, false, identity).value(), x.value()) == 0.0);
    // With chaining the identity operator yields running sums of subsets.
    Array chained = MultiScaleSplit(x, s, true, identity).value();
    const int64_t w = 12 / s;
    double worst = 0.0;
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t c = 0; c < 12; ++c)
        for (int64_t t = 0; t < 5; ++t) {
          const int64_t j = c / w, r = c % w;
          double expect = x.value().at({b, c, t});
          if (s > 1 && j >= 2) {
            expect = 0.0;
            for (int64_t k = 1; k <= j; ++k) expect += x.value().at({b, k * w + r, t});
          }
          worst = std::max(worst, std::abs(chained.at({b, c, t}) - expect));
        }
    CHECK(worst < 1e-14);
  }
  CHECK_THROWS_AS(MultiScaleSplit(x, 5, true, identity), ConfigError);
}

TEST_CASE("msSKA degenerate cases") {
  std::mt19937_64 rng(8);
  Tensor x = Tensor::Constant(RandomArray({2, 8, 9}, rng));

  ParameterStore single_store(1);
  MsSka single(single_store, "m", {8, 1, {3, 5}});
  REQUIRE(single.layers.size() == 1);
  CHECK(MaxAbsDiff(single.Forward(x, Training()).value(),
                   single.layers[0].Forward(x, Training()).value()) == 0.0);

  for (int64_t s : {1, 2, 4, 8}) {
    ParameterStore store(s);
    MsSka m(store, "m", {8, s, {3, 5}});
    CHECK(m.Forward(x, Training()).shape() == Shape{2, 8, 9});
  }
  ParameterStore bad(0);
  CHECK_THROWS_AS(MsSka(bad, "m", {8, 3, {3, 5}}), ConfigError);
}

TEST_CASE("msSKA pinned to k=3 equals a Res2Net oracle") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    ParameterStore store(seed + 10);
    MsSka m(store, "m", {16, 4, {3, 5}});
    Randomize(store, rng, 0.5);
    m.ForceWeights({1.0, 0.0});
    Tensor x = Tensor::Constant(RandomArray({3, 16, 11}, rng));
    Array got = m.Forward(x, Training()).value();

    // Res2Net from plain conv1d, batch norm and ReLU on each chained subset.
    std::vector<Tensor> parts{op::Slice(x, 1, 0, 4)};
    Tensor prev;
    for (int64_t j = 1; j < 4; ++j) {
      Tensor in = op::Slice(x, 1, j * 4, 4);
      if (j > 1) in = op::Add(in, prev);
      const ConvBnRelu& br = m.layers[j - 1].branches[0];
      op::BatchNormOptions bn;
      bn.update_running_stats = false;
      prev = op::Relu(op::BatchNorm(op::Conv1d(in, br.weight, Tensor()),
                                    br.bn.gamma, br.bn.beta, nullptr, nullptr, bn));
      parts.push_back(prev);
    }
    CHECK(MaxAbsDiff(got, op::Concat(parts, 1).value()) < 1e-10);
  }
}

TEST_CASE("msSKA block") {
  std::mt19937_64 rng(9);
  ParameterStore store(3);
  MsSkaBlock block(store, "blk", {8, 2, {3, 5}});
  Tensor x = Tensor::Constant(RandomArray({2, 8, 6}, rng));
  CHECK(block.Forward(x, Training()).shape() == Shape{2, 8, 6});
  ZeroAll(store);
  CHECK(MaxAbsDiff(block.Forward(x, Training()).value(), ReluOf(x.value())) == 0.0);

  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    ParameterStore s(seed);
    MsSkaBlock b(s, "blk", {8, 2, {3, 5}});
    Randomize(s, r, 0.6);
    Tensor in = Tensor::Parameter(RandomArray({2, 8, 6}, r));
    worst = std::max(worst, BlockGradError(s, in, [&](const Tensor& v) {
      return b.Forward(v, Training());
    }, seed + 3));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("residual path keeps the input gradient alive") {
  // Compares the input gradient of the whole block with the gradient that
  // flows through the residual branch F alone (skip input held constant).
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ParameterStore store(seed);
    MsSkaBlock block(store, "blk", {8, 2, {3, 5}});
    Randomize(store, rng, 0.5);
    Array xv = RandomArray({2, 8, 6}, rng);
    Tensor proj = Tensor::Constant(testing::ProjectionWeights({2, 8, 6}, seed));

    Tensor full = Tensor::Parameter(xv);
    op::SumAll(op::Mul(block.Forward(full, Training()), proj)).Backward();

    Tensor through = Tensor::Parameter(xv);
    Tensor out = op::Relu(op::Add(block.Core(through, Training()), Tensor::Constant(xv)));
    op::SumAll(op::Mul(out, proj)).Backward();

    double n_full = 0.0, n_branch = 0.0;
    for (double g : full.grad().values()) n_full += g * g;
    for (double g : through.grad().values()) n_branch += g * g;
    CHECK(n_full > 0.0);
    CHECK(n_full >= n_branch);
  }
}

TEST_CASE("Res2Net block") {
  std::mt19937_64 rng(11);
  ParameterStore store(5);
  Res2NetBlock block(store, "r", 8, 4, 2);
  CHECK(block.convs.size() == 3);
  Tensor x = Tensor::Constant(RandomArray({2, 8, 9}, rng));
  CHECK(block.Forward(x, Training()).shape() == Shape{2, 8, 9});
  ZeroAll(store);
  CHECK(MaxAbsDiff(block.Forward(x, Training()).value(), ReluOf(x.value())) == 0.0);

  double worst = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(seed);
    ParameterStore s(seed);
    Res2NetBlock b(s, "r", 8, 2, 3);
    Randomize(s, r, 0.6);
    Tensor in = Tensor::Parameter(RandomArray({2, 8, 7}, r));
    worst = std::max(worst, BlockGradError(s, in, [&](const Tensor& v) {
      return b.Forward(v, Training());
    }, seed));
  }
  CHECK(worst < 1e-4);
}

}  // namespace
}  // namespace ska
