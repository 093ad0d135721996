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
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "ska/error.h"
#include "ska/grad_check.h"
#include "ska/objectives.h"
#include "test_util.h"

namespace ska {
namespace {

using testing::RandomArray;
using testing::RandomParam;
using LD = long double;

std::vector<LD> UnitRow(const Array& a, int64_t r) {
  const int64_t d = a.dim(1);
  LD n = 0;
  for (int64_t j = 0; j < d; ++j) n += LD(a[r * d + j]) * a[r * d + j];
  n = std::sqrt(n);
  std::vector<LD> out(d);
  for (int64_t j = 0; j < d; ++j) out[j] = a[r * d + j] / n;
  return out;
}

LD Dot(const std::vector<LD>& a, const std::vector<LD>& b) {
  LD s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

LD CrossEntropyRow(const std::vector<LD>& logits, int target) {
  LD mx = logits[0];
  for (LD v : logits) mx = std::max(mx, v);
  LD z = 0;
  for (LD v : logits) z += std::exp(v - mx);
  return -(logits[target] - mx - std::log(z));
}

// Direct evaluation of the margin softmax in extended precision.
LD OracleAam(const Array& e, const Array& w, const std::vector<int>& labels,
             LD m, LD s) {
  LD total = 0;
  for (int64_t r = 0; r < e.dim(0); ++r) {
    const auto u = UnitRow(e, r);
    std::vector<LD> logits;
    for (int64_t k = 0; k < w.dim(0); ++k) {
      const LD c = Dot(u, UnitRow(w, k));
      if (k != labels[r]) {
        logits.push_back(s * c);
        continue;
      }
      const LD theta = std::acos(std::clamp<LD>(c, -1, 1));
      logits.push_back(theta + m <= std::numbers::pi_v<LD>
                           ? s * std::cos(theta + m)
                           : s * (c - m * std::sin(m)));
    }
    total += CrossEntropyRow(logits, labels[r]);
  }
  return total / e.dim(0);
}

LD OracleAp(const Array& e, LD w, LD b) {
  const int64_t speakers = e.dim(0) / 2;
  LD total = 0;
  for (int64_t i = 0; i < speakers; ++i) {
    const auto q = UnitRow(e, 2 * i);
    std::vector<LD> logits;
    for (int64_t j = 0; j < speakers; ++j) {
      logits.push_back(std::max<LD>(w, kApMinScale) *
                           Dot(q, UnitRow(e, 2 * j + 1)) +
                       b);
    }
    total += CrossEntropyRow(logits, static_cast<int>(i));
  }
  return total / speakers;
}

double Value(const Tensor& t) { return t.value()[0]; }

std::vector<int> RandomLabels(int64_t n, int classes, std::mt19937_64& rng) {
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng() % classes);
  return labels;
}

TEST_CASE("AAM loss with zero margin is softmax cross-entropy") {
  std::mt19937_64 rng(1);
  // Weights aligned one-hot with the embeddings of their class.
  Array w({4, 4}, 0.0), e({4, 4}, 0.0);
  for (int k = 0; k < 4; ++k) {
    w[k * 4 + k] = 1.0 + k;
    e[k * 4 + k] = 2.0;
  }
  const std::vector<int> labels = {0, 1, 2, 3};
  const double loss =
      Value(AamLoss(Tensor::Constant(e), Tensor::Constant(w), labels, 0.0, 30.0));
  std::vector<LD> logits = {30, 0, 0, 0};
  CHECK(std::abs(loss - double(CrossEntropyRow(logits, 0))) < 1e-12);

  for (int trial = 0; trial < 10; ++trial) {
    Array er = RandomArray({6, 5}, rng), wr = RandomArray({3, 5}, rng);
    const auto lr = RandomLabels(6, 3, rng);
    const double got = Value(
        AamLoss(Tensor::Constant(er), Tensor::Constant(wr), lr, 0.0, 30.0));
    CHECK(std::abs(got - double(OracleAam(er, wr, lr, 0, 30))) < 1e-12);
  }
}

TEST_CASE("AAM loss closed form and random oracle") {
  std::mt19937_64 rng(2);
  SUBCASE("embedding on its target weight") {
    Array w = RandomArray({5, 8}, rng);
    Array e({1, 8});
    for (int j = 0; j < 8; ++j) e[j] = 3.0 * w[2 * 8 + j];
    const std::vector<int> labels = {2};
    const double got = Value(
        AamLoss(Tensor::Constant(e), Tensor::Constant(w), labels, 0.2, 30.0));
    // Target logit 30 cos(0.2); the others use the raw cosines.
    const auto u = UnitRow(w, 2);
    std::vector<LD> logits;
    for (int k = 0; k < 5; ++k) {
      logits.push_back(k == 2 ? 30 * std::cos(LD(0.2)) : 30 * Dot(u, UnitRow(w, k)));
    }
    CHECK(std::abs(got - double(CrossEntropyRow(logits, 2))) < 1e-12);
  }
  SUBCASE("random batches, including the fallback region") {
    for (int trial = 0; trial < 20; ++trial) {
      Array e = RandomArray({8, 6}, rng), w = RandomArray({4, 6}, rng);
      auto labels = RandomLabels(8, 4, rng);
      // Row 0 points away from its target class.
      for (int j = 0; j < 6; ++j) e[j] = -w[labels[0] * 6 + j];
      const double got = Value(
          AamLoss(Tensor::Constant(e), Tensor::Constant(w), labels, 0.2, 30.0));
      CHECK(std::abs(got - double(OracleAam(e, w, labels, 0.2, 30))) < 1e-11);
    }
  }
  SUBCASE("label validation") {
    Array e = RandomArray({2, 3}, rng), w = RandomArray({2, 3}, rng);
    const std::vector<int> bad = {0, 2};
    CHECK_THROWS_AS(
        AamLoss(Tensor::Constant(e), Tensor::Constant(w), bad, 0.2, 30.0),
        ContractError);
  }
}

TEST_CASE("AAM loss properties") {
  std::mt19937_64 rng(3);
  SUBCASE("uniform logits give log K") {
    // Embeddings orthogonal to every class weight.
    Array w({3, 6}, 0.0), e({4, 6}, 0.0);
    for (int k = 0; k < 3; ++k) w[k * 6 + k] = 1.0;
    for (int r = 0; r < 4; ++r) e[r * 6 + 3 + (r % 3)] = 1.0 + r;
    const std::vector<int> labels = {0, 1, 2, 0};
    const double got = Value(
        AamLoss(Tensor::Constant(e), Tensor::Constant(w), labels, 0.0, 30.0));
    CHECK(std::abs(got - std::log(3.0)) < 1e-9);
  }
  SUBCASE("non-negative and monotone in the margin over [0, pi/2]") {
    for (int trial = 0; trial < 20; ++trial) {
      Array e = RandomArray({6, 4}, rng), w = RandomArray({5, 4}, rng);
      const auto labels = RandomLabels(6, 5, rng);
      double previous = -1.0;
      for (int step = 0; step <= 31; ++step) {
        const double m = 0.05 * step;
        const double loss = Value(
            AamLoss(Tensor::Constant(e), Tensor::Constant(w), labels, m, 30.0));
        CHECK(loss >= 0.0);
        CHECK(loss >= previous);
        previous = loss;
      }
    }
  }
  SUBCASE("embedding scale leaves the loss unchanged") {
    for (int trial = 0; trial < 20; ++trial) {
      Array e = RandomArray({6, 4}, rng), w = RandomArray({5, 4}, rng);
      const auto labels = RandomLabels(6, 5, rng);
      const double base = Value(
          AamLoss(Tensor::Constant(e), Tensor::Constant(w), labels, 0.2, 30.0));
      for (double k : {1e-3, 0.5, 7.0, 1e4}) {
        Array scaled = e;
        for (double& v : scaled.values()) v *= k;
        const double loss = Value(AamLoss(Tensor::Constant(scaled),
                                          Tensor::Constant(w), labels, 0.2, 30.0));
        CHECK(std::abs(loss - base) < 1e-10);
      }
    }
  }
}

TEST_CASE("AAM loss gradient") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    Tensor e = RandomParam({6, 5}, rng), w = RandomParam({4, 5}, rng);
    const auto labels = RandomLabels(6, 4, rng);
    std::vector<Tensor> params = {e, w};
    const double err = MaxGradError(
        [&] { return AamLoss(e, w, labels, 0.2, 30.0); }, params, 1e-6);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("AP loss") {
  std::mt19937_64 rng(4);
  SUBCASE("direct formula") {
    for (int trial = 0; trial < 20; ++trial) {
      Array e = RandomArray({10, 6}, rng);
      const double w = 0.5 + 15.0 * (rng() % 1000) / 1000.0;
      const double b = -5.0 + (rng() % 1000) / 100.0;
      const double got =
          Value(ApLoss(Tensor::Constant(e), Tensor::Constant(Array({1}, w)),
                       Tensor::Constant(Array({1}, b))));
      CHECK(std::abs(got - double(OracleAp(e, w, b))) < 1e-12);
    }
  }
  SUBCASE("identical prototypes give log S for any w and b") {
    Array proto = RandomArray({1, 5}, rng);
    for (int64_t speakers : {2, 3, 7}) {
      Array e = RandomArray({2 * speakers, 5}, rng);
      for (int64_t i = 0; i < speakers; ++i)
        for (int j = 0; j < 5; ++j) e[(2 * i + 1) * 5 + j] = proto[j];
      for (double w : {0.1, 10.0, 50.0}) {
        for (double b : {-5.0, 0.0, 3.0}) {
          const double got = Value(
              ApLoss(Tensor::Constant(e), Tensor::Constant(Array({1}, w)),
                     Tensor::Constant(Array({1}, b))));
          CHECK(std::abs(got - std::log(double(speakers))) < 1e-12);
        }
      }
    }
  }
  SUBCASE("orthogonal speakers with a large scale") {
    Array e({4, 3}, 0.0);
    e[0 * 3 + 0] = 1.0;
    e[1 * 3 + 0] = 2.0;
    e[2 * 3 + 1] = 1.0;
    e[3 * 3 + 1] = 0.5;
    const double got =
        Value(ApLoss(Tensor::Constant(e), Tensor::Constant(Array({1}, 100.0)),
                     Tensor::Constant(Array({1}, -5.0))));
    CHECK(got < 1e-40);
    CHECK(got >= 0.0);
  }
  SUBCASE("scale is clamped") {
    Array e = RandomArray({4, 3}, rng);
    const double clamped =
        Value(ApLoss(Tensor::Constant(e), Tensor::Constant(Array({1}, -3.0)),
                     Tensor::Constant(Array({1}, 1.0))));
    CHECK(std::abs(clamped - double(OracleAp(e, kApMinScale, 1.0))) < 1e-12);
  }
  SUBCASE("batch shape violations") {
    Tensor w = Tensor::Constant(Array({1}, 10.0));
    Tensor b = Tensor::Constant(Array({1}, -5.0));
    CHECK_THROWS_AS(ApLoss(Tensor::Constant(RandomArray({5, 3}, rng)), w, b),
                    ContractError);
    CHECK_THROWS_AS(ApLoss(Tensor::Constant(RandomArray({2, 3}, rng)), w, b),
                    ContractError);
    CHECK_THROWS_AS(ApLoss(Tensor::Constant(RandomArray({8}, rng)), w, b),
                    ContractError);
  }
}

TEST_CASE("AP loss gradient") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(200 + seed);
    Tensor e = RandomParam({8, 5}, rng);
    Tensor w = Tensor::Parameter(Array({1}, 10.0 + seed));
    Tensor b = Tensor::Parameter(Array({1}, -5.0 + 0.1 * seed));
    std::vector<Tensor> params = {e, w, b};
    CHECK(MaxGradError([&] { return ApLoss(e, w, b); }, params, 1e-6) < 1e-4);
  }
}

TEST_CASE("combined objective") {
  std::mt19937_64 rng(5);
  ParameterStore store(9);
  SpeakerObjective objective(store, 6, 5);
  CHECK(store.parameters().size() == 3);
  CHECK(objective.ap_w.value()[0] == 10.0);
  CHECK(objective.ap_b.value()[0] == -5.0);
  for (int trial = 0; trial < 10; ++trial) {
    Array e = RandomArray({8, 5}, rng);
    const std::vector<int> labels = {0, 0, 3, 3, 1, 1, 5, 5};
    const Tensor emb = Tensor::Constant(e);
    const double total = Value(objective.Loss(emb, labels));
    const double aam = Value(objective.Aam(emb, labels));
    const double ap = Value(objective.Ap(emb));
    CHECK(total == aam + ap);
    const LD oracle = OracleAam(e, objective.class_weights.value(), labels, 0.2, 30) +
                      OracleAp(e, 10, -5);
    CHECK(std::abs(total - double(oracle)) < 1e-11);
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    Tensor p = Tensor::Parameter(Array({3}, 1.5));
    p.mutable_grad();
    AdamConfig config;
    config.weight_decay = 0.0;
    Adam adam({{"p", p}}, config);
    for (int i = 0; i < 5; ++i) adam.Step(1e-3);
    for (double v : p.value().values()) CHECK(v == 1.5);
  }
  SUBCASE("first step from zero state") {
    Tensor p = Tensor::Parameter(Array({3}, 0.0));
    const double g[3] = {2.0, -0.5, 1e-9};
    for (int i = 0; i < 3; ++i) p.mutable_grad()[i] = g[i];
    AdamConfig config;
    config.weight_decay = 0.0;
    Adam adam({{"p", p}}, config);
    adam.Step(1e-3);
    for (int i = 0; i < 3; ++i) {
      const double expected = -1e-3 * g[i] / (std::abs(g[i]) + 1e-8);
      CHECK(std::abs(p.value()[i] - expected) < 1e-15);
    }
  }
  SUBCASE("constant gradient steps approach lr * sign(g)") {
    Tensor p = Tensor::Parameter(Array({2}, 0.0));
    p.mutable_grad()[0] = 3.0;
    p.mutable_grad()[1] = -0.01;
    AdamConfig config;
    config.weight_decay = 0.0;
    Adam adam({{"p", p}}, config);
    double last[2] = {0.0, 0.0};
    double step[2] = {0.0, 0.0};
    for (int t = 0; t < 2000; ++t) {
      adam.Step(0.1);
      for (int i = 0; i < 2; ++i) {
        step[i] = p.value()[i] - last[i];
        last[i] = p.value()[i];
      }
    }
    CHECK(std::abs(step[0] + 0.1) < 1e-6);
    CHECK(std::abs(step[1] - 0.1) < 1e-5);
  }
  SUBCASE("decoupled weight decay") {
    Tensor p = Tensor::Parameter(Array({1}, 4.0));
    p.mutable_grad();
    Adam adam({{"p", p}});
    adam.Step(0.5);
    CHECK(std::abs(p.value()[0] - (4.0 - 0.5 * 2e-5 * 4.0)) < 1e-15);
  }
  SUBCASE("state round trip") {
    std::mt19937_64 rng(6);
    Tensor a = RandomParam({4}, rng), b = RandomParam({4}, rng);
    Adam first({{"a", a}});
    for (int t = 0; t < 3; ++t) {
      a.mutable_grad() = RandomArray({4}, rng);
      first.Step(1e-2);
    }
    b.mutable_value() = a.value();
    Adam second({{"a", b}});
    second.LoadState(first.StateBlobs());
    CHECK(second.steps() == 3);
    const Array g = RandomArray({4}, rng);
    a.mutable_grad() = g;
    b.mutable_grad() = g;
    first.Step(1e-2);
    second.Step(1e-2);
    for (int i = 0; i < 4; ++i) CHECK(a.value()[i] == b.value()[i]);
    CHECK_THROWS_AS(second.LoadState({}), ConfigError);
  }
}

TEST_CASE("learning-rate schedule") {
  LrSchedule s;
  CHECK(std::abs(s.At(1) - 1e-3) < 1e-18);
  CHECK(std::abs(s.At(0, 10, 10) - 1e-3) < 1e-18);
  CHECK(std::abs(s.At(26) - 0.8e-3) < 1e-18);
  CHECK(std::abs(s.At(51) - 0.64e-3) < 1e-18);
  CHECK(s.At(0) == s.floor);
  CHECK(std::abs(s.At(0, 5, 10) - (1e-8 + (1e-3 - 1e-8) * 0.5)) < 1e-18);
  for (int64_t epoch = 1; epoch < 25; ++epoch) {
    const double progress = (epoch - 1.0) / 24.0;
    const double expected =
        1e-8 + (1e-3 - 1e-8) * (1.0 + std::cos(std::numbers::pi * progress)) / 2;
    CHECK(std::abs(s.At(epoch) - expected) < 1e-18);
  }
  // Every cycle repeats the same shape between the floor and its peak.
  for (int64_t epoch = 0; epoch < 25; ++epoch) {
    for (int64_t step = 0; step < 10; step += 3) {
      const double a = (s.At(epoch, step, 10) - s.floor) / (1e-3 - s.floor);
      const double b =
          (s.At(epoch + 25, step, 10) - s.floor) / (0.8e-3 - s.floor);
      CHECK(std::abs(b - a) < 1e-12);
    }
  }
  // Continuity inside a cycle and positivity everywhere.
  double previous = s.At(0);
  double max_jump = 0.0;
  for (int64_t epoch = 0; epoch < 75; ++epoch) {
    for (int64_t step = 0; step < 100; ++step) {
      const double lr = s.At(epoch, step, 100);
      CHECK(lr > 0.0);
      if (epoch % 25 != 0 || step != 0) {
        max_jump = std::max(max_jump, std::abs(lr - previous));
      }
      previous = lr;
    }
  }
  CHECK(max_jump <= 1e-3 / 100 + 1e-12);
  LrSchedule bad;
  bad.warmup_epochs = 30;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
  CHECK_NOTHROW(s.Validate());
}

}  // namespace
}  // namespace ska
