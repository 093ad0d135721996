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

// Times the serial reference kernels against the OpenMP kernels on the
// convolution shapes of the toy and full-width networks.
//
// usage: conv_bench [repeats]

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ska/kernels.h"

namespace {

using namespace ska;

struct Case {
  std::string name;
  Shape input;
  Shape weight;
  int64_t stride_h = 1;
  int64_t dilation_w = 1;
};

std::vector<double> Random(int64_t n, std::mt19937_64& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  std::normal_distribution<double> normal;
  for (double& x : v) x = normal(rng);
  return v;
}

double BestSeconds(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start)
                              .count());
  }
  return best;
}

double MaxDiff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

void Report(const std::string& name, const char* pass, double ref, double fast,
            double diff) {
  std::printf("%-28s %-10s %10.3f %10.3f %8.2fx %10.1e\n", name.c_str(), pass,
              1e3 * ref, 1e3 * fast, ref / fast, diff);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 3;
  const std::vector<Case> cases = {
      {"front 3x3 toy (8ch)", {4, 8, 80, 200}, {8, 8, 3, 3}},
      {"front 5x5 stride 2", {4, 8, 80, 200}, {8, 8, 5, 5}, 2},
      {"tdnn k3 dil 3 (64ch)", {4, 64, 1, 200}, {64, 64, 1, 3}, 1, 3},
      {"pointwise 1x1 (192ch)", {4, 192, 1, 200}, {192, 192, 1, 1}},
      {"front 3x3 full (128ch)", {2, 128, 40, 100}, {128, 128, 3, 3}},
  };
  std::printf("OpenMP threads: %d, best of %d runs, times in ms\n",
              omp_get_max_threads(), repeats);
  std::printf("%-28s %-10s %10s %10s %9s %10s\n", "shape", "pass", "reference",
              "kernel", "speedup", "max diff");
  std::mt19937_64 rng(1);
  for (const Case& c : cases) {
    const ConvGeometry g = MakeConvGeometry(c.input, c.weight, c.stride_h, 1, 1,
                                            c.dilation_w, Padding::kSame);
    const int64_t in_n = g.batch * g.in_channels * g.in_h * g.in_w;
    const int64_t out_n = g.batch * g.out_channels * g.out_h * g.out_w;
    const int64_t w_n = g.out_channels * g.in_channels * g.kernel_h * g.kernel_w;
    const auto x = Random(in_n, rng), w = Random(w_n, rng), b = Random(g.out_channels, rng);
    const auto gy = Random(out_n, rng);

    std::vector<double> y_ref(out_n), y_fast(out_n);
    const double f_ref = BestSeconds(repeats, [&] {
      reference::ConvForward(g, x.data(), w.data(), b.data(), y_ref.data());
    });
    const double f_fast = BestSeconds(repeats, [&] {
      kernels::ConvForward(g, x.data(), w.data(), b.data(), y_fast.data());
    });
    Report(c.name, "forward", f_ref, f_fast, MaxDiff(y_ref, y_fast));

    std::vector<double> gx_ref(in_n), gx_fast(in_n);
    const double i_ref = BestSeconds(repeats, [&] {
      std::fill(gx_ref.begin(), gx_ref.end(), 0.0);
      reference::ConvBackwardInput(g, gy.data(), w.data(), gx_ref.data());
    });
    const double i_fast = BestSeconds(repeats, [&] {
      std::fill(gx_fast.begin(), gx_fast.end(), 0.0);
      kernels::ConvBackwardInput(g, gy.data(), w.data(), gx_fast.data());
    });
    Report(c.name, "grad in", i_ref, i_fast, MaxDiff(gx_ref, gx_fast));

    std::vector<double> gw_ref(w_n), gw_fast(w_n), gb_ref(g.out_channels),
        gb_fast(g.out_channels);
    const double w_ref = BestSeconds(repeats, [&] {
      std::fill(gw_ref.begin(), gw_ref.end(), 0.0);
      std::fill(gb_ref.begin(), gb_ref.end(), 0.0);
      reference::ConvBackwardWeight(g, gy.data(), x.data(), gw_ref.data(), gb_ref.data());
    });
    const double w_fast = BestSeconds(repeats, [&] {
      std::fill(gw_fast.begin(), gw_fast.end(), 0.0);
      std::fill(gb_fast.begin(), gb_fast.end(), 0.0);
      kernels::ConvBackwardWeight(g, gy.data(), x.data(), gw_fast.data(), gb_fast.data());
    });
    Report(c.name, "grad w", w_ref, w_fast, MaxDiff(gw_ref, gw_fast));
  }
  return 0;
}
