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

#include "ska/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ska/error.h"

namespace ska {

GradCheckResult GradCheck(const std::function<Tensor()>& graph,
                          std::span<Tensor> params,
                          const GradCheckOptions& options) {
  if (options.epsilon < 1e-7 || options.epsilon > 1e-4) {
    throw ContractError("grad check epsilon must lie in [1e-7, 1e-4]");
  }
  for (Tensor& p : params) p.ZeroGrad();
  Tensor out = graph();
  if (out.value().size() != 1) {
    throw ContractError("grad check needs a scalar graph output, got " +
                        ShapeString(out.shape()));
  }
  out.Backward();
  std::vector<Array> analytic;
  for (Tensor& p : params) {
    analytic.push_back(p.grad().empty() ? Array(p.shape(), 0.0) : p.grad());
  }
  out = Tensor();

  auto evaluate = [&graph]() {
    NoGradGuard guard;
    return graph().value().item();
  };

  std::mt19937_64 rng(options.seed);
  // (parameter, entry) pairs to probe.
  std::vector<std::pair<size_t, int64_t>> probes;
  if (options.max_entries_total > 0) {
    for (int64_t i = 0; i < options.max_entries_total; ++i) {
      const size_t k = static_cast<size_t>(rng() % params.size());
      const auto n = static_cast<uint64_t>(params[k].value().size());
      probes.emplace_back(k, static_cast<int64_t>(rng() % n));
    }
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
  } else {
    for (size_t k = 0; k < params.size(); ++k) {
      std::vector<int64_t> entries(params[k].value().size());
      std::iota(entries.begin(), entries.end(), 0);
      if (options.max_entries_per_param > 0 &&
          params[k].value().size() > options.max_entries_per_param) {
        std::shuffle(entries.begin(), entries.end(), rng);
        entries.resize(options.max_entries_per_param);
      }
      for (int64_t idx : entries) probes.emplace_back(k, idx);
    }
  }

  GradCheckResult result;
  for (const auto& [k, idx] : probes) {
    Array& value = params[k].mutable_value();
    const double saved = value[idx];
    value[idx] = saved + options.epsilon;
    const double plus = evaluate();
    value[idx] = saved - options.epsilon;
    const double minus = evaluate();
    value[idx] = saved;
    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    const double error = std::abs(analytic[k][idx] - numeric) /
                         std::max(1.0, std::abs(numeric));
    ++result.entries_checked;
    if (!(error <= result.max_relative_error)) {
      result.max_relative_error = error;
      result.worst_parameter = "param#" + std::to_string(k);
      result.worst_index = idx;
    }
  }
  return result;
}

}  // namespace ska
