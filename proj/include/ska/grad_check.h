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

#ifndef SKA_GRAD_CHECK_H_
#define SKA_GRAD_CHECK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "ska/autograd.h"

namespace ska {

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Entries probed per parameter tensor; <= 0 probes all of them. Probed
  // entries are drawn with `seed` when the tensor is larger than the limit.
  int64_t max_entries_per_param = 0;
  // When > 0, overrides the per-parameter limit: this many draws of a
  // uniformly chosen tensor and a uniform entry in it (duplicates collapse).
  int64_t max_entries_total = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  int64_t worst_index = -1;
  int64_t entries_checked = 0;
};

// Compares the tape gradient of the scalar produced by `graph` against
// central differences for every (probed) entry of `params`. The relative
// error of an entry is |analytic - numeric| / max(1, |numeric|).
// `graph` must be deterministic and must read `params` by reference.
GradCheckResult GradCheck(const std::function<Tensor()>& graph,
                          std::span<Tensor> params,
                          const GradCheckOptions& options = {});

inline double MaxGradError(const std::function<Tensor()>& graph,
                           std::span<Tensor> params, double epsilon) {
  GradCheckOptions options;
  options.epsilon = epsilon;
  return GradCheck(graph, params, options).max_relative_error;
}

}  // namespace ska

#endif  // SKA_GRAD_CHECK_H_
