// Copyright 2026 the ldplan authors
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

#ifndef LDP_SCHEDULE_HPP_
#define LDP_SCHEDULE_HPP_

#include <string>

#include "ldp/common.hpp"
#include "ldp/jsonio.hpp"

namespace ldp {

enum class ScheduleKind { kLinear, kCosine };

// Forward-process coefficients: z_k = alpha(k) * z_0 + sigma(k) * eps with
// alpha^2 + sigma^2 = 1 (variance preserving). Index 0 is clean data:
// alpha(0) = 1, sigma(0) = 0; alpha is strictly decreasing.
struct NoiseSchedule {
  int K = 0;
  ScheduleKind kind = ScheduleKind::kCosine;
  Vec alphas;  // K+1
  Vec sigmas;  // K+1

  double alpha(int k) const { return alphas(k); }
  double sigma(int k) const { return sigmas(k); }
  double alpha_bar(int k) const { return alphas(k) * alphas(k); }
  // Per-step quantities of the reverse recursion at step k (1-based).
  double step_alpha(int k) const { return alpha_bar(k) / alpha_bar(k - 1); }
  double step_beta(int k) const { return 1.0 - step_alpha(k); }

  Json to_json() const;
};

ScheduleKind schedule_kind_from(const std::string& s);
std::string schedule_kind_str(ScheduleKind k);

NoiseSchedule make_schedule(int K, ScheduleKind kind = ScheduleKind::kCosine);

}  // namespace ldp

#endif  // LDP_SCHEDULE_HPP_
