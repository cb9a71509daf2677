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

#include "ldp/schedule.hpp"

#include <cmath>

namespace ldp {

namespace {

constexpr double kCosineShift = 0.008;
constexpr double kMinAlphaBar = 1e-6;
constexpr double kMaxStepBeta = 0.999;
constexpr double kPi = 3.14159265358979323846;

}  // namespace

ScheduleKind schedule_kind_from(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown schedule kind: " + s);
}

std::string schedule_kind_str(ScheduleKind k) {
  return k == ScheduleKind::kLinear ? "linear" : "cosine";
}

Json NoiseSchedule::to_json() const {
  Json j;
  j["K"] = K;
  j["kind"] = schedule_kind_str(kind);
  return j;
}

NoiseSchedule make_schedule(int K, ScheduleKind kind) {
  if (K < 1) throw ConfigError("make_schedule: K must be >= 1");
  NoiseSchedule s;
  s.K = K;
  s.kind = kind;
  s.alphas.resize(K + 1);
  s.sigmas.resize(K + 1);
  Vec alpha_bar(K + 1);
  alpha_bar(0) = 1.0;
  switch (kind) {
    case ScheduleKind::kCosine: {
      const auto f = [](double u) {
        const double a = std::cos((u + kCosineShift) / (1.0 + kCosineShift) * kPi / 2.0);
        return a * a;
      };
      const double f0 = f(0.0);
      for (int k = 1; k <= K; ++k) {
        alpha_bar(k) = std::clamp(f(static_cast<double>(k) / K) / f0, kMinAlphaBar, 1.0);
      }
      break;
    }
    case ScheduleKind::kLinear: {
      // Linearly spaced per-step variances, rescaled so the total amount of
      // noise is K-independent, with cumulative products.
      const double lo = 1e-4 * 1000.0 / K;
      const double hi = 2e-2 * 1000.0 / K;
      double prod = 1.0;
      for (int k = 1; k <= K; ++k) {
        const double frac = K > 1 ? static_cast<double>(k - 1) / (K - 1) : 0.5;
        const double beta = std::min(lo + frac * (hi - lo), kMaxStepBeta);
        prod *= 1.0 - beta;
        alpha_bar(k) = std::max(prod, kMinAlphaBar);
      }
      break;
    }
  }
  for (int k = 0; k <= K; ++k) {
    s.alphas(k) = std::sqrt(alpha_bar(k));
    s.sigmas(k) = std::sqrt(1.0 - alpha_bar(k));
  }
  // Invariants: endpoints and strict monotonicity.
  s.alphas(0) = 1.0;
  s.sigmas(0) = 0.0;
  for (int k = 1; k <= K; ++k) {
    if (!(s.alphas(k) < s.alphas(k - 1)) || !(s.sigmas(k) > s.sigmas(k - 1))) {
      throw NumericError("make_schedule: non-monotone schedule at k=" + std::to_string(k));
    }
  }
  return s;
}

}  // namespace ldp
