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

#ifndef LDP_ENV_HPP_
#define LDP_ENV_HPP_

#include <functional>
#include <string>

#include "ldp/common.hpp"
#include "ldp/jsonio.hpp"

namespace ldp {

enum class EnvName { kPointmass2d, kChainSparse };
enum class RewardMode { kDense, kSparse };

// Deterministic fixed-horizon environments. pointmass2d: state is
// (position, velocity) in R^4, Euler integration, dense negative-distance
// reward. chain_sparse: a 1-D corridor of cells; continuous actions round to
// {-1, 0, +1} moves; sparse reward 1 for every step spent in the goal cell.
struct EnvSpec {
  EnvName name = EnvName::kPointmass2d;
  int state_dim = 4;
  int action_dim = 2;
  Vec action_low, action_high;
  int horizon = 64;
  double dt = 0.1;
  Vec goal;
  RewardMode reward_mode = RewardMode::kDense;
  double gamma = 1.0;
  int n_cells = 0;  // chain only

  std::string name_str() const;
  Json to_json() const;
  static EnvSpec from_json(const Json& j);
};

EnvSpec make_pointmass2d(int horizon = 64);
EnvSpec make_chain(int n_cells = 9, int horizon = 128,
                   RewardMode mode = RewardMode::kSparse);
EnvSpec env_by_name(const std::string& name, int horizon = 0, int n_cells = 0);

// next state and the reward of the transition; pure in (state, action).
struct StepResult {
  Vec next_state;
  double reward;
};
StepResult env_step(const EnvSpec& env, const Vec& state, const Vec& action);

Vec env_initial_state(const EnvSpec& env, Rng& rng);

// Scripted behavior policies, keyed by name: "random", "medium", "expert",
// "zero". Policies may use the rng for their own noise.
using Policy = std::function<Vec(const EnvSpec&, const Vec& state, Rng& rng)>;
Policy make_policy(const EnvSpec& env, const std::string& name);

// Discounted suffix sums G_t = sum_{i>=t} gamma^{i-t} r_i.
Vec reward_to_go(const Vec& rewards, double gamma);

// 100 * (raw - random_ref) / (expert_ref - random_ref).
double normalized_score(double raw_return, double random_ref, double expert_ref);

// Reference returns for score normalization, measured once per environment
// from 500 seeded episodes of the scripted expert and the uniform-random
// policy. Cached per process.
struct EnvRefs {
  double random_ref;
  double expert_ref;
};
EnvRefs reference_returns(const EnvSpec& env);

}  // namespace ldp

#endif  // LDP_ENV_HPP_
