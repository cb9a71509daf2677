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

#ifndef LDP_PLAN_HPP_
#define LDP_PLAN_HPP_

#include <optional>
#include <string>
#include <vector>

#include "ldp/energy.hpp"

namespace ldp {

enum class SpaceMode { kLatent, kRaw, kSkill };
std::string space_mode_str(SpaceMode m);
SpaceMode space_mode_from(const std::string& s);

struct PlannerConfig {
  SpaceMode space = SpaceMode::kLatent;
  int H = 40;               // planning horizon in raw steps
  int replan_interval = 1;  //execute this many actions before replanning
  double beta = 3.0;
  double w = 1.4;
  double alpha_temp = 0.5;
  std::uint64_t seed = 0;
};

// Everything inference needs, loaded and hash-verified by the pipeline.
// Raw mode has no VAE: the "encoder" is the identity over token rows and the
// prior diffuses token sequences directly.
struct ModelBundle {
  EnvSpec env;
  NormStats norm;
  SpaceMode space = SpaceMode::kLatent;
  std::optional<VaeSpec> vspec;
  std::optional<VaeParams> vae;
  PriorSpec pspec;
  PriorParams prior;
  NoiseSchedule sched;
  std::optional<EnergySpec> espec;
  std::optional<EnergyParams> energy;

  int latent_step() const;  // L (1 in raw mode)
  int token_dim() const;
  // Throws ConfigError when the pieces disagree (dims, horizon, energy input).
  void validate(const PlannerConfig& cfg) const;
};

// Energy of one clean plan-space sample under this bundle's definition.
double plan_sample_energy(const ModelBundle& bundle, const Mat& z0, const Vec& s1_norm);

struct PlanResult {
  Mat states;   // H x state_dim, raw units
  Mat actions;  // H x action_dim, raw units, clamped to bounds
  Vec rewards;  // H, raw units (zeros in skill mode)
  Vec rtg;      // H, raw units (from the return head / token channel)
  int clamp_events = 0;
};

PlanResult plan(const ModelBundle& bundle, const Vec& raw_state,
                const PlannerConfig& cfg, Rng& rng);

struct EpisodeStepLog {
  Vec state;
  Vec action;
  double reward = 0.0;
  bool replanned = false;
};

struct EpisodeResult {
  double raw_return = 0.0;
  double normalized = 0.0;
  std::vector<EpisodeStepLog> log;
  double wallclock_per_plan = 0.0;  // seconds, mean over plans
  int plans = 0;
  int clamp_events = 0;
};

EpisodeResult plan_episode(const ModelBundle& bundle, const PlannerConfig& cfg,
                           std::uint64_t episode_seed);

struct EvalRow {
  std::string env, dataset, mode;
  double beta, w;
  int H, L, K;
  std::uint64_t seed;
  int episode;
  double raw_return, normalized, wallclock_per_plan;
};

struct EvalTable {
  std::vector<EvalRow> rows;
  double mean_normalized = 0.0;
  double stderr_normalized = 0.0;
  double mean_wallclock_per_plan = 0.0;
};

EvalTable evaluate(const ModelBundle& bundle, const PlannerConfig& cfg,
                   const std::string& dataset_label, int n_episodes,
                   const std::vector<std::uint64_t>& seeds);

// CSV with one row per (seed, episode); wallclock timing is measured, so this
// file is a report, not a hashed artifact. scores_csv drops the timing column
// and is byte-stable across reruns.
std::string eval_csv(const EvalTable& table);
std::string scores_csv(const EvalTable& table);

}  // namespace ldp

#endif  // LDP_PLAN_HPP_
