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

#include "ldp/plan.hpp"

#include <chrono>
#include <cmath>

namespace ldp {

std::string space_mode_str(SpaceMode m) {
  switch (m) {
    case SpaceMode::kLatent: return "latent";
    case SpaceMode::kRaw: return "raw";
    case SpaceMode::kSkill: return "skill";
  }
  return "?";
}

SpaceMode space_mode_from(const std::string& s) {
  if (s == "latent") return SpaceMode::kLatent;
  if (s == "raw") return SpaceMode::kRaw;
  if (s == "skill") return SpaceMode::kSkill;
  throw ConfigError("unknown space mode: " + s);
}

int ModelBundle::latent_step() const {
  return space == SpaceMode::kRaw ? 1 : vspec->L;
}

int ModelBundle::token_dim() const {
  switch (space) {
    case SpaceMode::kRaw:
      return env.state_dim + env.action_dim + 2;
    case SpaceMode::kLatent:
    case SpaceMode::kSkill:
      return vspec->token_dim();
  }
  return 0;
}

void ModelBundle::validate(const PlannerConfig& cfg) const {
  if (cfg.space != space) {
    throw ConfigError("planner space mode does not match the trained bundle");
  }
  if (cfg.replan_interval < 1) throw ConfigError("replan_interval must be >= 1");
  if (!(cfg.alpha_temp >= 0.0 && cfg.alpha_temp < 1.0)) {
    throw ConfigError("alpha_temp must be in [0, 1)");
  }
  const int L = latent_step();
  if (cfg.H < 1 || cfg.H % L != 0) {
    throw ConfigError("planning horizon H must be a positive multiple of L");
  }
  if (space != SpaceMode::kRaw) {
    if (!vspec.has_value() || !vae.has_value()) {
      throw ConfigError("latent/skill planning requires a trained VAE");
    }
    if (pspec.z_dim != vspec->z_dim) {
      throw ConfigError("prior z_dim does not match VAE z_dim (incompatible checkpoints)");
    }
    if (space == SpaceMode::kSkill && vspec->with_reward_channels) {
      throw ConfigError("skill-mode bundle must use reward-free tokens");
    }
    if (space == SpaceMode::kLatent && !vspec->with_reward_channels) {
      throw ConfigError("latent-mode bundle requires reward/return token channels");
    }
  } else if (pspec.z_dim != token_dim()) {
    throw ConfigError("raw-mode prior width does not match token dim");
  }
  if (pspec.cond_dim != env.state_dim) {
    throw ConfigError("prior condition dim does not match state dim");
  }
  if (cfg.beta > 0.0 && energy.has_value()) {
    const int n = cfg.H / L;
    if (espec->seq_len != n || espec->z_dim != pspec.z_dim) {
      throw ConfigError("energy model was trained for a different plan shape "
                        "(incompatible checkpoints)");
    }
    if (espec->cond_dim != env.state_dim) {
      throw ConfigError("energy condition dim does not match state dim");
    }
  }
}

double plan_sample_energy(const ModelBundle& bundle, const Mat& z0, const Vec& s1_norm) {
  switch (bundle.space) {
    case SpaceMode::kLatent:
      return trajectory_energy(*bundle.vspec, *bundle.vae, bundle.norm, z0, s1_norm);
    case SpaceMode::kRaw: {
      // Tokens carry the return channel directly.
      const int g_col = bundle.env.state_dim + bundle.env.action_dim + 1;
      return energy_from_returns(z0.col(g_col), bundle.norm);
    }
    case SpaceMode::kSkill: {
      const DecodeResult dec = decode(*bundle.vspec, *bundle.vae, z0, s1_norm);
      const ArchSpec q_arch = bundle.vspec->q_head_arch();
      Mat in(dec.states.rows(), bundle.env.state_dim + bundle.env.action_dim);
      in << dec.states, dec.actions;
      const Mat q = forward_eval(q_arch, bundle.vae->q_head, in);
      return energy_from_returns(q.col(0), bundle.norm);
    }
  }
  throw std::logic_error("unreachable space mode");
}

namespace {

struct DecodedPlan {
  Mat states_n, actions_n;  // normalized
  Vec rewards_n, rtg_n;     // normalized (may be empty)
};

DecodedPlan decode_plan(const ModelBundle& bundle, const Mat& z0, const Vec& s1_norm) {
  DecodedPlan out;
  switch (bundle.space) {
    case SpaceMode::kRaw: {
      const int sd = bundle.env.state_dim;
      const int ad = bundle.env.action_dim;
      out.states_n = z0.leftCols(sd);
      out.actions_n = z0.middleCols(sd, ad);
      out.rewards_n = z0.col(sd + ad);
      out.rtg_n = z0.col(sd + ad + 1);
      break;
    }
    case SpaceMode::kLatent: {
      const DecodeResult dec = decode(*bundle.vspec, *bundle.vae, z0, s1_norm);
      out.states_n = dec.states;
      out.actions_n = dec.actions;
      out.rewards_n = dec.rewards;
      out.rtg_n = dec.rtg;
      break;
    }
    case SpaceMode::kSkill: {
      const DecodeResult dec = decode(*bundle.vspec, *bundle.vae, z0, s1_norm);
      out.states_n = dec.states;
      out.actions_n = dec.actions;
      const ArchSpec q_arch = bundle.vspec->q_head_arch();
      Mat in(dec.states.rows(), bundle.env.state_dim + bundle.env.action_dim);
      in << dec.states, dec.actions;
      out.rtg_n = forward_eval(q_arch, bundle.vae->q_head, in).col(0);
      break;
    }
  }
  return out;
}

}  // namespace

PlanResult plan(const ModelBundle& bundle, const Vec& raw_state,
                const PlannerConfig& cfg, Rng& rng) {
  bundle.validate(cfg);
  const Vec s1_norm = bundle.norm.norm_state(raw_state);
  const int L = bundle.latent_step();
  const int n_latents = cfg.H / L;

  SampleOptions opts;
  opts.w = cfg.w;
  opts.alpha_temp = cfg.alpha_temp;
  ScoreHook hook;
  if (cfg.beta > 0.0 && bundle.energy.has_value()) {
    hook = make_energy_hook(*bundle.espec, *bundle.energy, s1_norm);
    opts.hook = &hook;
  }
  const Mat z0 = sample_prior(bundle.pspec, bundle.prior, &s1_norm, n_latents,
                              bundle.sched, opts, rng);
  const DecodedPlan dp = decode_plan(bundle, z0, s1_norm);

  PlanResult out;
  const int H = cfg.H;
  out.states.resize(H, bundle.env.state_dim);
  out.actions.resize(H, bundle.env.action_dim);
  out.rewards = Vec::Zero(H);
  out.rtg = Vec::Zero(H);
  for (int t = 0; t < H; ++t) {
    out.states.row(t) = bundle.norm.denorm_state(dp.states_n.row(t).transpose()).transpose();
    Vec a = bundle.norm.denorm_action(dp.actions_n.row(t).transpose());
    for (int d = 0; d < bundle.env.action_dim; ++d) {
      const double c = std::clamp(a(d), bundle.env.action_low(d), bundle.env.action_high(d));
      if (c != a(d)) ++out.clamp_events;
      a(d) = c;
    }
    out.actions.row(t) = a.transpose();
    if (dp.rewards_n.size() > 0) out.rewards(t) = bundle.norm.denorm_reward(dp.rewards_n(t));
    if (dp.rtg_n.size() > 0) out.rtg(t) = bundle.norm.denorm_rtg(dp.rtg_n(t));
  }
  return out;
}

EpisodeResult plan_episode(const ModelBundle& bundle, const PlannerConfig& cfg,
                           std::uint64_t episode_seed) {
  bundle.validate(cfg);
  const EnvSpec& env = bundle.env;
  Rng env_rng(derive_seed(episode_seed, "episode-init"));
  Vec state = env_initial_state(env, env_rng);

  EpisodeResult res;
  res.log.reserve(static_cast<std::size_t>(env.horizon));
  Vec rewards(env.horizon);

  PlanResult current;
  int plan_cursor = 0;
  double plan_seconds = 0.0;
  for (int t = 0; t < env.horizon; ++t) {
    const bool replan = (t % cfg.replan_interval == 0);
    if (replan) {
      Rng plan_rng(derive_seed(episode_seed, "plan", static_cast<std::uint64_t>(t)));
      const auto start = std::chrono::steady_clock::now();
      current = plan(bundle, state, cfg, plan_rng);
      plan_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ++res.plans;
      plan_cursor = 0;
    }
    const Vec action = current.actions.row(std::min(plan_cursor, cfg.H - 1)).transpose();
    ++plan_cursor;
    const StepResult step = env_step(env, state, action);
    EpisodeStepLog log;
    log.state = state;
    log.action = action;
    log.reward = step.reward;
    log.replanned = replan;
    res.log.push_back(std::move(log));
    rewards(t) = step.reward;
    state = step.next_state;
  }
  res.clamp_events = current.clamp_events;
  const Vec rtg = reward_to_go(rewards, env.gamma);
  res.raw_return = rtg.size() > 0 ? rtg(0) : 0.0;
  const EnvRefs refs = reference_returns(env);
  res.normalized = normalized_score(res.raw_return, refs.random_ref, refs.expert_ref);
  res.wallclock_per_plan = res.plans > 0 ? plan_seconds / res.plans : 0.0;
  return res;
}

EvalTable evaluate(const ModelBundle& bundle, const PlannerConfig& cfg,
                   const std::string& dataset_label, int n_episodes,
                   const std::vector<std::uint64_t>& seeds) {
  if (n_episodes < 1) throw ConfigError("evaluate: n_episodes must be >= 1");
  if (seeds.empty()) throw ConfigError("evaluate: need at least one seed");
  EvalTable table;
  const int total = static_cast<int>(seeds.size()) * n_episodes;
  table.rows.resize(static_cast<std::size_t>(total));
  parallel_for(total, [&](int i) {
    const int si = i / n_episodes;
    const int ep = i % n_episodes;
    const std::uint64_t seed = seeds[static_cast<std::size_t>(si)];
    const EpisodeResult er =
        plan_episode(bundle, cfg, derive_seed(seed, "eval-episode", static_cast<std::uint64_t>(ep)));
    EvalRow row;
    row.env = bundle.env.name_str();
    row.dataset = dataset_label;
    row.mode = space_mode_str(bundle.space);
    row.beta = cfg.beta;
    row.w = cfg.w;
    row.H = cfg.H;
    row.L = bundle.latent_step();
    row.K = bundle.sched.K;
    row.seed = seed;
    row.episode = ep;
    row.raw_return = er.raw_return;
    row.normalized = er.normalized;
    row.wallclock_per_plan = er.wallclock_per_plan;
    table.rows[static_cast<std::size_t>(i)] = std::move(row);
  });
  double sum = 0.0, sumsq = 0.0, wall = 0.0;
  for (const auto& r : table.rows) {
    sum += r.normalized;
    sumsq += r.normalized * r.normalized;
    wall += r.wallclock_per_plan;
  }
  const double n = static_cast<double>(table.rows.size());
  table.mean_normalized = sum / n;
  const double var = std::max(0.0, sumsq / n - table.mean_normalized * table.mean_normalized);
  table.stderr_normalized = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  table.mean_wallclock_per_plan = wall / n;
  return table;
}

namespace {

std::string row_prefix(const EvalRow& r) {
  std::string s;
  s += r.env + "," + r.dataset + "," + r.mode + ",";
  s += format_double(r.beta) + "," + format_double(r.w) + ",";
  s += std::to_string(r.H) + "," + std::to_string(r.L) + "," + std::to_string(r.K) + ",";
  s += std::to_string(r.seed) + "," + std::to_string(r.episode) + ",";
  s += format_double(r.raw_return) + "," + format_double(r.normalized);
  return s;
}

}  // namespace

std::string eval_csv(const EvalTable& table) {
  std::string out =
      "env,dataset,mode,beta,w,H,L,K,seed,episode,raw_return,normalized,wallclock_per_plan\n";
  for (const auto& r : table.rows) {
    out += row_prefix(r) + "," + format_double(r.wallclock_per_plan) + "\n";
  }
  return out;
}

std::string scores_csv(const EvalTable& table) {
  std::string out = "env,dataset,mode,beta,w,H,L,K,seed,episode,raw_return,normalized\n";
  for (const auto& r : table.rows) out += row_prefix(r) + "\n";
  return out;
}

}  // namespace ldp
