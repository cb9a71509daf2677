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

#include "ldp/env.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "ldp/dataset.hpp"

namespace ldp {

namespace {

constexpr double kExpertKp = 4.0;
constexpr double kExpertKd = 3.0;

Vec clamp_action(const EnvSpec& env, Vec a) {
  for (int i = 0; i < env.action_dim; ++i) {
    a(i) = std::clamp(a(i), env.action_low(i), env.action_high(i));
  }
  return a;
}

}  // namespace

std::string EnvSpec::name_str() const {
  return name == EnvName::kPointmass2d ? "pointmass2d" : "chain_sparse";
}

Json EnvSpec::to_json() const {
  Json j;
  j["name"] = name_str();
  j["state_dim"] = state_dim;
  j["action_dim"] = action_dim;
  j["action_low"] = std::vector<double>(action_low.data(), action_low.data() + action_low.size());
  j["action_high"] = std::vector<double>(action_high.data(), action_high.data() + action_high.size());
  j["horizon"] = horizon;
  j["dt"] = dt;
  j["goal"] = std::vector<double>(goal.data(), goal.data() + goal.size());
  j["reward_mode"] = reward_mode == RewardMode::kDense ? "dense" : "sparse";
  j["gamma"] = gamma;
  j["n_cells"] = n_cells;
  return j;
}

EnvSpec EnvSpec::from_json(const Json& j) {
  const std::string nm = j.at("name").get<std::string>();
  EnvSpec e = env_by_name(nm, j.at("horizon").get<int>(), j.value("n_cells", 0));
  e.reward_mode = j.at("reward_mode").get<std::string>() == "dense" ? RewardMode::kDense
                                                                    : RewardMode::kSparse;
  e.gamma = j.at("gamma").get<double>();
  e.dt = j.at("dt").get<double>();
  e.goal = parse_vec(j.at("goal"));
  return e;
}

EnvSpec make_pointmass2d(int horizon) {
  EnvSpec e;
  e.name = EnvName::kPointmass2d;
  e.state_dim = 4;
  e.action_dim = 2;
  e.action_low = Vec::Constant(2, -1.0);
  e.action_high = Vec::Constant(2, 1.0);
  e.horizon = horizon;
  e.dt = 0.1;
  e.goal = Vec(2);
  e.goal << 0.7, 0.7;
  e.reward_mode = RewardMode::kDense;
  e.gamma = 1.0;
  return e;
}

EnvSpec make_chain(int n_cells, int horizon, RewardMode mode) {
  EnvSpec e;
  e.name = EnvName::kChainSparse;
  e.state_dim = 1;
  e.action_dim = 1;
  e.action_low = Vec::Constant(1, -1.0);
  e.action_high = Vec::Constant(1, 1.0);
  e.horizon = horizon;
  e.dt = 1.0;
  e.goal = Vec::Constant(1, static_cast<double>(n_cells - 1));
  e.reward_mode = mode;
  e.gamma = 1.0;
  e.n_cells = n_cells;
  return e;
}

EnvSpec env_by_name(const std::string& name, int horizon, int n_cells) {
  if (name == "pointmass2d") return make_pointmass2d(horizon > 0 ? horizon : 64);
  if (name == "chain_sparse") {
    return make_chain(n_cells > 0 ? n_cells : 9, horizon > 0 ? horizon : 128);
  }
  throw ConfigError("unknown environment: " + name);
}

StepResult env_step(const EnvSpec& env, const Vec& state, const Vec& action) {
  const Vec a = clamp_action(env, action);
  StepResult out;
  switch (env.name) {
    case EnvName::kPointmass2d: {
      Vec next(4);
      next(2) = state(2) + a(0) * env.dt;
      next(3) = state(3) + a(1) * env.dt;
      next(0) = state(0) + next(2) * env.dt;
      next(1) = state(1) + next(3) * env.dt;
      const double dist = std::hypot(next(0) - env.goal(0), next(1) - env.goal(1));
      out.next_state = next;
      out.reward = env.reward_mode == RewardMode::kDense ? -dist
                                                         : (dist < 0.1 ? 1.0 : 0.0);
      break;
    }
    case EnvName::kChainSparse: {
      const long move = std::lround(a(0));
      const double hi = static_cast<double>(env.n_cells - 1);
      const double next = std::clamp(state(0) + static_cast<double>(move), 0.0, hi);
      out.next_state = Vec::Constant(1, next);
      if (env.reward_mode == RewardMode::kSparse) {
        out.reward = next == env.goal(0) ? 1.0 : 0.0;
      } else {
        out.reward = -std::abs(next - env.goal(0)) / hi;
      }
      break;
    }
  }
  return out;
}

Vec env_initial_state(const EnvSpec& env, Rng& rng) {
  switch (env.name) {
    case EnvName::kPointmass2d: {
      Vec s = Vec::Zero(4);
      s(0) = rng.uniform(-1.0, 0.0);
      s(1) = rng.uniform(-1.0, 0.0);
      return s;
    }
    case EnvName::kChainSparse:
      return Vec::Constant(1, static_cast<double>(rng.uniform_int(0, env.n_cells - 1)));
  }
  throw std::logic_error("unreachable env");
}

Policy make_policy(const EnvSpec& env, const std::string& name) {
  if (name == "zero") {
    return [](const EnvSpec& e, const Vec&, Rng&) { return Vec::Zero(e.action_dim); };
  }
  if (name == "random") {
    return [](const EnvSpec& e, const Vec&, Rng& rng) {
      Vec a(e.action_dim);
      for (int i = 0; i < e.action_dim; ++i) {
        a(i) = rng.uniform(e.action_low(i), e.action_high(i));
      }
      return a;
    };
  }
  if (env.name == EnvName::kPointmass2d) {
    auto expert = [](const EnvSpec& e, const Vec& s, Rng&) {
      Vec a(2);
      a(0) = kExpertKp * (e.goal(0) - s(0)) - kExpertKd * s(2);
      a(1) = kExpertKp * (e.goal(1) - s(1)) - kExpertKd * s(3);
      return a;
    };
    if (name == "expert") return expert;
    if (name == "medium") {
      return [expert](const EnvSpec& e, const Vec& s, Rng& rng) {
        Vec a = expert(e, s, rng);
        a(0) += 0.45 * rng.normal();
        a(1) += 0.45 * rng.normal();
        return a;
      };
    }
  } else {
    auto expert = [](const EnvSpec& e, const Vec& s, Rng&) {
      const double diff = e.goal(0) - s(0);
      return Vec::Constant(1, diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
    };
    if (name == "expert") return expert;
    if (name == "medium") {
      return [expert](const EnvSpec& e, const Vec& s, Rng& rng) {
        if (rng.uniform() < 0.4) {
          return Vec::Constant(1, rng.uniform(e.action_low(0), e.action_high(0)));
        }
        return expert(e, s, rng);
      };
    }
  }
  throw ConfigError("unknown policy: " + name);
}

Vec reward_to_go(const Vec& rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("reward_to_go: gamma must be in [0, 1]");
  }
  const long n = rewards.size();
  Vec g(n);
  if (n == 0) return g;
  g(n - 1) = rewards(n - 1);
  for (long t = n - 2; t >= 0; --t) g(t) = rewards(t) + gamma * g(t + 1);
  return g;
}

double normalized_score(double raw_return, double random_ref, double expert_ref) {
  if (expert_ref == random_ref) {
    throw NumericError("normalized_score: degenerate reference (expert == random)");
  }
  return 100.0 * (raw_return - random_ref) / (expert_ref - random_ref);
}

EnvRefs reference_returns(const EnvSpec& env) {
  static std::mutex mu;
  static std::map<std::string, EnvRefs> cache;
  const std::string key = env.to_json().dump();
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  constexpr int kEpisodes = 500;
  auto mean_return = [&](const std::string& policy_name, std::string_view stream) {
    const Policy policy = make_policy(env, policy_name);
    double total = 0.0;
    for (int i = 0; i < kEpisodes; ++i) {
      const Trajectory tr = rollout(env, policy, derive_seed(0x5eedULL, stream, i));
      total += tr.episode_return;
    }
    return total / kEpisodes;
  };
  EnvRefs refs{mean_return("random", "ref-random"), mean_return("expert", "ref-expert")};
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, refs);
  return refs;
}

}  // namespace ldp
