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

#ifndef LDP_DATASET_HPP_
#define LDP_DATASET_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ldp/env.hpp"

namespace ldp {

// One fixed-horizon episode. rtg[t] = rewards[t] + gamma * rtg[t+1].
struct Trajectory {
  Mat states;   // T x state_dim
  Mat actions;  // T x action_dim
  Vec rewards;  // T
  Vec rtg;      // T
  double episode_return = 0.0;
  std::uint64_t seed = 0;
  int clamp_events = 0;  // out-of-bounds policy outputs, clamped with a count
};

Trajectory rollout(const EnvSpec& env, const Policy& policy, std::uint64_t seed);

// Per-channel standardization statistics with a std floor.
struct NormStats {
  Vec state_mean, state_std;
  Vec action_mean, action_std;
  double reward_mean = 0.0, reward_std = 1.0;
  double rtg_mean = 0.0, rtg_std = 1.0;
  double floor = 1e-6;

  Vec norm_state(const Vec& s) const;
  Vec denorm_state(const Vec& s) const;
  Vec norm_action(const Vec& a) const;
  Vec denorm_action(const Vec& a) const;
  double norm_reward(double r) const { return (r - reward_mean) / reward_std; }
  double denorm_reward(double r) const { return r * reward_std + reward_mean; }
  double norm_rtg(double g) const { return (g - rtg_mean) / rtg_std; }
  double denorm_rtg(double g) const { return g * rtg_std + rtg_mean; }

  Json to_json() const;
  static NormStats from_json(const Json& j);
};

NormStats fit_norm_stats(const EnvSpec& env, const std::vector<Trajectory>& trajs,
                         double floor = 1e-6);

enum class QualityTag { kRandom, kMedium, kExpert, kMixed };
std::string quality_tag_str(QualityTag t);

struct Dataset {
  EnvSpec env;
  std::vector<Trajectory> trajectories;
  NormStats norm;
  QualityTag quality_tag = QualityTag::kMixed;
  std::vector<std::string> episode_policies;  // which mix entry made each episode
};

using PolicyMix = std::vector<std::pair<std::string, double>>;

Dataset build_dataset(const EnvSpec& env, const PolicyMix& mix, int n_episodes,
                      std::uint64_t seed);

// Persistence: one JSON Lines file (one trajectory per line) plus a sidecar
// metadata JSON (env spec, norm stats, content hash of the lines file). All
// floats are written with 17 significant digits so reload is bit-exact.
struct DatasetHashes {
  std::string data_hash;
  std::string meta_hash;
};
DatasetHashes save_dataset(const Dataset& ds, const std::filesystem::path& jsonl_path,
                           const std::filesystem::path& meta_path);
Dataset load_dataset(const std::filesystem::path& jsonl_path,
                     const std::filesystem::path& meta_path);

}  // namespace ldp

#endif  // LDP_DATASET_HPP_
