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

#include "ldp/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace ldp {

Trajectory rollout(const EnvSpec& env, const Policy& policy, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "rollout"));
  const int T = env.horizon;
  Trajectory tr;
  tr.seed = seed;
  tr.states.resize(T, env.state_dim);
  tr.actions.resize(T, env.action_dim);
  tr.rewards.resize(T);
  Vec state = env_initial_state(env, rng);
  for (int t = 0; t < T; ++t) {
    Vec a = policy(env, state, rng);
    for (int i = 0; i < env.action_dim; ++i) {
      const double clamped = std::clamp(a(i), env.action_low(i), env.action_high(i));
      if (clamped != a(i)) ++tr.clamp_events;
      a(i) = clamped;
    }
    tr.states.row(t) = state.transpose();
    tr.actions.row(t) = a.transpose();
    const StepResult step = env_step(env, state, a);
    tr.rewards(t) = step.reward;
    state = step.next_state;
  }
  tr.rtg = reward_to_go(tr.rewards, env.gamma);
  tr.episode_return = tr.rtg.size() > 0 ? tr.rtg(0) : 0.0;
  return tr;
}

namespace {

void fit_channel(const std::vector<double>& xs, double floor, double* mean, double* sd) {
  const double n = static_cast<double>(xs.size());
  double mu = 0.0;
  for (double x : xs) mu += x;
  mu /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mu) * (x - mu);
  var /= n;
  *mean = mu;
  *sd = std::max(std::sqrt(var), floor);
}

}  // namespace

Vec NormStats::norm_state(const Vec& s) const {
  return (s - state_mean).cwiseQuotient(state_std);
}
Vec NormStats::denorm_state(const Vec& s) const {
  return s.cwiseProduct(state_std) + state_mean;
}
Vec NormStats::norm_action(const Vec& a) const {
  return (a - action_mean).cwiseQuotient(action_std);
}
Vec NormStats::denorm_action(const Vec& a) const {
  return a.cwiseProduct(action_std) + action_mean;
}

Json NormStats::to_json() const {
  Json j;
  j["state_mean"] = std::vector<double>(state_mean.data(), state_mean.data() + state_mean.size());
  j["state_std"] = std::vector<double>(state_std.data(), state_std.data() + state_std.size());
  j["action_mean"] = std::vector<double>(action_mean.data(), action_mean.data() + action_mean.size());
  j["action_std"] = std::vector<double>(action_std.data(), action_std.data() + action_std.size());
  j["reward_mean"] = reward_mean;
  j["reward_std"] = reward_std;
  j["rtg_mean"] = rtg_mean;
  j["rtg_std"] = rtg_std;
  j["floor"] = floor;
  return j;
}

NormStats NormStats::from_json(const Json& j) {
  NormStats n;
  n.state_mean = parse_vec(j.at("state_mean"));
  n.state_std = parse_vec(j.at("state_std"));
  n.action_mean = parse_vec(j.at("action_mean"));
  n.action_std = parse_vec(j.at("action_std"));
  n.reward_mean = j.at("reward_mean").get<double>();
  n.reward_std = j.at("reward_std").get<double>();
  n.rtg_mean = j.at("rtg_mean").get<double>();
  n.rtg_std = j.at("rtg_std").get<double>();
  n.floor = j.at("floor").get<double>();
  return n;
}

NormStats fit_norm_stats(const EnvSpec& env, const std::vector<Trajectory>& trajs,
                         double floor) {
  NormStats n;
  n.floor = floor;
  n.state_mean.resize(env.state_dim);
  n.state_std.resize(env.state_dim);
  n.action_mean.resize(env.action_dim);
  n.action_std.resize(env.action_dim);
  std::vector<double> buf;
  for (int d = 0; d < env.state_dim; ++d) {
    buf.clear();
    for (const auto& tr : trajs) {
      for (long t = 0; t < tr.states.rows(); ++t) buf.push_back(tr.states(t, d));
    }
    fit_channel(buf, floor, &n.state_mean(d), &n.state_std(d));
  }
  for (int d = 0; d < env.action_dim; ++d) {
    buf.clear();
    for (const auto& tr : trajs) {
      for (long t = 0; t < tr.actions.rows(); ++t) buf.push_back(tr.actions(t, d));
    }
    fit_channel(buf, floor, &n.action_mean(d), &n.action_std(d));
  }
  buf.clear();
  for (const auto& tr : trajs) {
    for (long t = 0; t < tr.rewards.size(); ++t) buf.push_back(tr.rewards(t));
  }
  fit_channel(buf, floor, &n.reward_mean, &n.reward_std);
  buf.clear();
  for (const auto& tr : trajs) {
    for (long t = 0; t < tr.rtg.size(); ++t) buf.push_back(tr.rtg(t));
  }
  fit_channel(buf, floor, &n.rtg_mean, &n.rtg_std);
  return n;
}

std::string quality_tag_str(QualityTag t) {
  switch (t) {
    case QualityTag::kRandom: return "random";
    case QualityTag::kMedium: return "medium";
    case QualityTag::kExpert: return "expert";
    case QualityTag::kMixed: return "mixed";
  }
  return "?";
}

namespace {

QualityTag tag_from_mix(const PolicyMix& mix) {
  if (mix.size() == 1) {
    if (mix[0].first == "random") return QualityTag::kRandom;
    if (mix[0].first == "medium") return QualityTag::kMedium;
    if (mix[0].first == "expert") return QualityTag::kExpert;
  }
  return QualityTag::kMixed;
}

}  // namespace

Dataset build_dataset(const EnvSpec& env, const PolicyMix& mix, int n_episodes,
                      std::uint64_t seed) {
  if (n_episodes < 1) throw ConfigError("build_dataset: empty dataset");
  if (mix.empty()) throw ConfigError("build_dataset: empty policy mix");
  double wsum = 0.0;
  for (const auto& [name, w] : mix) {
    if (w <= 0.0) throw ConfigError("build_dataset: non-positive mix weight for " + name);
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw ConfigError("build_dataset: mix weights must sum to 1");
  }

  Dataset ds;
  ds.env = env;
  ds.quality_tag = tag_from_mix(mix);
  ds.trajectories.resize(static_cast<std::size_t>(n_episodes));
  ds.episode_policies.resize(static_cast<std::size_t>(n_episodes));

  std::vector<Policy> policies;
  policies.reserve(mix.size());
  for (const auto& [name, w] : mix) policies.push_back(make_policy(env, name));

  // Draw the per-episode policy assignment up front (single stream), then
  // roll out in parallel: each episode owns its own derived seed.
  std::vector<int> which(static_cast<std::size_t>(n_episodes), 0);
  Rng pick(derive_seed(seed, "mix-draw"));
  for (int e = 0; e < n_episodes; ++e) {
    double u = pick.uniform() * wsum;
    int idx = 0;
    for (std::size_t m = 0; m < mix.size(); ++m) {
      u -= mix[m].second;
      if (u <= 0.0) {
        idx = static_cast<int>(m);
        break;
      }
      idx = static_cast<int>(m);
    }
    which[static_cast<std::size_t>(e)] = idx;
    ds.episode_policies[static_cast<std::size_t>(e)] = mix[static_cast<std::size_t>(idx)].first;
  }
  parallel_for(n_episodes, [&](int e) {
    ds.trajectories[static_cast<std::size_t>(e)] =
        rollout(env, policies[static_cast<std::size_t>(which[static_cast<std::size_t>(e)])],
                derive_seed(seed, "episode", static_cast<std::uint64_t>(e)));
  });
  ds.norm = fit_norm_stats(env, ds.trajectories);
  return ds;
}

namespace {

std::string trajectory_line(const Trajectory& tr) {
  std::string s = "{\"seed\":" + std::to_string(tr.seed);
  s += ",\"clamp_events\":" + std::to_string(tr.clamp_events);
  s += ",\"episode_return\":" + format_double(tr.episode_return);
  s += ",\"states\":" + json_mat_rows(tr.states);
  s += ",\"actions\":" + json_mat_rows(tr.actions);
  s += ",\"rewards\":" + json_vec(tr.rewards);
  s += ",\"rtg\":" + json_vec(tr.rtg);
  s += "}";
  return s;
}

Trajectory trajectory_from_line(const std::string& line) {
  const Json j = Json::parse(line);
  Trajectory tr;
  tr.seed = j.at("seed").get<std::uint64_t>();
  tr.clamp_events = j.at("clamp_events").get<int>();
  tr.episode_return = j.at("episode_return").get<double>();
  tr.states = parse_mat_rows(j.at("states"));
  tr.actions = parse_mat_rows(j.at("actions"));
  tr.rewards = parse_vec(j.at("rewards"));
  tr.rtg = parse_vec(j.at("rtg"));
  return tr;
}

}  // namespace

DatasetHashes save_dataset(const Dataset& ds, const std::filesystem::path& jsonl_path,
                           const std::filesystem::path& meta_path) {
  HashingWriter w(jsonl_path);
  for (const auto& tr : ds.trajectories) w.write_line(trajectory_line(tr));
  DatasetHashes hashes;
  hashes.data_hash = w.finish();

  Json meta;
  meta["format"] = "ldp-dataset-v1";
  meta["env"] = ds.env.to_json();
  meta["norm"] = ds.norm.to_json();
  meta["quality_tag"] = quality_tag_str(ds.quality_tag);
  meta["episode_policies"] = ds.episode_policies;
  meta["n_trajectories"] = ds.trajectories.size();
  meta["data_sha256"] = hashes.data_hash;
  HashingWriter mw(meta_path);
  mw.write(meta.dump(2));
  mw.write("\n");
  hashes.meta_hash = mw.finish();
  return hashes;
}

Dataset load_dataset(const std::filesystem::path& jsonl_path,
                     const std::filesystem::path& meta_path) {
  const Json meta = load_json_file(meta_path);
  if (meta.value("format", "") != "ldp-dataset-v1") {
    throw ArtifactError("unknown dataset format: " + meta_path.string());
  }
  if (sha256_file_hex(jsonl_path.string()) != meta.at("data_sha256").get<std::string>()) {
    throw ArtifactError("dataset content hash mismatch: " + jsonl_path.string());
  }
  Dataset ds;
  ds.env = EnvSpec::from_json(meta.at("env"));
  ds.norm = NormStats::from_json(meta.at("norm"));
  const std::string tag = meta.at("quality_tag").get<std::string>();
  ds.quality_tag = tag == "random"   ? QualityTag::kRandom
                   : tag == "medium" ? QualityTag::kMedium
                   : tag == "expert" ? QualityTag::kExpert
                                     : QualityTag::kMixed;
  ds.episode_policies = meta.at("episode_policies").get<std::vector<std::string>>();

  std::ifstream in(jsonl_path);
  if (!in) throw ArtifactError("cannot open dataset: " + jsonl_path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ds.trajectories.push_back(trajectory_from_line(line));
  }
  if (ds.trajectories.size() != meta.at("n_trajectories").get<std::size_t>()) {
    throw ArtifactError("dataset trajectory count mismatch: " + jsonl_path.string());
  }
  return ds;
}

}  // namespace ldp
