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

#ifndef LDP_PIPELINE_HPP_
#define LDP_PIPELINE_HPP_

#include <filesystem>
#include <string>

#include "ldp/config.hpp"
#include "ldp/plan.hpp"

namespace ldp {

// Stage runners behind the CLI commands. Each stage writes its artifacts
// under cfg.out_dir plus a manifest recording the content hashes of every
// input it read and every output it wrote; downstream stages re-hash their
// inputs and refuse to run on a mismatch (ArtifactError, exit code 3).
//
// All stages are deterministic given (config, seed): re-running overwrites
// byte-identically. Timing-bearing reports (eval.csv) are kept out of the
// hashed artifact set; scores.csv carries the deterministic rows.

struct OutPaths {
  std::filesystem::path root;
  explicit OutPaths(const std::filesystem::path& r) : root(r) {}
  std::filesystem::path resolved_config() const { return root / "resolved_config.json"; }
  std::filesystem::path dataset_jsonl() const { return root / "dataset.jsonl"; }
  std::filesystem::path dataset_meta() const { return root / "dataset.meta.json"; }
  std::filesystem::path vae_ckpt() const { return root / "vae.ckpt"; }
  std::filesystem::path vae_curve() const { return root / "vae_curve.csv"; }
  std::filesystem::path prior_ckpt() const { return root / "prior.ckpt"; }
  std::filesystem::path prior_curve() const { return root / "prior_curve.csv"; }
  std::filesystem::path support_dir() const { return root / "support"; }
  std::filesystem::path energy_ckpt() const { return root / "energy.ckpt"; }
  std::filesystem::path energy_curve() const { return root / "energy_curve.csv"; }
  std::filesystem::path plan_trace() const { return root / "plan_trace.jsonl"; }
  std::filesystem::path plan_result() const { return root / "plan_result.json"; }
  std::filesystem::path eval_report() const { return root / "eval.csv"; }
  std::filesystem::path scores() const { return root / "scores.csv"; }
  std::filesystem::path ablate_dir() const { return root / "ablate"; }
  std::filesystem::path manifest(const std::string& stage) const {
    return root / (stage + ".manifest.json");
  }
};

EnvSpec env_from_config(const ExperimentConfig& cfg);
VaeSpec vae_spec_from_config(const ExperimentConfig& cfg, const EnvSpec& env);
PriorSpec prior_spec_from_config(const ExperimentConfig& cfg, const EnvSpec& env);
EnergySpec energy_spec_from_config(const ExperimentConfig& cfg, const EnvSpec& env);
PlannerConfig planner_from_config(const ExperimentConfig& cfg);

Json stage_gen_data(const ExperimentConfig& cfg);
Json stage_train_vae(const ExperimentConfig& cfg);
Json stage_train_prior(const ExperimentConfig& cfg);
Json stage_gen_support(const ExperimentConfig& cfg);
Json stage_train_energy(const ExperimentConfig& cfg);
Json stage_plan(const ExperimentConfig& cfg);
Json stage_evaluate(const ExperimentConfig& cfg);
Json stage_ablate(const ExperimentConfig& cfg);

// Loads and hash-verifies everything evaluation needs. need_energy follows
// plan.beta > 0.
ModelBundle load_bundle(const ExperimentConfig& cfg);

// Dispatch by command name (gen-data | train-vae | train-prior | gen-support
// | train-energy | plan | evaluate | ablate | full). Writes the resolved
// config with provenance first. Returns 0 on success; throws on failure.
int run_command(const std::string& command, const ExperimentConfig& cfg);

// Reads every registered knob once, then asserts the registry covers the
// whole document (the startup completeness check).
void consume_registry(const ExperimentConfig& cfg);

}  // namespace ldp

#endif  // LDP_PIPELINE_HPP_
