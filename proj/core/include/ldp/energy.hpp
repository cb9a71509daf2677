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

#ifndef LDP_ENERGY_HPP_
#define LDP_ENERGY_HPP_

#include <filesystem>
#include <functional>
#include <vector>

#include "ldp/prior.hpp"
#include "ldp/vae.hpp"

namespace ldp {

// Time-dependent energy model f(z_k, s1, k): an MLP over the flattened noisy
// latent sequence, a linear embedding of s1, and sinusoidal step features.
// Trained contrastively against softmax(-beta * E0) over prior-sampled
// support sets, it steers the sampler toward low-energy (high-return) plans.
struct EnergySpec {
  int seq_len = 0;
  int z_dim = 0;
  int cond_dim = 0;
  int cond_embed = 16;
  int t_embed_dim = 16;
  int hidden = 64;
  int layers = 4;

  int flat_dim() const { return seq_len * z_dim; }
  ArchSpec mlp_arch() const;
  Json to_json() const;
  static EnergySpec from_json(const Json& j);
};

struct EnergyParams {
  ParamSet net;  // mlp plus the s1 embedding (cond_proj.*)
  double beta = 3.0;
};

EnergyParams init_energy(const EnergySpec& spec, std::uint64_t seed, double beta);

double energy_value(const EnergySpec& spec, const EnergyParams& params, const Mat& z_k,
                    const Vec& s1, int k);
// d f / d z_k, via reverse mode through the flattened input.
Mat energy_input_grad(const EnergySpec& spec, const EnergyParams& params,
                      const Mat& z_k, const Vec& s1, int k);

// -Sum of denormalized returns; the shared core of every energy definition.
double energy_from_returns(const Vec& rtg_normalized, const NormStats& norm);

// Latent-mode trajectory energy: decode z0, read the return head, negate the
// denormalized sum.
double trajectory_energy(const VaeSpec& vspec, const VaeParams& vparams,
                         const NormStats& norm, const Mat& z0, const Vec& s1);

// Support sets: M prior samples per initial state with cached clean energies.
struct SupportSet {
  Vec s1;  // normalized
  std::vector<Mat> members;
  Vec energies;
  double beta = 3.0;
};

using EnergyFn = std::function<double(const Mat& z0, const Vec& s1)>;

struct SupportGenConfig {
  int M = 16;
  double w = 1.0;            // guidance scale while sampling supports
  double alpha_temp = 0.99;  // keep support diversity high
  double beta = 3.0;
};

std::vector<SupportSet> gen_support(const PriorSpec& pspec, const PriorParams& prior,
                                    const std::vector<Vec>& initial_states, int seq_len,
                                    const NoiseSchedule& sched,
                                    const SupportGenConfig& cfg, const EnergyFn& energy,
                                    std::uint64_t seed);

// One drawn contrastive example: all members of a set perturbed to level k.
struct ContrastiveItem {
  Vec s1;
  std::vector<Mat> z_k;
  Vec energies;
  int k = 1;
};

std::vector<ContrastiveItem> make_contrastive_items(const std::vector<SupportSet>& sets,
                                                    const NoiseSchedule& sched, Rng& rng,
                                                    bool shared_noise = false);

// Softmax targets with max subtraction; sums to 1.
Vec contrastive_targets(const Vec& energies, double beta);

using EnergyEvalFn = std::function<double(const Mat& z_k, const Vec& s1, int k)>;
// Cross-entropy between softmax(-beta * E0) and softmax(f) over each set,
// averaged over the batch.
double contrastive_loss(const std::vector<ContrastiveItem>& items, double beta,
                        const EnergyEvalFn& f);
// Spec operation: draws (k, eps) internally and evaluates the model.
double contrastive_loss(const EnergySpec& spec, const EnergyParams& params,
                        const std::vector<SupportSet>& sets, const NoiseSchedule& sched,
                        double beta, Rng& rng, bool shared_noise = false);
double contrastive_loss_grads(const EnergySpec& spec, const EnergyParams& params,
                              const std::vector<ContrastiveItem>& items, double beta,
                              ParamSet* grads);

struct EnergyTrainConfig {
  int steps = 2000;
  int batch = 8;
  double lr = 1e-3;
  bool shared_noise = false;
  // Standardize cached energies over the whole store before forming targets,
  // so beta measures tilt in store-standard-deviation units and stays
  // comparable across reward scales. Exactness tests switch this off to pin
  // the tilt to beta * E directly.
  bool normalize_energies = true;
};

// Store-wide affine standardization of cached energies.
struct EnergyScale {
  double mean = 0.0;
  double scale = 1.0;
  double apply(double e) const { return (e - mean) / scale; }
};
EnergyScale fit_energy_scale(const std::vector<SupportSet>& sets);

struct EnergyTrainResult {
  EnergyParams params;
  std::vector<std::pair<int, double>> curve;
};

EnergyTrainResult train_energy(const EnergySpec& spec,
                               const std::vector<SupportSet>& sets,
                               const NoiseSchedule& sched, double beta,
                               const EnergyTrainConfig& cfg, std::uint64_t seed);

// Regression baselines (Diffuser-style). Items pair a perturbed sequence with
// the clean-sample energy target.
struct EnergyRegItem {
  Vec s1;
  Mat z_k;
  int k = 1;
  double target = 0.0;  // E0 of the clean member
};

std::vector<EnergyRegItem> make_regression_items(const std::vector<SupportSet>& sets,
                                                 const NoiseSchedule& sched, Rng& rng);

double mse_energy_loss(const std::vector<EnergyRegItem>& items, const EnergyEvalFn& f);
double mse_energy_loss_grads(const EnergySpec& spec, const EnergyParams& params,
                             const std::vector<EnergyRegItem>& items, ParamSet* grads);

// E-MSE: || exp(f) - exp(beta * E0) ||^2 with exponents clamped at 40;
// clamp_events counts how often the guard fired.
double emse_energy_loss(const std::vector<EnergyRegItem>& items, double beta,
                        const EnergyEvalFn& f, long* clamp_events = nullptr);
double emse_energy_loss_grads(const EnergySpec& spec, const EnergyParams& params,
                              const std::vector<EnergyRegItem>& items, double beta,
                              ParamSet* grads, long* clamp_events = nullptr);

EnergyTrainResult train_energy_regression(const EnergySpec& spec,
                                          const std::vector<SupportSet>& sets,
                                          const NoiseSchedule& sched, double beta,
                                          bool exponential, const EnergyTrainConfig& cfg,
                                          std::uint64_t seed);

// Combined score -eps_tilde / sigma_k + dE/dz_k (pure arithmetic core).
Mat guided_score_from(const Mat& eps_tilde, double sigma_k, const Mat& energy_grad);
// Full operation: classifier-free prior score plus the model's input grad.
Mat guided_score(const PriorSpec& pspec, const PriorParams& prior,
                 const EnergySpec& espec, const EnergyParams& energy, const Mat& z_k,
                 const Vec& s1, int k, const NoiseSchedule& sched, double w);

// Sampler hooks. scale multiplies the input gradient (contrastive: +1;
// MSE baseline: -beta; E-MSE baseline: -1).
ScoreHook make_energy_hook(const EnergySpec& spec, const EnergyParams& params,
                           const Vec& s1, double scale = 1.0);

// Support-store persistence: a directory holding one JSON Lines record per
// initial state plus the prior checkpoint hash each record was built from.
void save_support_store(const std::filesystem::path& dir,
                        const std::vector<SupportSet>& sets,
                        const std::string& prior_hash);
std::vector<SupportSet> load_support_store(const std::filesystem::path& dir,
                                           const std::string& expected_prior_hash);

void save_energy(const std::filesystem::path& path, const EnergySpec& spec,
                 const EnergyParams& params, const Json& extra_meta);
std::pair<EnergySpec, EnergyParams> load_energy(const std::filesystem::path& path);

}  // namespace ldp

#endif  // LDP_ENERGY_HPP_
