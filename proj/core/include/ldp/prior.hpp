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

#ifndef LDP_PRIOR_HPP_
#define LDP_PRIOR_HPP_

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "ldp/latent.hpp"
#include "ldp/nets.hpp"
#include "ldp/schedule.hpp"

namespace ldp {

// Conditional eps-prediction prior over latent action sequences, with
// classifier-free conditioning on the initial state (condition dropout zeroes
// the embedding pathway) and low-temperature ancestral sampling.
struct PriorSpec {
  int z_dim = 8;
  int cond_dim = 0;  // 0 = unconditional model
  std::vector<int> channels = {32, 64, 64};
  int kernel = 3;
  int gn_groups = 8;
  int t_embed_dim = 32;
  int embed_hidden = 64;
  double drop_prob = 0.25;

  ArchSpec unet_arch() const;
  Json to_json() const;
  static PriorSpec from_json(const Json& j);
};

struct PriorParams {
  ParamSet net;  // temporal U-Net, including the condition-embedding MLP
  double drop_prob = 0.25;
};

PriorParams init_prior(const PriorSpec& spec, std::uint64_t seed);

// z_k = alpha_k z0 + sigma_k eps, elementwise.
Mat perturb(const Mat& z0, int k, const Mat& eps, const NoiseSchedule& sched);
LatentSeq perturb(const LatentSeq& z0, int k, const Mat& eps, const NoiseSchedule& sched);

// Deterministic network output; cond == nullptr takes the placeholder
// (unconditional) pathway. k must be in [1, K].
Mat predict_eps(const PriorSpec& spec, const PriorParams& params, const Mat& z_k,
                const Vec* cond, int k, const NoiseSchedule& sched);

// Classifier-free combination; exact at the endpoints w = 0 and w = 1.
Mat cfg_combine(const Mat& eps_uncond, const Mat& eps_cond, double w);

// One drawn training example of the denoising objective.
struct DenoiseItem {
  Mat z0;
  Mat z_k;
  Mat eps;
  int k = 1;
  Vec cond;         // empty when the model is unconditional
  bool dropped = false;
};

std::vector<DenoiseItem> make_denoise_items(const std::vector<Mat>& latents,
                                            const std::vector<Vec>& conds,
                                            const NoiseSchedule& sched,
                                            double drop_prob, Rng& rng);

using EpsFn = std::function<Mat(const DenoiseItem&)>;
// Mean over items of the squared error between eps and the prediction,
// summed over each item's entries.
double denoise_loss(const std::vector<DenoiseItem>& items, const EpsFn& predict);

// Spec operation: draws (k, eps, dropout) internally and evaluates the net.
double score_matching_loss(const PriorSpec& spec, const PriorParams& params,
                           const std::vector<Mat>& latents,
                           const std::vector<Vec>& conds, const NoiseSchedule& sched,
                           Rng& rng);

// Same loss on fixed items, with parameter gradients (for checks/training).
double denoise_loss_grads(const PriorSpec& spec, const PriorParams& params,
                          const std::vector<DenoiseItem>& items, ParamSet* grads);

struct PriorTrainConfig {
  int steps = 3000;
  int batch = 16;
  double lr = 1e-3;
  double ema_decay = 0.999;  // sampling uses the averaged weights
};

struct PriorTrainResult {
  PriorParams params;
  std::vector<std::pair<int, double>> curve;  // (step, batch loss)
};

PriorTrainResult train_prior(const PriorSpec& spec,
                             const std::vector<Mat>& latents,
                             const std::vector<Vec>& conds,
                             const NoiseSchedule& sched,
                             const PriorTrainConfig& cfg, std::uint64_t seed);

// Extra score added during sampling, in score space (gradient of a
// log-density term with respect to z_k).
using ScoreHook = std::function<Mat(const Mat& z_k, int k)>;

struct SampleTraceRow {
  int k;
  double eps_norm;
  double mu_norm;
  double variance;
};
using SampleTrace = std::vector<SampleTraceRow>;
void write_trace_csv(const std::filesystem::path& path, const SampleTrace& trace);

struct SampleOptions {
  double w = 0.0;           // classifier-free guidance scale
  double alpha_temp = 0.5;  // reverse-variance scale in [0, 1)
  const ScoreHook* hook = nullptr;
  const Mat* init = nullptr;  // fixed z_K (otherwise drawn from rng)
  SampleTrace* trace = nullptr;
};

// Ancestral reverse chain k = K..1. The reverse-step variance is the
// forward-step variance beta_k scaled by alpha_temp.
Mat sample_prior(const PriorSpec& spec, const PriorParams& params, const Vec* cond,
                 int seq_len, const NoiseSchedule& sched, const SampleOptions& opts,
                 Rng& rng);

void save_prior(const std::filesystem::path& path, const PriorSpec& spec,
                const PriorParams& params, const Json& extra_meta);
std::pair<PriorSpec, PriorParams> load_prior(const std::filesystem::path& path);

}  // namespace ldp

#endif  // LDP_PRIOR_HPP_
