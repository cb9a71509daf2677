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

#ifndef LDP_VAE_HPP_
#define LDP_VAE_HPP_

#include <optional>
#include <vector>

#include "ldp/dataset.hpp"
#include "ldp/latent.hpp"
#include "ldp/nets.hpp"

namespace ldp {

// Trajectory VAE over per-timestep tokens. The encoder is a non-causal
// attention stack followed by width-L max pooling; latents are decoded back
// through modular heads: a state trunk, an inverse-dynamics action head on
// consecutive decoded states, and a shared reward/return head.
struct VaeSpec {
  int state_dim = 0;
  int action_dim = 0;
  int T = 0;
  int L = 4;
  int z_dim = 8;
  int d_model = 32;
  int n_heads = 2;
  int enc_blocks = 2;
  int dec_blocks = 2;
  int head_hidden = 64;
  bool with_reward_channels = true;  // false = skill-space tokens (s, a) only
  double kl_weight = 1e-6;

  int token_dim() const { return state_dim + action_dim + (with_reward_channels ? 2 : 0); }
  int n_latents() const { return T / L; }
  void validate() const;

  ArchSpec encoder_arch() const;
  ArchSpec dec_trunk_arch() const;
  ArchSpec action_head_arch() const;
  ArchSpec rr_head_arch() const;
  ArchSpec q_head_arch() const;  // standalone return head (skill mode)

  Json to_json() const;
  static VaeSpec from_json(const Json& j);
};

struct VaeParams {
  ParamSet encoder;     // attention trunk + pooled mean/logvar heads
  ParamSet dec_state;   // input projection + trunk + state output
  ParamSet dec_action;  // inverse dynamics mlp
  ParamSet dec_rr;      // shared reward/return mlp (2 outputs)
  ParamSet q_head;      // skill-mode return regressor (1 output)
  double kl_weight = 1e-6;
};

VaeParams init_vae(const VaeSpec& spec, std::uint64_t seed);

// Tokens are normalized (s, a, r, G) per timestep; s1 is the normalized
// first state used as decoder/prior conditioning.
struct TokenizedTrajectory {
  Mat tokens;  // T x token_dim
  Vec s1;
  int T = 0;
  int L = 0;
};

TokenizedTrajectory tokenize(const Trajectory& tr, const NormStats& norm,
                             const VaeSpec& spec);

// L-aligned slice [start, start + len) of a tokenized trajectory; s1 becomes
// the state at the window start.
TokenizedTrajectory window_of(const TokenizedTrajectory& full, int start, int len,
                              const VaeSpec& spec);
// All L-aligned windows of each trajectory (stride L).
std::vector<TokenizedTrajectory> all_windows(const std::vector<TokenizedTrajectory>& full,
                                             int len, const VaeSpec& spec);

struct EncodeResult {
  Mat mean;    // (T/L) x z_dim
  Mat logvar;  // (T/L) x z_dim
  LatentSeq sample;
};
// rng == nullptr encodes to the posterior mean (evaluation convention).
EncodeResult encode(const VaeSpec& spec, const VaeParams& params,
                    const TokenizedTrajectory& traj, Rng* rng);

struct DecodeResult {
  Mat states;   // T x state_dim (normalized)
  Mat actions;  // T x action_dim (normalized)
  Vec rewards;  // T (normalized; empty in skill mode)
  Vec rtg;      // T (normalized; empty in skill mode)
  Mat tokens;   // reassembled T x token_dim
};
DecodeResult decode(const VaeSpec& spec, const VaeParams& params, const Mat& z,
                    const Vec& s1);

struct VaeLoss {
  double total = 0;
  double recon_mse = 0;
  double kl = 0;
};

// Reparameterized loss with caller-supplied noise (deterministic given eps).
VaeLoss vae_loss(const VaeSpec& spec, const VaeParams& params,
                 const TokenizedTrajectory& traj, const Mat& eps);

struct VaeGrads {
  ParamSet encoder, dec_state, dec_action, dec_rr;
};
VaeLoss vae_loss_grads(const VaeSpec& spec, const VaeParams& params,
                       const TokenizedTrajectory& traj, const Mat& eps,
                       VaeGrads* grads);

struct VaeTrainConfig {
  int steps = 4000;
  int batch = 8;
  double lr = 1e-3;
  double val_fraction = 0.0;  // 0 = validate on the training set
  int eval_every = 500;
  double q_head_lr = 1e-3;  // skill-mode return head
  // 0 trains on full-length episodes. A positive multiple of L trains on
  // random L-aligned windows instead, so the first-state conditioning covers
  // every state the receding-horizon planner will replan from.
  int window = 0;
};

struct VaeMetricsRow {
  int step;
  double train_total, train_recon, train_kl, val_recon;
};

struct VaeTrainResult {
  VaeParams params;
  std::vector<VaeMetricsRow> curve;
  double final_train_recon = 0;
  double final_val_recon = 0;
  // Column order: states, actions, rewards, rtg (last two absent in skill mode).
  Vec per_channel_val_mse;
};

VaeTrainResult train_vae(const VaeSpec& spec, const Dataset& ds,
                         const VaeTrainConfig& cfg, std::uint64_t seed);

// Reconstruction MSE of mean-encoding then decoding, averaged over tokens.
double reconstruction_mse(const VaeSpec& spec, const VaeParams& params,
                          const std::vector<TokenizedTrajectory>& trajs);
Vec per_channel_mse(const VaeSpec& spec, const VaeParams& params,
                    const std::vector<TokenizedTrajectory>& trajs);

// Checkpoint round trip; sections: phi, psi_state, psi_action,
// psi_reward_return (plus q_head in skill mode).
void save_vae(const std::filesystem::path& path, const VaeSpec& spec,
              const VaeParams& params, const Json& extra_meta);
std::pair<VaeSpec, VaeParams> load_vae(const std::filesystem::path& path);

}  // namespace ldp

#endif  // LDP_VAE_HPP_
