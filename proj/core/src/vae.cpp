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

#include "ldp/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ldp {

using diff::Tape;
using diff::V;

void VaeSpec::validate() const {
  if (T <= 0 || L <= 0 || T % L != 0) {
    throw ConfigError("VaeSpec: T must be a positive multiple of L (T=" +
                      std::to_string(T) + ", L=" + std::to_string(L) + ")");
  }
  if (z_dim <= 0 || d_model <= 0) throw ConfigError("VaeSpec: bad dims");
  if (kl_weight <= 0) throw ConfigError("VaeSpec: kl_weight must be > 0");
}

ArchSpec VaeSpec::encoder_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kAttentionEncoder;
  a.act = Activation::kSilu;
  a.token_dim = token_dim();
  a.d_model = d_model;
  a.n_heads = n_heads;
  a.n_blocks = enc_blocks;
  return a;
}

ArchSpec VaeSpec::dec_trunk_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kAttentionEncoder;
  a.act = Activation::kSilu;
  a.token_dim = d_model;  // input projection happens before the trunk
  a.d_model = d_model;
  a.n_heads = n_heads;
  a.n_blocks = dec_blocks;
  return a;
}

ArchSpec VaeSpec::action_head_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kMlp;
  a.act = Activation::kRelu;
  a.in_dim = 2 * state_dim;
  a.hidden = {head_hidden, head_hidden};
  a.out_dim = action_dim;
  return a;
}

ArchSpec VaeSpec::rr_head_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kMlp;
  a.act = Activation::kRelu;
  a.in_dim = state_dim + action_dim;
  a.hidden = {head_hidden, head_hidden, head_hidden};
  a.out_dim = 2;
  return a;
}

ArchSpec VaeSpec::q_head_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kMlp;
  a.act = Activation::kRelu;
  a.in_dim = state_dim + action_dim;
  a.hidden = {head_hidden, head_hidden, head_hidden};
  a.out_dim = 1;
  return a;
}

Json VaeSpec::to_json() const {
  Json j;
  j["state_dim"] = state_dim;
  j["action_dim"] = action_dim;
  j["T"] = T;
  j["L"] = L;
  j["z_dim"] = z_dim;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["enc_blocks"] = enc_blocks;
  j["dec_blocks"] = dec_blocks;
  j["head_hidden"] = head_hidden;
  j["with_reward_channels"] = with_reward_channels;
  j["kl_weight"] = kl_weight;
  return j;
}

VaeSpec VaeSpec::from_json(const Json& j) {
  VaeSpec s;
  s.state_dim = j.at("state_dim").get<int>();
  s.action_dim = j.at("action_dim").get<int>();
  s.T = j.at("T").get<int>();
  s.L = j.at("L").get<int>();
  s.z_dim = j.at("z_dim").get<int>();
  s.d_model = j.at("d_model").get<int>();
  s.n_heads = j.at("n_heads").get<int>();
  s.enc_blocks = j.at("enc_blocks").get<int>();
  s.dec_blocks = j.at("dec_blocks").get<int>();
  s.head_hidden = j.at("head_hidden").get<int>();
  s.with_reward_channels = j.at("with_reward_channels").get<bool>();
  s.kl_weight = j.at("kl_weight").get<double>();
  return s;
}

VaeParams init_vae(const VaeSpec& spec, std::uint64_t seed) {
  spec.validate();
  VaeParams p;
  p.kl_weight = spec.kl_weight;
  p.encoder = build_params(spec.encoder_arch(), derive_seed(seed, "vae-encoder"));
  {
    const int im = p.encoder.add("pool_mean.w", spec.d_model, spec.z_dim);
    glorot_fill(p.encoder.value(im), p.encoder.init_seed, "pool_mean.w");
    p.encoder.add("pool_mean.b", 1, spec.z_dim);
    const int il = p.encoder.add("pool_logvar.w", spec.d_model, spec.z_dim);
    glorot_fill(p.encoder.value(il), p.encoder.init_seed, "pool_logvar.w");
    p.encoder.add("pool_logvar.b", 1, spec.z_dim);
  }
  p.dec_state = build_params(spec.dec_trunk_arch(), derive_seed(seed, "vae-dec-state"));
  {
    const int ii = p.dec_state.add("dec_in.w", spec.z_dim + spec.state_dim, spec.d_model);
    glorot_fill(p.dec_state.value(ii), p.dec_state.init_seed, "dec_in.w");
    p.dec_state.add("dec_in.b", 1, spec.d_model);
    const int io = p.dec_state.add("state_out.w", spec.d_model, spec.state_dim);
    glorot_fill(p.dec_state.value(io), p.dec_state.init_seed, "state_out.w");
    p.dec_state.add("state_out.b", 1, spec.state_dim);
  }
  p.dec_action = build_params(spec.action_head_arch(), derive_seed(seed, "vae-dec-action"));
  if (spec.with_reward_channels) {
    p.dec_rr = build_params(spec.rr_head_arch(), derive_seed(seed, "vae-dec-rr"));
  } else {
    p.q_head = build_params(spec.q_head_arch(), derive_seed(seed, "vae-q-head"));
  }
  return p;
}

TokenizedTrajectory tokenize(const Trajectory& tr, const NormStats& norm,
                             const VaeSpec& spec) {
  spec.validate();
  const int T = static_cast<int>(tr.states.rows());
  if (T != spec.T) {
    throw ConfigError("tokenize: trajectory length " + std::to_string(T) +
                      " does not match spec T " + std::to_string(spec.T));
  }
  TokenizedTrajectory out;
  out.T = T;
  out.L = spec.L;
  out.tokens.resize(T, spec.token_dim());
  for (int t = 0; t < T; ++t) {
    const Vec s = norm.norm_state(tr.states.row(t).transpose());
    const Vec a = norm.norm_action(tr.actions.row(t).transpose());
    out.tokens.block(t, 0, 1, spec.state_dim) = s.transpose();
    out.tokens.block(t, spec.state_dim, 1, spec.action_dim) = a.transpose();
    if (spec.with_reward_channels) {
      out.tokens(t, spec.state_dim + spec.action_dim) = norm.norm_reward(tr.rewards(t));
      out.tokens(t, spec.state_dim + spec.action_dim + 1) = norm.norm_rtg(tr.rtg(t));
    }
  }
  out.s1 = norm.norm_state(tr.states.row(0).transpose());
  return out;
}

TokenizedTrajectory window_of(const TokenizedTrajectory& full, int start, int len,
                              const VaeSpec& spec) {
  if (start % spec.L != 0 || len % spec.L != 0 || start + len > full.T) {
    throw ConfigError("window_of: window must be L-aligned and inside the trajectory");
  }
  TokenizedTrajectory w;
  w.T = len;
  w.L = full.L;
  w.tokens = full.tokens.middleRows(start, len);
  w.s1 = full.tokens.row(start).head(spec.state_dim).transpose();
  return w;
}

std::vector<TokenizedTrajectory> all_windows(const std::vector<TokenizedTrajectory>& full,
                                             int len, const VaeSpec& spec) {
  std::vector<TokenizedTrajectory> out;
  for (const auto& tr : full) {
    for (int start = 0; start + len <= tr.T; start += spec.L) {
      out.push_back(window_of(tr, start, len, spec));
    }
  }
  return out;
}

namespace {

// Shared graph pieces. All builders take bindings so several trajectories can
// coexist on one tape with accumulated parameter gradients.

struct VaeBindings {
  NetBinding enc, dec_state, dec_action, dec_rr;
  bool with_rr = false;
};

VaeBindings bind_vae(Tape& tape, const VaeSpec& spec, const VaeParams& params, bool rg) {
  VaeBindings b;
  b.enc = bind_net(tape, spec.encoder_arch(), params.encoder, rg);
  b.dec_state = bind_net(tape, spec.dec_trunk_arch(), params.dec_state, rg);
  b.dec_action = bind_net(tape, spec.action_head_arch(), params.dec_action, rg);
  if (spec.with_reward_channels) {
    b.dec_rr = bind_net(tape, spec.rr_head_arch(), params.dec_rr, rg);
    b.with_rr = true;
  }
  return b;
}

struct EncodeNodes {
  V mean, logvar;
};

EncodeNodes encode_graph(Tape& t, const VaeSpec& spec, const VaeBindings& b, V tokens) {
  V feats = net_apply(t, b.enc, tokens);
  V pooled = t.max_pool_rows(feats, spec.L);
  EncodeNodes out;
  out.mean = t.add_rowvec(t.matmul(pooled, b.enc["pool_mean.w"]), b.enc["pool_mean.b"]);
  out.logvar =
      t.add_rowvec(t.matmul(pooled, b.enc["pool_logvar.w"]), b.enc["pool_logvar.b"]);
  return out;
}

struct DecodeNodes {
  V states, actions, rewards, rtg, tokens;
};

DecodeNodes decode_graph(Tape& t, const VaeSpec& spec, const VaeBindings& b, V z,
                         const Vec& s1) {
  const int T_out = static_cast<int>(t.val(z).rows()) * spec.L;
  V tiled = t.tile_rows(z, spec.L);
  Mat s1_rows(T_out, spec.state_dim);
  for (int r = 0; r < T_out; ++r) s1_rows.row(r) = s1.transpose();
  V dec_in = t.concat_cols({tiled, t.leaf(s1_rows)});
  V proj = t.add_rowvec(t.matmul(dec_in, b.dec_state["dec_in.w"]), b.dec_state["dec_in.b"]);
  V h = t.add(proj, t.leaf(sinusoid_table(T_out, spec.d_model)));
  V trunk = net_apply(t, b.dec_state, h);
  DecodeNodes out;
  out.states = t.add_rowvec(t.matmul(trunk, b.dec_state["state_out.w"]),
                            b.dec_state["state_out.b"]);
  // Inverse dynamics on consecutive decoded states; the last step pairs the
  // final state with itself.
  V next_states = t.next_row_clamped(out.states);
  out.actions = net_apply(t, b.dec_action, t.concat_cols({out.states, next_states}));
  if (b.with_rr) {
    V rr = net_apply(t, b.dec_rr, t.concat_cols({out.states, out.actions}));
    out.rewards = t.slice_cols(rr, 0, 1);
    out.rtg = t.slice_cols(rr, 1, 1);
    out.tokens = t.concat_cols({out.states, out.actions, out.rewards, out.rtg});
  } else {
    out.tokens = t.concat_cols({out.states, out.actions});
  }
  return out;
}

struct LossNodes {
  V total, recon, kl;
};

LossNodes loss_graph(Tape& t, const VaeSpec& spec, const VaeBindings& b,
                     const Mat& tokens, const Mat& eps) {
  V tok = t.leaf(tokens);
  EncodeNodes enc = encode_graph(t, spec, b, tok);
  // z = mean + exp(logvar / 2) * eps
  V z = t.add(enc.mean, t.mul(t.exp_(t.scale(enc.logvar, 0.5)), t.leaf(eps)));
  const Vec s1 = tokens.row(0).head(spec.state_dim).transpose();
  DecodeNodes dec = decode_graph(t, spec, b, z, s1);
  LossNodes out;
  out.recon = t.mean_all(t.square(t.sub(dec.tokens, tok)));
  // Closed-form KL to a standard normal, summed over latent entries.
  V kl_terms = t.sub(t.add(t.square(enc.mean), t.exp_(enc.logvar)),
                     t.add_scalar(enc.logvar, 1.0));
  out.kl = t.scale(t.sum_all(kl_terms), 0.5);
  out.total = t.add(out.recon, t.scale(out.kl, spec.kl_weight));
  return out;
}

}  // namespace

EncodeResult encode(const VaeSpec& spec, const VaeParams& params,
                    const TokenizedTrajectory& traj, Rng* rng) {
  if (traj.tokens.rows() % spec.L != 0) {
    throw ConfigError("encode: T not divisible by L");
  }
  Tape tape;
  VaeBindings b = bind_vae(tape, spec, params, /*rg=*/false);
  EncodeNodes nodes = encode_graph(tape, spec, b, tape.leaf(traj.tokens));
  EncodeResult out;
  out.mean = tape.val(nodes.mean);
  out.logvar = tape.val(nodes.logvar);
  out.sample.s1 = traj.s1;
  out.sample.diffusion_k = 0;
  if (rng == nullptr) {
    out.sample.z = out.mean;
  } else {
    Mat eps = rng->normal_mat(static_cast<int>(out.mean.rows()),
                              static_cast<int>(out.mean.cols()));
    out.sample.z = out.mean + (0.5 * out.logvar).array().exp().matrix().cwiseProduct(eps);
  }
  return out;
}

DecodeResult decode(const VaeSpec& spec, const VaeParams& params, const Mat& z,
                    const Vec& s1) {
  Tape tape;
  VaeBindings b = bind_vae(tape, spec, params, /*rg=*/false);
  DecodeNodes nodes = decode_graph(tape, spec, b, tape.leaf(z), s1);
  DecodeResult out;
  out.states = tape.val(nodes.states);
  out.actions = tape.val(nodes.actions);
  if (spec.with_reward_channels) {
    out.rewards = tape.val(nodes.rewards).col(0);
    out.rtg = tape.val(nodes.rtg).col(0);
  }
  out.tokens = tape.val(nodes.tokens);
  return out;
}

VaeLoss vae_loss(const VaeSpec& spec, const VaeParams& params,
                 const TokenizedTrajectory& traj, const Mat& eps) {
  Tape tape;
  VaeBindings b = bind_vae(tape, spec, params, /*rg=*/false);
  LossNodes nodes = loss_graph(tape, spec, b, traj.tokens, eps);
  VaeLoss out;
  out.total = tape.val(nodes.total)(0, 0);
  out.recon_mse = tape.val(nodes.recon)(0, 0);
  out.kl = tape.val(nodes.kl)(0, 0);
  if (!std::isfinite(out.total)) {
    throw NumericError("vae_loss: non-finite (recon=" + std::to_string(out.recon_mse) +
                       ", kl=" + std::to_string(out.kl) + ")");
  }
  return out;
}

VaeLoss vae_loss_grads(const VaeSpec& spec, const VaeParams& params,
                       const TokenizedTrajectory& traj, const Mat& eps,
                       VaeGrads* grads) {
  Tape tape;
  VaeBindings b = bind_vae(tape, spec, params, /*rg=*/true);
  LossNodes nodes = loss_graph(tape, spec, b, traj.tokens, eps);
  VaeLoss out;
  out.total = tape.val(nodes.total)(0, 0);
  out.recon_mse = tape.val(nodes.recon)(0, 0);
  out.kl = tape.val(nodes.kl)(0, 0);
  if (!std::isfinite(out.total)) {
    throw NumericError("vae_loss: non-finite (recon=" + std::to_string(out.recon_mse) +
                       ", kl=" + std::to_string(out.kl) + ")");
  }
  tape.backward_scalar(nodes.total);
  if (grads != nullptr) {
    grads->encoder = grads_from(tape, b.enc);
    grads->dec_state = grads_from(tape, b.dec_state);
    grads->dec_action = grads_from(tape, b.dec_action);
    if (spec.with_reward_channels) grads->dec_rr = grads_from(tape, b.dec_rr);
  }
  return out;
}

double reconstruction_mse(const VaeSpec& spec, const VaeParams& params,
                          const std::vector<TokenizedTrajectory>& trajs) {
  double total = 0.0;
  for (const auto& tr : trajs) {
    EncodeResult enc = encode(spec, params, tr, nullptr);
    DecodeResult dec = decode(spec, params, enc.mean, tr.s1);
    total += (dec.tokens - tr.tokens).array().square().mean();
  }
  return total / static_cast<double>(trajs.size());
}

Vec per_channel_mse(const VaeSpec& spec, const VaeParams& params,
                    const std::vector<TokenizedTrajectory>& trajs) {
  const int groups = spec.with_reward_channels ? 4 : 2;
  Vec acc = Vec::Zero(groups);
  for (const auto& tr : trajs) {
    EncodeResult enc = encode(spec, params, tr, nullptr);
    DecodeResult dec = decode(spec, params, enc.mean, tr.s1);
    const Mat err = (dec.tokens - tr.tokens).array().square();
    acc(0) += err.leftCols(spec.state_dim).mean();
    acc(1) += err.middleCols(spec.state_dim, spec.action_dim).mean();
    if (groups == 4) {
      acc(2) += err.col(spec.state_dim + spec.action_dim).mean();
      acc(3) += err.col(spec.state_dim + spec.action_dim + 1).mean();
    }
  }
  return acc / static_cast<double>(trajs.size());
}

VaeTrainResult train_vae(const VaeSpec& spec, const Dataset& ds,
                         const VaeTrainConfig& cfg, std::uint64_t seed) {
  spec.validate();
  if (ds.trajectories.empty()) throw ConfigError("train_vae: empty dataset");

  std::vector<TokenizedTrajectory> all;
  all.reserve(ds.trajectories.size());
  for (const auto& tr : ds.trajectories) all.push_back(tokenize(tr, ds.norm, spec));

  // Deterministic split; val_fraction 0 validates on the training set.
  std::vector<int> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, "vae-split"));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(split_rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  const int n_val = std::min(static_cast<int>(all.size()) - 1,
                             static_cast<int>(std::lround(cfg.val_fraction * all.size())));
  std::vector<TokenizedTrajectory> train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (static_cast<int>(i) < n_val) val_set.push_back(all[static_cast<std::size_t>(order[i])]);
    else train_set.push_back(all[static_cast<std::size_t>(order[i])]);
  }
  if (val_set.empty()) val_set = train_set;

  const int window = cfg.window;
  if (window != 0 &&
      (window < spec.L || window % spec.L != 0 || window > spec.T)) {
    throw ConfigError("train_vae: window must be an L-aligned length within T");
  }

  VaeTrainResult res;
  res.params = init_vae(spec, derive_seed(seed, "vae-init"));
  VaeParams& p = res.params;

  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState st_enc = make_adam(p.encoder, ac);
  AdamState st_dst = make_adam(p.dec_state, ac);
  AdamState st_act = make_adam(p.dec_action, ac);
  AdamState st_rr = spec.with_reward_channels ? make_adam(p.dec_rr, ac) : AdamState{};

  Rng batch_rng(derive_seed(seed, "vae-batch"));
  Rng eps_rng(derive_seed(seed, "vae-eps"));
  const int item_len = window > 0 ? window : spec.T;
  const int n_latent_rows = item_len / spec.L;
  const std::vector<TokenizedTrajectory> val_items =
      window > 0 ? all_windows(val_set, window, spec) : val_set;

  for (int step = 1; step <= cfg.steps; ++step) {
    const double lr_now = cosine_lr(cfg.lr, step, cfg.steps);
    st_enc.cfg.lr = st_dst.cfg.lr = st_act.cfg.lr = st_rr.cfg.lr = lr_now;
    Tape tape;
    VaeBindings b = bind_vae(tape, spec, p, /*rg=*/true);
    V total{-1}, recon{-1}, kl{-1};
    for (int i = 0; i < cfg.batch; ++i) {
      const auto& source =
          train_set[static_cast<std::size_t>(batch_rng.uniform_int(0, static_cast<int>(train_set.size()) - 1))];
      Mat tokens;
      if (window > 0) {
        const int max_off = (spec.T - window) / spec.L;
        const int off = spec.L * batch_rng.uniform_int(0, max_off);
        tokens = source.tokens.middleRows(off, window);
      } else {
        tokens = source.tokens;
      }
      const Mat eps = eps_rng.normal_mat(n_latent_rows, spec.z_dim);
      LossNodes nodes = loss_graph(tape, spec, b, tokens, eps);
      total = total.valid() ? tape.add(total, nodes.total) : nodes.total;
      recon = recon.valid() ? tape.add(recon, nodes.recon) : nodes.recon;
      kl = kl.valid() ? tape.add(kl, nodes.kl) : nodes.kl;
    }
    total = tape.scale(total, 1.0 / cfg.batch);
    const double loss_val = tape.val(total)(0, 0);
    if (!std::isfinite(loss_val)) {
      throw NumericError("train_vae: non-finite loss at step " + std::to_string(step));
    }
    tape.backward_scalar(total);
    adam_step_inplace(p.encoder, grads_from(tape, b.enc), st_enc);
    adam_step_inplace(p.dec_state, grads_from(tape, b.dec_state), st_dst);
    adam_step_inplace(p.dec_action, grads_from(tape, b.dec_action), st_act);
    if (spec.with_reward_channels) {
      adam_step_inplace(p.dec_rr, grads_from(tape, b.dec_rr), st_rr);
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      VaeMetricsRow row;
      row.step = step;
      row.train_total = loss_val;
      row.train_recon = tape.val(recon)(0, 0) / cfg.batch;
      row.train_kl = tape.val(kl)(0, 0) / cfg.batch;
      row.val_recon = reconstruction_mse(spec, p, val_items);
      res.curve.push_back(row);
    }
  }

  // Skill mode trains the standalone return head on ground-truth (s, a) -> G.
  if (!spec.with_reward_channels) {
    AdamConfig qac;
    qac.lr = cfg.q_head_lr;
    AdamState st_q = make_adam(p.q_head, qac);
    Rng q_rng(derive_seed(seed, "vae-qhead"));
    const ArchSpec q_arch = spec.q_head_arch();
    const int qsteps = cfg.steps;
    for (int step = 1; step <= qsteps; ++step) {
      st_q.cfg.lr = cosine_lr(cfg.q_head_lr, step, qsteps);
      Tape tape;
      NetBinding qb = bind_net(tape, q_arch, p.q_head, true);
      V loss{-1};
      for (int i = 0; i < cfg.batch; ++i) {
        const int ti = q_rng.uniform_int(0, static_cast<int>(ds.trajectories.size()) - 1);
        const auto& tr = ds.trajectories[static_cast<std::size_t>(ti)];
        const int t = q_rng.uniform_int(0, spec.T - 1);
        Mat in(1, spec.state_dim + spec.action_dim);
        in.block(0, 0, 1, spec.state_dim) =
            ds.norm.norm_state(tr.states.row(t).transpose()).transpose();
        in.block(0, spec.state_dim, 1, spec.action_dim) =
            ds.norm.norm_action(tr.actions.row(t).transpose()).transpose();
        V pred = net_apply(tape, qb, tape.leaf(in));
        V target = tape.leaf(Mat::Constant(1, 1, ds.norm.norm_rtg(tr.rtg(t))));
        V err = tape.sum_all(tape.square(tape.sub(pred, target)));
        loss = loss.valid() ? tape.add(loss, err) : err;
      }
      loss = tape.scale(loss, 1.0 / cfg.batch);
      tape.backward_scalar(loss);
      adam_step_inplace(p.q_head, grads_from(tape, qb), st_q);
    }
  }

  const std::vector<TokenizedTrajectory> train_items =
      window > 0 ? all_windows(train_set, window, spec) : train_set;
  res.final_train_recon = reconstruction_mse(spec, p, train_items);
  res.final_val_recon = reconstruction_mse(spec, p, val_items);
  res.per_channel_val_mse = per_channel_mse(spec, p, val_items);
  return res;
}

void save_vae(const std::filesystem::path& path, const VaeSpec& spec,
              const VaeParams& params, const Json& extra_meta) {
  Json meta = extra_meta;
  meta["kind"] = "vae";
  meta["vae_spec"] = spec.to_json();
  std::vector<std::pair<std::string, const ParamSet*>> sections = {
      {"phi", &params.encoder},
      {"psi_state", &params.dec_state},
      {"psi_action", &params.dec_action},
  };
  if (spec.with_reward_channels) {
    sections.emplace_back("psi_reward_return", &params.dec_rr);
  } else {
    sections.emplace_back("q_head", &params.q_head);
  }
  save_checkpoint(path, sections, meta);
}

std::pair<VaeSpec, VaeParams> load_vae(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  VaeSpec spec = VaeSpec::from_json(ck.meta.at("vae_spec"));
  VaeParams p;
  p.kl_weight = spec.kl_weight;
  p.encoder = ck.section("phi");
  p.dec_state = ck.section("psi_state");
  p.dec_action = ck.section("psi_action");
  if (spec.with_reward_channels) {
    p.dec_rr = ck.section("psi_reward_return");
  } else {
    p.q_head = ck.section("q_head");
  }
  return {spec, p};
}

}  // namespace ldp
