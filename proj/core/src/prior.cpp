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

#include "ldp/prior.hpp"

#include <cmath>
#include <fstream>

namespace ldp {

using diff::Tape;
using diff::V;

ArchSpec PriorSpec::unet_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kTemporalUnet;
  a.act = Activation::kMish;
  a.io_channels = z_dim;
  a.channels = channels;
  a.kernel = kernel;
  a.gn_groups = gn_groups;
  a.t_embed_dim = t_embed_dim;
  a.cond_dim = cond_dim;
  a.embed_hidden = embed_hidden;
  return a;
}

Json PriorSpec::to_json() const {
  Json j;
  j["z_dim"] = z_dim;
  j["cond_dim"] = cond_dim;
  j["channels"] = channels;
  j["kernel"] = kernel;
  j["gn_groups"] = gn_groups;
  j["t_embed_dim"] = t_embed_dim;
  j["embed_hidden"] = embed_hidden;
  j["drop_prob"] = drop_prob;
  return j;
}

PriorSpec PriorSpec::from_json(const Json& j) {
  PriorSpec s;
  s.z_dim = j.at("z_dim").get<int>();
  s.cond_dim = j.at("cond_dim").get<int>();
  s.channels = j.at("channels").get<std::vector<int>>();
  s.kernel = j.at("kernel").get<int>();
  s.gn_groups = j.at("gn_groups").get<int>();
  s.t_embed_dim = j.at("t_embed_dim").get<int>();
  s.embed_hidden = j.at("embed_hidden").get<int>();
  s.drop_prob = j.at("drop_prob").get<double>();
  return s;
}

PriorParams init_prior(const PriorSpec& spec, std::uint64_t seed) {
  if (spec.drop_prob < 0.0 || spec.drop_prob >= 1.0) {
    throw ConfigError("PriorSpec: drop_prob must be in [0, 1)");
  }
  PriorParams p;
  p.net = build_params(spec.unet_arch(), seed);
  p.drop_prob = spec.drop_prob;
  return p;
}

Mat perturb(const Mat& z0, int k, const Mat& eps, const NoiseSchedule& sched) {
  if (k < 0 || k > sched.K) {
    throw ConfigError("perturb: k out of range [0, " + std::to_string(sched.K) + "]");
  }
  if (eps.rows() != z0.rows() || eps.cols() != z0.cols()) {
    throw ConfigError("perturb: noise shape mismatch");
  }
  return sched.alpha(k) * z0 + sched.sigma(k) * eps;
}

LatentSeq perturb(const LatentSeq& z0, int k, const Mat& eps, const NoiseSchedule& sched) {
  LatentSeq out;
  out.z = perturb(z0.z, k, eps, sched);
  out.s1 = z0.s1;
  out.diffusion_k = k;
  return out;
}

Mat predict_eps(const PriorSpec& spec, const PriorParams& params, const Mat& z_k,
                const Vec* cond, int k, const NoiseSchedule& sched) {
  if (k < 1 || k > sched.K) {
    throw ConfigError("predict_eps: k out of range [1, " + std::to_string(sched.K) + "]");
  }
  NetAux aux;
  aux.timestep = static_cast<double>(k);
  aux.condition = cond;
  return forward_eval(spec.unet_arch(), params.net, z_k, &aux);
}

Mat cfg_combine(const Mat& eps_uncond, const Mat& eps_cond, double w) {
  if (w == 0.0) return eps_uncond;
  if (w == 1.0) return eps_cond;
  return eps_uncond + w * (eps_cond - eps_uncond);
}

std::vector<DenoiseItem> make_denoise_items(const std::vector<Mat>& latents,
                                            const std::vector<Vec>& conds,
                                            const NoiseSchedule& sched,
                                            double drop_prob, Rng& rng) {
  if (!conds.empty() && conds.size() != latents.size()) {
    throw ConfigError("make_denoise_items: conds/latents size mismatch");
  }
  std::vector<DenoiseItem> items;
  items.reserve(latents.size());
  for (std::size_t i = 0; i < latents.size(); ++i) {
    DenoiseItem it;
    it.z0 = latents[i];
    it.k = rng.uniform_int(1, sched.K);
    it.eps = rng.normal_mat(static_cast<int>(it.z0.rows()), static_cast<int>(it.z0.cols()));
    it.z_k = perturb(it.z0, it.k, it.eps, sched);
    if (!conds.empty()) it.cond = conds[i];
    it.dropped = drop_prob > 0.0 && rng.uniform() < drop_prob;
    items.push_back(std::move(it));
  }
  return items;
}

double denoise_loss(const std::vector<DenoiseItem>& items, const EpsFn& predict) {
  if (items.empty()) throw ConfigError("denoise_loss: empty batch");
  double total = 0.0;
  for (const auto& it : items) {
    const Mat pred = predict(it);
    total += (pred - it.eps).array().square().sum();
  }
  return total / static_cast<double>(items.size());
}

double score_matching_loss(const PriorSpec& spec, const PriorParams& params,
                           const std::vector<Mat>& latents,
                           const std::vector<Vec>& conds, const NoiseSchedule& sched,
                           Rng& rng) {
  const auto items = make_denoise_items(latents, conds, sched, params.drop_prob, rng);
  return denoise_loss(items, [&](const DenoiseItem& it) {
    const Vec* c = (it.dropped || it.cond.size() == 0) ? nullptr : &it.cond;
    return predict_eps(spec, params, it.z_k, c, it.k, sched);
  });
}

double denoise_loss_grads(const PriorSpec& spec, const PriorParams& params,
                          const std::vector<DenoiseItem>& items, ParamSet* grads) {
  if (items.empty()) throw ConfigError("denoise_loss_grads: empty batch");
  Tape tape;
  NetBinding net = bind_net(tape, spec.unet_arch(), params.net, /*requires_grad=*/true);
  V total{-1};
  for (const auto& it : items) {
    NetAux aux;
    aux.timestep = static_cast<double>(it.k);
    aux.condition = (it.dropped || it.cond.size() == 0) ? nullptr : &it.cond;
    V pred = net_apply(tape, net, tape.leaf(it.z_k), &aux);
    V err = tape.sum_all(tape.square(tape.sub(pred, tape.leaf(it.eps))));
    total = total.valid() ? tape.add(total, err) : err;
  }
  total = tape.scale(total, 1.0 / static_cast<double>(items.size()));
  const double loss = tape.val(total)(0, 0);
  if (!std::isfinite(loss)) throw NumericError("denoise loss non-finite");
  tape.backward_scalar(total);
  if (grads != nullptr) *grads = grads_from(tape, net);
  return loss;
}

PriorTrainResult train_prior(const PriorSpec& spec,
                             const std::vector<Mat>& latents,
                             const std::vector<Vec>& conds,
                             const NoiseSchedule& sched,
                             const PriorTrainConfig& cfg, std::uint64_t seed) {
  if (latents.empty()) throw ConfigError("train_prior: empty latent dataset");
  PriorTrainResult res;
  res.params = init_prior(spec, derive_seed(seed, "prior-init"));
  ParamSet ema = res.params.net;
  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState st = make_adam(res.params.net, ac);
  Rng rng(derive_seed(seed, "prior-train"));
  const int report_every = std::max(1, cfg.steps / 20);
  for (int step = 1; step <= cfg.steps; ++step) {
    st.cfg.lr = cosine_lr(cfg.lr, step, cfg.steps);
    std::vector<Mat> zs;
    std::vector<Vec> cs;
    zs.reserve(static_cast<std::size_t>(cfg.batch));
    for (int i = 0; i < cfg.batch; ++i) {
      const int idx = rng.uniform_int(0, static_cast<int>(latents.size()) - 1);
      zs.push_back(latents[static_cast<std::size_t>(idx)]);
      if (!conds.empty()) cs.push_back(conds[static_cast<std::size_t>(idx)]);
    }
    const auto items = make_denoise_items(zs, cs, sched, spec.drop_prob, rng);
    ParamSet grads;
    const double loss = denoise_loss_grads(spec, res.params, items, &grads);
    adam_step_inplace(res.params.net, grads, st);
    const double d = cfg.ema_decay;
    for (int i = 0; i < ema.size(); ++i) {
      ema.value(i) = d * ema.value(i) + (1.0 - d) * res.params.net.value(i);
    }
    if (step % report_every == 0 || step == cfg.steps) {
      res.curve.emplace_back(step, loss);
    }
  }
  if (cfg.ema_decay > 0.0) res.params.net = std::move(ema);
  return res;
}

void write_trace_csv(const std::filesystem::path& path, const SampleTrace& trace) {
  HashingWriter w(path);
  w.write_line("k,eps_norm,mu_norm,variance");
  for (const auto& row : trace) {
    w.write_line(std::to_string(row.k) + "," + format_double(row.eps_norm) + "," +
                 format_double(row.mu_norm) + "," + format_double(row.variance));
  }
  w.finish();
}

Mat sample_prior(const PriorSpec& spec, const PriorParams& params, const Vec* cond,
                 int seq_len, const NoiseSchedule& sched, const SampleOptions& opts,
                 Rng& rng) {
  if (!(opts.alpha_temp >= 0.0 && opts.alpha_temp < 1.0)) {
    throw ConfigError("sample_prior: alpha_temp must be in [0, 1)");
  }
  if (opts.w < 0.0) throw ConfigError("sample_prior: w must be >= 0");
  Mat z = opts.init != nullptr ? *opts.init : rng.normal_mat(seq_len, spec.z_dim);
  if (z.rows() != seq_len || z.cols() != spec.z_dim) {
    throw ConfigError("sample_prior: init shape mismatch");
  }
  for (int k = sched.K; k >= 1; --k) {
    Mat eps_hat;
    if (cond == nullptr || spec.cond_dim == 0) {
      eps_hat = predict_eps(spec, params, z, nullptr, k, sched);
    } else if (opts.w == 0.0) {
      // Pure unconditional chain; the conditional branch is never evaluated.
      eps_hat = predict_eps(spec, params, z, nullptr, k, sched);
    } else if (opts.w == 1.0) {
      eps_hat = predict_eps(spec, params, z, cond, k, sched);
    } else {
      const Mat eps_u = predict_eps(spec, params, z, nullptr, k, sched);
      const Mat eps_c = predict_eps(spec, params, z, cond, k, sched);
      eps_hat = cfg_combine(eps_u, eps_c, opts.w);
    }
    if (opts.hook != nullptr && *opts.hook) {
      // Energy guidance enters after the classifier-free combination,
      // converted from score space to eps space.
      eps_hat -= sched.sigma(k) * (*opts.hook)(z, k);
    }
    const double a_k = sched.step_alpha(k);
    const double b_k = sched.step_beta(k);
    Mat mu = (z - (b_k / sched.sigma(k)) * eps_hat) / std::sqrt(a_k);
    const double variance = opts.alpha_temp * b_k;
    if (opts.trace != nullptr) {
      opts.trace->push_back(SampleTraceRow{k, eps_hat.norm(), mu.norm(), variance});
    }
    if (variance > 0.0) {
      Mat noise = rng.normal_mat(seq_len, spec.z_dim);
      z = mu + std::sqrt(variance) * noise;
    } else {
      z = std::move(mu);
    }
    if (!z.allFinite()) {
      throw NumericError("sample_prior: non-finite state at step k=" + std::to_string(k));
    }
  }
  return z;
}

void save_prior(const std::filesystem::path& path, const PriorSpec& spec,
                const PriorParams& params, const Json& extra_meta) {
  Json meta = extra_meta;
  meta["kind"] = "prior";
  meta["prior_spec"] = spec.to_json();
  save_checkpoint(path, {{"theta", &params.net}}, meta);
}

std::pair<PriorSpec, PriorParams> load_prior(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  PriorSpec spec = PriorSpec::from_json(ck.meta.at("prior_spec"));
  PriorParams p;
  p.net = ck.section("theta");
  p.drop_prob = spec.drop_prob;
  return {spec, p};
}

}  // namespace ldp
