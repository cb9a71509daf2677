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

#include "ldp/energy.hpp"

#include <cmath>
#include <fstream>

namespace ldp {

using diff::Tape;
using diff::V;

namespace {

constexpr double kExpClamp = 40.0;

}  // namespace

ArchSpec EnergySpec::mlp_arch() const {
  ArchSpec a;
  a.family = ArchFamily::kMlp;
  a.act = Activation::kSilu;
  a.in_dim = flat_dim() + cond_embed + t_embed_dim;
  a.hidden = std::vector<int>(static_cast<std::size_t>(std::max(1, layers - 1)), hidden);
  a.out_dim = 1;
  return a;
}

Json EnergySpec::to_json() const {
  Json j;
  j["seq_len"] = seq_len;
  j["z_dim"] = z_dim;
  j["cond_dim"] = cond_dim;
  j["cond_embed"] = cond_embed;
  j["t_embed_dim"] = t_embed_dim;
  j["hidden"] = hidden;
  j["layers"] = layers;
  return j;
}

EnergySpec EnergySpec::from_json(const Json& j) {
  EnergySpec s;
  s.seq_len = j.at("seq_len").get<int>();
  s.z_dim = j.at("z_dim").get<int>();
  s.cond_dim = j.at("cond_dim").get<int>();
  s.cond_embed = j.at("cond_embed").get<int>();
  s.t_embed_dim = j.at("t_embed_dim").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.layers = j.at("layers").get<int>();
  return s;
}

EnergyParams init_energy(const EnergySpec& spec, std::uint64_t seed, double beta) {
  if (beta < 0.0) throw ConfigError("init_energy: beta must be >= 0");
  EnergyParams p;
  p.net = build_params(spec.mlp_arch(), seed);
  const int iw = p.net.add("cond_proj.w", spec.cond_dim, spec.cond_embed);
  glorot_fill(p.net.value(iw), seed, "cond_proj.w");
  p.net.add("cond_proj.b", 1, spec.cond_embed);
  p.beta = beta;
  return p;
}

namespace {

// Builds f(z_k, s1, k) on a tape. z_in must be (seq_len x z_dim).
V energy_graph(Tape& t, const EnergySpec& spec, const NetBinding& net, V z_in,
               const Vec& s1, int k) {
  if (t.val(z_in).rows() != spec.seq_len || t.val(z_in).cols() != spec.z_dim) {
    throw std::invalid_argument("energy: expected " + std::to_string(spec.seq_len) + "x" +
                                std::to_string(spec.z_dim) + " latent input");
  }
  if (s1.size() != spec.cond_dim) {
    throw std::invalid_argument("energy: condition dim mismatch");
  }
  V flat = t.flatten_row(z_in);
  V cond = t.add_rowvec(t.matmul(t.leaf(s1.transpose()), net["cond_proj.w"]),
                        net["cond_proj.b"]);
  V kfeat = t.leaf(sinusoid_row(static_cast<double>(k), spec.t_embed_dim));
  V in = t.concat_cols({flat, cond, kfeat});
  return net_apply(t, net, in);
}

}  // namespace

double energy_value(const EnergySpec& spec, const EnergyParams& params, const Mat& z_k,
                    const Vec& s1, int k) {
  Tape t;
  NetBinding net = bind_net(t, spec.mlp_arch(), params.net, false);
  return t.val(energy_graph(t, spec, net, t.leaf(z_k), s1, k))(0, 0);
}

Mat energy_input_grad(const EnergySpec& spec, const EnergyParams& params,
                      const Mat& z_k, const Vec& s1, int k) {
  Tape t;
  NetBinding net = bind_net(t, spec.mlp_arch(), params.net, false);
  V z_in = t.leaf(z_k, /*requires_grad=*/true);
  V out = energy_graph(t, spec, net, z_in, s1, k);
  t.backward_scalar(out);
  Mat g = t.grad(z_in);
  if (!g.allFinite()) throw NumericError("energy_input_grad: non-finite gradient");
  return g;
}

double energy_from_returns(const Vec& rtg_normalized, const NormStats& norm) {
  double total = 0.0;
  for (long t = 0; t < rtg_normalized.size(); ++t) {
    total += norm.denorm_rtg(rtg_normalized(t));
  }
  return -total;
}

double trajectory_energy(const VaeSpec& vspec, const VaeParams& vparams,
                         const NormStats& norm, const Mat& z0, const Vec& s1) {
  const DecodeResult dec = decode(vspec, vparams, z0, s1);
  if (dec.rtg.size() == 0) {
    throw ConfigError("trajectory_energy: decoder has no return head");
  }
  return energy_from_returns(dec.rtg, norm);
}

std::vector<SupportSet> gen_support(const PriorSpec& pspec, const PriorParams& prior,
                                    const std::vector<Vec>& initial_states, int seq_len,
                                    const NoiseSchedule& sched,
                                    const SupportGenConfig& cfg, const EnergyFn& energy,
                                    std::uint64_t seed) {
  if (cfg.M < 1) throw ConfigError("gen_support: M must be >= 1");
  std::vector<SupportSet> sets(initial_states.size());
  parallel_for(static_cast<int>(initial_states.size()), [&](int i) {
    const Vec& s1 = initial_states[static_cast<std::size_t>(i)];
    SupportSet set;
    set.s1 = s1;
    set.beta = cfg.beta;
    set.members.reserve(static_cast<std::size_t>(cfg.M));
    set.energies.resize(cfg.M);
    Rng rng(derive_seed(seed, "support", static_cast<std::uint64_t>(i)));
    for (int m = 0; m < cfg.M; ++m) {
      SampleOptions opts;
      opts.w = cfg.w;
      opts.alpha_temp = cfg.alpha_temp;
      Mat z0 = sample_prior(pspec, prior, pspec.cond_dim > 0 ? &s1 : nullptr, seq_len,
                            sched, opts, rng);
      set.energies(m) = energy(z0, s1);
      if (!std::isfinite(set.energies(m))) {
        throw NumericError("gen_support: non-finite member energy");
      }
      set.members.push_back(std::move(z0));
    }
    sets[static_cast<std::size_t>(i)] = std::move(set);
  });
  return sets;
}

std::vector<ContrastiveItem> make_contrastive_items(const std::vector<SupportSet>& sets,
                                                    const NoiseSchedule& sched, Rng& rng,
                                                    bool shared_noise) {
  std::vector<ContrastiveItem> items;
  items.reserve(sets.size());
  for (const auto& set : sets) {
    ContrastiveItem it;
    it.s1 = set.s1;
    it.energies = set.energies;
    it.k = rng.uniform_int(1, sched.K);
    Mat shared;
    if (shared_noise && !set.members.empty()) {
      shared = rng.normal_mat(static_cast<int>(set.members[0].rows()),
                              static_cast<int>(set.members[0].cols()));
    }
    for (const auto& m : set.members) {
      const Mat eps = shared_noise
                          ? shared
                          : rng.normal_mat(static_cast<int>(m.rows()),
                                           static_cast<int>(m.cols()));
      it.z_k.push_back(perturb(m, it.k, eps, sched));
    }
    items.push_back(std::move(it));
  }
  return items;
}

Vec contrastive_targets(const Vec& energies, double beta) {
  Vec logits = -beta * energies;
  const double m = logits.maxCoeff();
  Vec w = (logits.array() - m).exp();
  return w / w.sum();
}

double contrastive_loss(const std::vector<ContrastiveItem>& items, double beta,
                        const EnergyEvalFn& f) {
  if (items.empty()) throw ConfigError("contrastive_loss: empty batch");
  double total = 0.0;
  std::size_t idx = 0;
  for (const auto& it : items) {
    const int M = static_cast<int>(it.z_k.size());
    const Vec targets = contrastive_targets(it.energies, beta);
    Vec logits(M);
    for (int m = 0; m < M; ++m) logits(m) = f(it.z_k[static_cast<std::size_t>(m)], it.s1, it.k);
    const double lmax = logits.maxCoeff();
    const double lse = lmax + std::log((logits.array() - lmax).exp().sum());
    const double loss = lse - targets.dot(logits);
    if (!std::isfinite(loss)) {
      throw NumericError("contrastive_loss: non-finite loss in set " + std::to_string(idx));
    }
    total += loss;
    ++idx;
  }
  return total / static_cast<double>(items.size());
}

double contrastive_loss(const EnergySpec& spec, const EnergyParams& params,
                        const std::vector<SupportSet>& sets, const NoiseSchedule& sched,
                        double beta, Rng& rng, bool shared_noise) {
  const auto items = make_contrastive_items(sets, sched, rng, shared_noise);
  return contrastive_loss(items, beta, [&](const Mat& z_k, const Vec& s1, int k) {
    return energy_value(spec, params, z_k, s1, k);
  });
}

double contrastive_loss_grads(const EnergySpec& spec, const EnergyParams& params,
                              const std::vector<ContrastiveItem>& items, double beta,
                              ParamSet* grads) {
  if (items.empty()) throw ConfigError("contrastive_loss_grads: empty batch");
  Tape t;
  NetBinding net = bind_net(t, spec.mlp_arch(), params.net, true);
  V total{-1};
  for (const auto& it : items) {
    const int M = static_cast<int>(it.z_k.size());
    const Vec targets = contrastive_targets(it.energies, beta);
    std::vector<V> logit_nodes;
    logit_nodes.reserve(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      logit_nodes.push_back(
          energy_graph(t, spec, net, t.leaf(it.z_k[static_cast<std::size_t>(m)]), it.s1, it.k));
    }
    V logits = M == 1 ? logit_nodes[0] : t.concat_cols(logit_nodes);
    V lse = t.row_logsumexp(logits);
    Mat tgt_row = targets.transpose();
    V weighted = t.sum_all(t.mul(logits, t.leaf(tgt_row)));
    V loss = t.sub(lse, weighted);
    total = total.valid() ? t.add(total, loss) : loss;
  }
  total = t.scale(total, 1.0 / static_cast<double>(items.size()));
  const double loss = t.val(total)(0, 0);
  if (!std::isfinite(loss)) throw NumericError("contrastive_loss_grads: non-finite");
  t.backward_scalar(total);
  if (grads != nullptr) *grads = grads_from(t, net);
  return loss;
}

EnergyScale fit_energy_scale(const std::vector<SupportSet>& sets) {
  double sum = 0.0, sq = 0.0;
  long n = 0;
  for (const auto& set : sets) {
    for (long i = 0; i < set.energies.size(); ++i) {
      sum += set.energies(i);
      sq += set.energies(i) * set.energies(i);
      ++n;
    }
  }
  EnergyScale s;
  if (n == 0) return s;
  s.mean = sum / static_cast<double>(n);
  s.scale = std::max(std::sqrt(std::max(0.0, sq / n - s.mean * s.mean)), 1e-9);
  return s;
}

namespace {

std::vector<SupportSet> standardized(const std::vector<SupportSet>& sets,
                                     const EnergyScale& scale) {
  std::vector<SupportSet> out = sets;
  for (auto& set : out) {
    for (long i = 0; i < set.energies.size(); ++i) {
      set.energies(i) = scale.apply(set.energies(i));
    }
  }
  return out;
}

}  // namespace

EnergyTrainResult train_energy(const EnergySpec& spec,
                               const std::vector<SupportSet>& sets,
                               const NoiseSchedule& sched, double beta,
                               const EnergyTrainConfig& cfg, std::uint64_t seed) {
  if (sets.empty()) throw ConfigError("train_energy: empty support store");
  const std::vector<SupportSet> pool =
      cfg.normalize_energies ? standardized(sets, fit_energy_scale(sets)) : sets;
  EnergyTrainResult res;
  res.params = init_energy(spec, derive_seed(seed, "energy-init"), beta);
  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState st = make_adam(res.params.net, ac);
  Rng rng(derive_seed(seed, "energy-train"));
  const int report_every = std::max(1, cfg.steps / 20);
  for (int step = 1; step <= cfg.steps; ++step) {
    st.cfg.lr = cosine_lr(cfg.lr, step, cfg.steps);
    std::vector<SupportSet> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch));
    for (int i = 0; i < cfg.batch; ++i) {
      batch.push_back(pool[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
    }
    const auto items = make_contrastive_items(batch, sched, rng, cfg.shared_noise);
    ParamSet grads;
    const double loss = contrastive_loss_grads(spec, res.params, items, beta, &grads);
    adam_step_inplace(res.params.net, grads, st);
    if (step % report_every == 0 || step == cfg.steps) res.curve.emplace_back(step, loss);
  }
  return res;
}

std::vector<EnergyRegItem> make_regression_items(const std::vector<SupportSet>& sets,
                                                 const NoiseSchedule& sched, Rng& rng) {
  std::vector<EnergyRegItem> items;
  for (const auto& set : sets) {
    for (std::size_t m = 0; m < set.members.size(); ++m) {
      EnergyRegItem it;
      it.s1 = set.s1;
      it.k = rng.uniform_int(1, sched.K);
      const Mat eps = rng.normal_mat(static_cast<int>(set.members[m].rows()),
                                     static_cast<int>(set.members[m].cols()));
      it.z_k = perturb(set.members[m], it.k, eps, sched);
      it.target = set.energies(static_cast<int>(m));
      items.push_back(std::move(it));
    }
  }
  return items;
}

double mse_energy_loss(const std::vector<EnergyRegItem>& items, const EnergyEvalFn& f) {
  if (items.empty()) throw ConfigError("mse_energy_loss: empty batch");
  double total = 0.0;
  for (const auto& it : items) {
    const double d = f(it.z_k, it.s1, it.k) - it.target;
    total += d * d;
  }
  return total / static_cast<double>(items.size());
}

double mse_energy_loss_grads(const EnergySpec& spec, const EnergyParams& params,
                             const std::vector<EnergyRegItem>& items, ParamSet* grads) {
  if (items.empty()) throw ConfigError("mse_energy_loss_grads: empty batch");
  Tape t;
  NetBinding net = bind_net(t, spec.mlp_arch(), params.net, true);
  V total{-1};
  for (const auto& it : items) {
    V pred = energy_graph(t, spec, net, t.leaf(it.z_k), it.s1, it.k);
    V err = t.square(t.add_scalar(pred, -it.target));
    total = total.valid() ? t.add(total, err) : err;
  }
  total = t.scale(total, 1.0 / static_cast<double>(items.size()));
  const double loss = t.val(total)(0, 0);
  t.backward_scalar(total);
  if (grads != nullptr) *grads = grads_from(t, net);
  return loss;
}

namespace {

inline double clamped_exp(double x, long* clamp_events) {
  if (x > kExpClamp) {
    if (clamp_events != nullptr) ++*clamp_events;
    x = kExpClamp;
  }
  return std::exp(x);
}

}  // namespace

double emse_energy_loss(const std::vector<EnergyRegItem>& items, double beta,
                        const EnergyEvalFn& f, long* clamp_events) {
  if (items.empty()) throw ConfigError("emse_energy_loss: empty batch");
  double total = 0.0;
  for (const auto& it : items) {
    const double pred = clamped_exp(f(it.z_k, it.s1, it.k), clamp_events);
    const double tgt = clamped_exp(beta * it.target, clamp_events);
    total += (pred - tgt) * (pred - tgt);
  }
  return total / static_cast<double>(items.size());
}

double emse_energy_loss_grads(const EnergySpec& spec, const EnergyParams& params,
                              const std::vector<EnergyRegItem>& items, double beta,
                              ParamSet* grads, long* clamp_events) {
  if (items.empty()) throw ConfigError("emse_energy_loss_grads: empty batch");
  Tape t;
  NetBinding net = bind_net(t, spec.mlp_arch(), params.net, true);
  V total{-1};
  for (const auto& it : items) {
    V pred = energy_graph(t, spec, net, t.leaf(it.z_k), it.s1, it.k);
    const double raw = t.val(pred)(0, 0);
    if (raw > kExpClamp) {
      // Clamp in value and gradient; the exp would overflow otherwise.
      if (clamp_events != nullptr) ++*clamp_events;
      pred = t.leaf(Mat::Constant(1, 1, kExpClamp));
    }
    const double tgt = clamped_exp(beta * it.target, clamp_events);
    V err = t.square(t.add_scalar(t.exp_(pred), -tgt));
    total = total.valid() ? t.add(total, err) : err;
  }
  total = t.scale(total, 1.0 / static_cast<double>(items.size()));
  const double loss = t.val(total)(0, 0);
  t.backward_scalar(total);
  if (grads != nullptr) *grads = grads_from(t, net);
  return loss;
}

EnergyTrainResult train_energy_regression(const EnergySpec& spec,
                                          const std::vector<SupportSet>& sets,
                                          const NoiseSchedule& sched, double beta,
                                          bool exponential, const EnergyTrainConfig& cfg,
                                          std::uint64_t seed) {
  if (sets.empty()) throw ConfigError("train_energy_regression: empty support store");
  const std::vector<SupportSet> pool =
      cfg.normalize_energies ? standardized(sets, fit_energy_scale(sets)) : sets;
  EnergyTrainResult res;
  res.params = init_energy(spec, derive_seed(seed, "energy-reg-init"), beta);
  AdamConfig ac;
  ac.lr = cfg.lr;
  AdamState st = make_adam(res.params.net, ac);
  Rng rng(derive_seed(seed, "energy-reg-train"));
  const int report_every = std::max(1, cfg.steps / 20);
  for (int step = 1; step <= cfg.steps; ++step) {
    st.cfg.lr = cosine_lr(cfg.lr, step, cfg.steps);
    std::vector<SupportSet> batch;
    for (int i = 0; i < cfg.batch; ++i) {
      batch.push_back(pool[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
    }
    const auto items = make_regression_items(batch, sched, rng);
    ParamSet grads;
    const double loss =
        exponential ? emse_energy_loss_grads(spec, res.params, items, beta, &grads, nullptr)
                    : mse_energy_loss_grads(spec, res.params, items, &grads);
    adam_step_inplace(res.params.net, grads, st);
    if (step % report_every == 0 || step == cfg.steps) res.curve.emplace_back(step, loss);
  }
  return res;
}

Mat guided_score_from(const Mat& eps_tilde, double sigma_k, const Mat& energy_grad) {
  return (-1.0 / sigma_k) * eps_tilde + energy_grad;
}

Mat guided_score(const PriorSpec& pspec, const PriorParams& prior,
                 const EnergySpec& espec, const EnergyParams& energy, const Mat& z_k,
                 const Vec& s1, int k, const NoiseSchedule& sched, double w) {
  if (k < 1 || k > sched.K) {
    throw ConfigError("guided_score: k out of range [1, " + std::to_string(sched.K) + "]");
  }
  Mat eps_tilde;
  if (pspec.cond_dim == 0 || w == 0.0) {
    eps_tilde = predict_eps(pspec, prior, z_k, nullptr, k, sched);
  } else if (w == 1.0) {
    eps_tilde = predict_eps(pspec, prior, z_k, &s1, k, sched);
  } else {
    eps_tilde = cfg_combine(predict_eps(pspec, prior, z_k, nullptr, k, sched),
                            predict_eps(pspec, prior, z_k, &s1, k, sched), w);
  }
  const Mat grad = energy_input_grad(espec, energy, z_k, s1, k);
  Mat score = guided_score_from(eps_tilde, sched.sigma(k), grad);
  if (!score.allFinite()) throw NumericError("guided_score: non-finite");
  return score;
}

ScoreHook make_energy_hook(const EnergySpec& spec, const EnergyParams& params,
                           const Vec& s1, double scale) {
  // Captures copies; the hook may outlive the caller's frame.
  return [spec, params, s1, scale](const Mat& z_k, int k) {
    return Mat(scale * energy_input_grad(spec, params, z_k, s1, k));
  };
}

void save_support_store(const std::filesystem::path& dir,
                        const std::vector<SupportSet>& sets,
                        const std::string& prior_hash) {
  std::filesystem::create_directories(dir);
  HashingWriter w(dir / "support.jsonl");
  for (const auto& set : sets) {
    std::string line = "{\"s1\":" + json_vec(set.s1);
    line += ",\"beta\":" + format_double(set.beta);
    line += ",\"energies\":" + json_vec(set.energies);
    line += ",\"latents\":[";
    for (std::size_t m = 0; m < set.members.size(); ++m) {
      if (m) line += ",";
      line += json_mat_rows(set.members[m]);
    }
    line += "],\"prior_sha256\":\"" + prior_hash + "\"}";
    w.write_line(line);
  }
  const std::string data_hash = w.finish();
  Json manifest;
  manifest["format"] = "ldp-support-v1";
  manifest["n_states"] = sets.size();
  manifest["prior_sha256"] = prior_hash;
  manifest["data_sha256"] = data_hash;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<SupportSet> load_support_store(const std::filesystem::path& dir,
                                           const std::string& expected_prior_hash) {
  const Json manifest = load_json_file(dir / "manifest.json");
  if (manifest.value("format", "") != "ldp-support-v1") {
    throw ArtifactError("unknown support store format: " + dir.string());
  }
  if (sha256_file_hex((dir / "support.jsonl").string()) !=
      manifest.at("data_sha256").get<std::string>()) {
    throw ArtifactError("support store content hash mismatch: " + dir.string());
  }
  std::ifstream in(dir / "support.jsonl");
  if (!in) throw ArtifactError("cannot open support store: " + dir.string());
  std::vector<SupportSet> sets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    if (j.at("prior_sha256").get<std::string>() != expected_prior_hash) {
      throw ArtifactError("support store was generated from a different prior checkpoint");
    }
    SupportSet set;
    set.s1 = parse_vec(j.at("s1"));
    set.beta = j.at("beta").get<double>();
    set.energies = parse_vec(j.at("energies"));
    for (const Json& jm : j.at("latents")) set.members.push_back(parse_mat_rows(jm));
    sets.push_back(std::move(set));
  }
  return sets;
}

void save_energy(const std::filesystem::path& path, const EnergySpec& spec,
                 const EnergyParams& params, const Json& extra_meta) {
  Json meta = extra_meta;
  meta["kind"] = "energy";
  meta["energy_spec"] = spec.to_json();
  meta["beta"] = params.beta;
  save_checkpoint(path, {{"eta", &params.net}}, meta);
}

std::pair<EnergySpec, EnergyParams> load_energy(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  EnergySpec spec = EnergySpec::from_json(ck.meta.at("energy_spec"));
  EnergyParams p;
  p.net = ck.section("eta");
  p.beta = ck.meta.at("beta").get<double>();
  return {spec, p};
}

}  // namespace ldp
